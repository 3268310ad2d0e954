#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cfb/decode.hpp"
#include "cfb/rng.hpp"
#include "cfb/scripted_backend.hpp"

namespace cfb {

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) out.push_back(std::move(word));
  return out;
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// LCS F-measure over whitespace tokens, no stemming. With P = L/|c| and
// R = L/|r|, 2PR/(P+R) reduces to 2L/(|c|+|r|), which is evaluated directly.
inline double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = split_words(candidate);
  const auto r = split_words(reference);
  const std::size_t lcs = lcs_length(c, r);
  if (lcs == 0) return 0.0;
  return 2.0 * static_cast<double>(lcs) / static_cast<double>(c.size() + r.size());
}

inline double support_rate(const TokenSequence& generated, const SupportSet& support) {
  if (generated.empty()) return 0.0;
  std::size_t hits = 0;
  for (TokenId id : generated.tokens) hits += support.contains(id) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(generated.size());
}

inline std::string normalize_answer(std::string_view text) {
  std::string out;
  for (const auto& w : split_words(text)) {
    if (!out.empty()) out += ' ';
    for (char ch : w) out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  return out;
}

// Equality after lowercasing and collapsing whitespace.
inline bool exact_match(std::string_view candidate, std::string_view reference) {
  return normalize_answer(candidate) == normalize_answer(reference);
}

struct EvalExample {
  std::string id;
  std::string context;
  std::string question;
  std::string reference;

  friend bool operator==(const EvalExample&, const EvalExample&) = default;
};

struct ExampleMetrics {
  double rouge_l = 0.0;
  double support_rate = 0.0;
  bool exact_match = false;
  std::string generated;
  std::optional<std::string> error;
};

struct AggregateMetrics {
  std::size_t examples = 0;
  std::size_t scored = 0;
  std::size_t failed = 0;
  double rouge_l = 0.0;
  double support_rate = 0.0;
  double exact_match = 0.0;
  bool empty = true;  // no scored examples; the means are placeholders
};

struct MetricReport {
  std::map<std::string, ExampleMetrics> per_example;
  AggregateMetrics aggregate;
  BoostConfig config_echo;
};

// Seed for example `index` of a run seeded with `run_seed`.
inline std::uint64_t example_seed(std::uint64_t run_seed, std::size_t index) {
  return Rng(run_seed).split(index).next_u64();
}

inline void check_dataset(const std::vector<EvalExample>& dataset) {
  std::set<std::string> seen;
  for (const auto& ex : dataset) {
    if (!seen.insert(ex.id).second) throw DatasetError("duplicate id '" + ex.id + "'");
    if (split_words(ex.context).empty()) throw DatasetError("example '" + ex.id + "' has an empty context");
  }
}

inline MetricReport run_eval(const std::vector<EvalExample>& dataset, const TemplateRegistry& templates,
                             const std::string& template_id, ModelBackend& backend, const BoostConfig& config) {
  const BoostConfig cfg = validate_config(config);
  check_dataset(dataset);
  MetricReport report;
  report.config_echo = cfg;
  report.aggregate.examples = dataset.size();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const EvalExample& ex = dataset[i];
    ExampleMetrics m;
    try {
      BoostConfig run_cfg = cfg;
      run_cfg.seed = example_seed(cfg.seed, i);
      const GenerationResult out = generate({ex.context, ex.question, template_id}, templates, backend, run_cfg);
      m.generated = out.text;
      m.rouge_l = rouge_l(out.text, ex.reference);
      m.support_rate = support_rate(out.generated_tokens, out.support);
      m.exact_match = exact_match(out.text, ex.reference);
    } catch (const Error& e) {
      m.error = e.what();
    }
    report.per_example.emplace(ex.id, std::move(m));
  }

  AggregateMetrics& agg = report.aggregate;
  for (const auto& [id, m] : report.per_example) {
    if (m.error) {
      ++agg.failed;
      continue;
    }
    ++agg.scored;
    agg.rouge_l += m.rouge_l;
    agg.support_rate += m.support_rate;
    agg.exact_match += m.exact_match ? 1.0 : 0.0;
  }
  agg.empty = agg.scored == 0;
  if (!agg.empty) {
    const double n = static_cast<double>(agg.scored);
    agg.rouge_l /= n;
    agg.support_rate /= n;
    agg.exact_match /= n;
  }
  return report;
}

inline std::string format_fixed(double value, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  return buf;
}

// Aligned-column text rendering of a report.
inline std::string render_report_table(const MetricReport& report) {
  std::size_t id_width = std::string("aggregate").size();
  for (const auto& [id, m] : report.per_example) id_width = std::max(id_width, id.size());
  std::ostringstream out;
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  out << pad("id", id_width) << "  rouge_l  support_rate  exact_match  status\n";
  for (const auto& [id, m] : report.per_example) {
    out << pad(id, id_width) << "  " << pad(format_fixed(m.rouge_l), 7) << "  " << pad(format_fixed(m.support_rate), 12)
        << "  " << pad(m.exact_match ? "1" : "0", 11) << "  " << (m.error ? "error: " + *m.error : "ok") << "\n";
  }
  const auto& a = report.aggregate;
  out << pad("aggregate", id_width) << "  " << pad(format_fixed(a.rouge_l), 7) << "  "
      << pad(format_fixed(a.support_rate), 12) << "  " << pad(format_fixed(a.exact_match), 11) << "  " << a.scored
      << " scored, " << a.failed << " failed" << (a.empty ? " (no scored examples)" : "") << "\n";
  out << "support_rate and exact_match are desk-scale proxies for model-based faithfulness metrics\n";
  return out.str();
}

// A two-answer knowledge conflict: the model prior prefers the parametric
// answer by `gap` logits while the context states the other answer.
struct ConflictCase {
  ScriptedModelSpec spec;
  EvalExample example;
  double expected_flip_delta = 0.0;
  std::string context_answer;
  std::string parametric_answer;
};

inline constexpr double kConflictFloorLogit = -20.0;

inline std::vector<ConflictCase> generate_conflict_suite(std::size_t n, double gap_lo, double gap_hi,
                                                         std::uint64_t seed) {
  if (!(gap_lo > 0.0) || !(gap_hi >= gap_lo)) throw InputError("gap range must be positive and ordered");
  static const std::vector<std::string> kPlaces = {"paris", "tokyo",  "london", "madrid", "rome",
                                                  "berlin", "vienna", "oslo",   "lima",   "cairo"};
  struct Frame {
    std::string context;  // "@" marks the answer slot
    std::string question;
  };
  static const std::vector<Frame> kFrames = {
      {"the next summer games will be hosted in @ this year", "where will the next summer games be hosted"},
      {"the new treaty was signed in @ last spring", "where was the new treaty signed"},
      {"the company moved its headquarters to @ in may", "where did the company move its headquarters"},
      {"the festival this year takes place in @", "where does the festival take place this year"},
  };

  Rng rng(seed);
  std::vector<ConflictCase> suite;
  suite.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double gap = rng.uniform(gap_lo, gap_hi);
    const Frame& frame = kFrames[rng.next_u64() % kFrames.size()];
    const std::size_t a = rng.next_u64() % kPlaces.size();
    const std::size_t b = (a + 1 + rng.next_u64() % (kPlaces.size() - 1)) % kPlaces.size();
    const std::string& parametric = kPlaces[a];
    const std::string& contextual = kPlaces[b];

    std::string context;
    for (const auto& w : split_words(frame.context)) {
      if (!context.empty()) context += ' ';
      context += w == "@" ? contextual : w;
    }

    // Parametric answer precedes the context answer in id order, so an exact
    // tie resolves to the parametric answer and the flip needs delta > gap.
    Vocabulary vocab({"</s>", "Context:", "Question:", "Answer:", parametric, contextual});
    for (const auto& w : split_words(context)) vocab.add(w);
    for (const auto& w : split_words(frame.question)) vocab.add(w);
    const std::size_t v = vocab.size();
    const std::size_t p_id = index_of(vocab.at(parametric));
    const std::size_t c_id = index_of(vocab.at(contextual));

    ScriptedModelSpec spec;
    spec.vocab = vocab.words();
    std::vector<double> answer(v, kConflictFloorLogit);
    answer[p_id] = gap;
    answer[c_id] = 0.0;
    std::vector<double> stop(v, kConflictFloorLogit);
    stop[0] = 0.0;
    std::vector<double> query(v, kConflictFloorLogit);
    query[p_id] = gap + 2.0;
    query[c_id] = -2.0;
    spec.query_logits = query;

    // Context occupies prompt positions 1..len (after "Context:"); attention
    // leans on the answer occurrence.
    const auto context_words = split_words(context);
    AttentionRow attention;
    for (std::size_t k = 0; k < context_words.size(); ++k)
      attention[1 + k] = context_words[k] == contextual ? 0.5 : 0.5 / static_cast<double>(context_words.size());
    spec.steps = {{answer, attention}, {stop, attention}};

    std::vector<std::vector<double>> table(v, std::vector<double>(4));
    for (auto& row : table)
      for (double& x : row) x = rng.uniform(0.05, 1.0);
    spec.embeddings = table;

    char id[32];
    std::snprintf(id, sizeof id, "conflict-%04zu", i);
    suite.push_back({std::move(spec), {id, context, frame.question, contextual}, gap, contextual, parametric});
  }
  return suite;
}

}  // namespace cfb

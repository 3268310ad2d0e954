#pragma once

#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfb/cost_model.hpp"
#include "cfb/decode.hpp"
#include "cfb/eval.hpp"
#include "cfb/scripted_backend.hpp"

namespace cfb {

using json = nlohmann::json;

// Full contents of a config document: the boost parameters plus named prompt
// templates and the template to use.
struct ConfigDocument {
  BoostConfig boost;
  TemplateRegistry templates;
  std::string template_id = TemplateRegistry::kDefaultId;
};

namespace detail {

template <typename T>
T get_field(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key, "missing or wrongly typed");
  }
}

inline std::string id_key(TokenId id) { return std::to_string(index_of(id)); }

inline TokenId parse_id_key(const std::string& key) {
  std::size_t used = 0;
  const unsigned long v = std::stoul(key, &used);
  if (used != key.size()) throw InputError("bad token id key '" + key + "'");
  return token(v);
}

inline json step_to_json(const StepRecord& s, const ModelBackend* backend) {
  json boost = json::object();
  for (const auto& [w, b] : s.boost_vector_sparse) boost[id_key(w)] = b;
  json j = {{"step_index", s.step_index},
            {"divergence_used", s.divergence_used ? json(*s.divergence_used) : json(nullptr)},
            {"delta_effective", s.delta_effective},
            {"boosted_token_count", s.boosted_token_count},
            {"boost", boost},
            {"chosen_token", index_of(s.chosen_token)},
            {"chosen_prob", s.chosen_prob}};
  if (backend) j["chosen_text"] = backend->token_text(s.chosen_token);
  return j;
}

inline StepRecord step_from_json(const json& j) {
  StepRecord s;
  s.step_index = j.at("step_index").get<std::size_t>();
  if (!j.at("divergence_used").is_null()) s.divergence_used = j.at("divergence_used").get<double>();
  s.delta_effective = j.at("delta_effective").get<double>();
  s.boosted_token_count = j.at("boosted_token_count").get<std::size_t>();
  for (const auto& [k, v] : j.at("boost").items()) s.boost_vector_sparse[parse_id_key(k)] = v.get<double>();
  s.chosen_token = token(j.at("chosen_token").get<std::size_t>());
  s.chosen_prob = j.at("chosen_prob").get<double>();
  return s;
}

}  // namespace detail

inline json config_to_json(const BoostConfig& c) {
  return {{"mode", std::string(to_string(c.mode))},
          {"delta", c.delta},
          {"delta_min", c.delta_min},
          {"delta_max", c.delta_max},
          {"lambda1", c.lambda1},
          {"lambda2", c.lambda2},
          {"top_p", c.top_p},
          {"sampler", std::string(to_string(c.sampler))},
          {"max_new_tokens", c.max_new_tokens},
          {"seed", c.seed},
          {"divergence_per_step", c.divergence_per_step},
          {"clamp_semantic_scores", c.clamp_semantic_scores}};
}

// Unknown keys are rejected so that typos surface as errors.
inline ConfigDocument parse_config(const json& j) {
  using detail::get_field;
  if (!j.is_object()) throw ConfigError("config", "top level must be an object");
  ConfigDocument doc;
  BoostConfig& c = doc.boost;
  for (const auto& [key, value] : j.items()) {
    if (key == "mode") c.mode = parse_mode(get_field<std::string>(j, key));
    else if (key == "delta") c.delta = get_field<double>(j, key);
    else if (key == "delta_min") c.delta_min = get_field<double>(j, key);
    else if (key == "delta_max") c.delta_max = get_field<double>(j, key);
    else if (key == "lambda1") c.lambda1 = get_field<double>(j, key);
    else if (key == "lambda2") c.lambda2 = get_field<double>(j, key);
    else if (key == "top_p") c.top_p = get_field<double>(j, key);
    else if (key == "sampler") c.sampler = parse_sampler(get_field<std::string>(j, key));
    else if (key == "max_new_tokens") {
      if (!value.is_number_integer() || value.get<long long>() < 0)
        throw ConfigError(key, "must be a non-negative integer");
      c.max_new_tokens = value.get<std::size_t>();
    } else if (key == "seed") {
      if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<long long>() >= 0))
        throw ConfigError(key, "must be an unsigned integer");
      c.seed = value.get<std::uint64_t>();
    } else if (key == "divergence_per_step") c.divergence_per_step = get_field<bool>(j, key);
    else if (key == "clamp_semantic_scores") c.clamp_semantic_scores = get_field<bool>(j, key);
    else if (key == "templates") {
      if (!value.is_object()) throw ConfigError(key, "must be an object of id -> template");
      for (const auto& [id, text] : value.items()) {
        if (!text.is_string()) throw ConfigError(key, "template '" + id + "' must be a string");
        doc.templates.add(id, text.get<std::string>());
      }
    } else if (key == "template") doc.template_id = get_field<std::string>(j, key);
    else throw ConfigError(key, "unknown field");
  }
  validate_config(c);
  doc.templates.at(doc.template_id);
  return doc;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline ConfigDocument load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline json scripted_spec_to_json(const ScriptedModelSpec& spec) {
  json steps = json::array();
  for (const auto& s : spec.steps) {
    json step = {{"logits", s.logits}};
    if (s.attention) {
      json row = json::object();
      for (const auto& [p, a] : *s.attention) row[std::to_string(p)] = a;
      step["attention"] = row;
    }
    steps.push_back(step);
  }
  json j = {{"vocab", spec.vocab},
            {"steps", steps},
            {"eos", spec.eos},
            {"prompt_end", spec.prompt_end},
            {"context_marker", spec.context_marker}};
  if (spec.embeddings) j["embeddings"] = *spec.embeddings;
  if (spec.query_logits) j["query_logits"] = *spec.query_logits;
  return j;
}

inline ScriptedModelSpec parse_scripted_spec(const json& j) {
  static const std::set<std::string> kKeys = {"vocab",      "steps",          "embeddings", "query_logits",
                                              "eos",        "prompt_end",     "context_marker"};
  if (!j.is_object()) throw InputError("scripted spec must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!kKeys.count(key)) throw InputError("scripted spec has unknown field '" + key + "'");
  try {
    ScriptedModelSpec spec;
    spec.vocab = j.at("vocab").get<std::vector<std::string>>();
    for (const auto& s : j.at("steps")) {
      ScriptedStep step;
      step.logits = s.at("logits").get<std::vector<double>>();
      if (s.contains("attention")) {
        AttentionRow row;
        for (const auto& [p, a] : s.at("attention").items()) row[std::stoul(p)] = a.get<double>();
        step.attention = std::move(row);
      }
      spec.steps.push_back(std::move(step));
    }
    if (j.contains("embeddings")) spec.embeddings = j.at("embeddings").get<std::vector<std::vector<double>>>();
    if (j.contains("query_logits")) spec.query_logits = j.at("query_logits").get<std::vector<double>>();
    if (j.contains("eos")) spec.eos = j.at("eos").get<std::string>();
    if (j.contains("prompt_end")) spec.prompt_end = j.at("prompt_end").get<std::string>();
    if (j.contains("context_marker")) spec.context_marker = j.at("context_marker").get<std::string>();
    return spec;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed scripted spec: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw InputError("attention keys must be position indices");
  }
}

inline json generation_to_json(const GenerationResult& r, const ModelBackend& backend, const BoostConfig& cfg) {
  auto ids = [](const TokenSequence& seq) {
    json out = json::array();
    for (TokenId id : seq.tokens) out.push_back(index_of(id));
    return out;
  };
  json trace = json::array();
  for (const auto& s : r.trace) trace.push_back(detail::step_to_json(s, &backend));

  json members = json::array();
  json positions = json::object();
  json text = json::object();
  for (TokenId w : r.support.members) {
    members.push_back(index_of(w));
    positions[detail::id_key(w)] = r.support.positions.at(w);
    text[detail::id_key(w)] = backend.token_text(w);
  }
  json semantic = nullptr;
  if (r.support.semantic_score) {
    semantic = json::object();
    for (const auto& [w, s] : *r.support.semantic_score) semantic[detail::id_key(w)] = s;
  }

  return {{"text", r.text},
          {"stop_reason", std::string(to_string(r.stop_reason))},
          {"generated_tokens", ids(r.generated_tokens)},
          {"prompt", ids(r.prompt)},
          {"span", {{"start_pos", r.span.start_pos}, {"length", r.span.length}}},
          {"support",
           {{"members", members}, {"positions", positions}, {"token_text", text}, {"semantic_score", semantic}}},
          {"reading", r.reading ? json{{"jsd", r.reading->jsd}, {"delta_adaptive", r.reading->delta_adaptive}}
                                : json(nullptr)},
          {"trace", trace},
          {"terminal_step", r.terminal_step ? detail::step_to_json(*r.terminal_step, &backend) : json(nullptr)},
          {"config", config_to_json(cfg)}};
}

// The parts of a saved generation needed to inspect its trace.
struct TraceDocument {
  std::string text;
  std::string stop_reason;
  std::vector<StepRecord> trace;
  std::optional<StepRecord> terminal_step;
  std::map<TokenId, std::string> token_text;
  std::map<TokenId, std::string> chosen_text;
};

inline TraceDocument parse_trace(const json& j) {
  try {
    TraceDocument doc;
    doc.text = j.at("text").get<std::string>();
    doc.stop_reason = j.at("stop_reason").get<std::string>();
    auto read_step = [&](const json& s) {
      StepRecord rec = detail::step_from_json(s);
      if (s.contains("chosen_text")) doc.chosen_text[rec.chosen_token] = s.at("chosen_text").get<std::string>();
      return rec;
    };
    for (const auto& s : j.at("trace")) doc.trace.push_back(read_step(s));
    if (!j.at("terminal_step").is_null()) doc.terminal_step = read_step(j.at("terminal_step"));
    for (const auto& [k, v] : j.at("support").at("token_text").items())
      doc.token_text[detail::parse_id_key(k)] = v.get<std::string>();
    return doc;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed trace document: ") + e.what());
  }
}

// One JSON object per line with string keys id, context, question, reference.
// Blank lines are skipped; line numbers in errors are 1-based.
inline std::vector<EvalExample> parse_dataset_jsonl(std::istream& in) {
  std::vector<EvalExample> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw DatasetError(where + ": not valid JSON");
    }
    if (!j.is_object()) throw DatasetError(where + ": expected an object");
    EvalExample ex;
    for (auto [key, field] : {std::pair{"id", &ex.id}, std::pair{"context", &ex.context},
                              std::pair{"question", &ex.question}, std::pair{"reference", &ex.reference}}) {
      if (!j.contains(key) || !j.at(key).is_string())
        throw DatasetError(where + ": missing string field '" + key + "'");
      *field = j.at(key).get<std::string>();
    }
    if (j.size() != 4) throw DatasetError(where + ": unexpected extra fields");
    if (split_words(ex.context).empty()) throw DatasetError(where + ": empty context");
    if (!seen.insert(ex.id).second) throw DatasetError(where + ": duplicate id '" + ex.id + "'");
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<EvalExample> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open '" + path + "'");
  return parse_dataset_jsonl(in);
}

inline json report_to_json(const MetricReport& r) {
  json per = json::object();
  for (const auto& [id, m] : r.per_example) {
    per[id] = {{"rouge_l", m.rouge_l},
               {"support_rate", m.support_rate},
               {"exact_match", m.exact_match},
               {"generated", m.generated},
               {"error", m.error ? json(*m.error) : json(nullptr)}};
  }
  const auto& a = r.aggregate;
  return {{"per_example", per},
          {"aggregate",
           {{"examples", a.examples},
            {"scored", a.scored},
            {"failed", a.failed},
            {"empty", a.empty},
            {"rouge_l", a.rouge_l},
            {"support_rate", a.support_rate},
            {"exact_match", a.exact_match}}},
          {"config_echo", config_to_json(r.config_echo)},
          {"proxy_metrics_note",
           "support_rate and exact_match are desk-scale proxies for model-based faithfulness metrics"}};
}

}  // namespace cfb

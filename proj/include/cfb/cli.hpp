#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfb/bigram_backend.hpp"
#include "cfb/cost_model.hpp"
#include "cfb/decode.hpp"
#include "cfb/eval.hpp"
#include "cfb/json_io.hpp"
#include "cfb/scripted_backend.hpp"

namespace cfb::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUserError = 2, kBackendError = 3, kInternalError = 4 };

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

inline LogLevel log_level_from_env() {
  const char* raw = std::getenv("CFB_LOG_LEVEL");
  const std::string v = raw ? raw : "error";
  if (v == "debug") return LogLevel::Debug;
  if (v == "info") return LogLevel::Info;
  return LogLevel::Error;
}

class Logger {
 public:
  explicit Logger(std::ostream& sink) : sink_(sink), level_(log_level_from_env()) {}
  void error(const std::string& m) const { sink_ << "error: " << m << "\n"; }
  void warn(const std::string& m) const { sink_ << "warning: " << m << "\n"; }
  void info(const std::string& m) const {
    if (level_ >= LogLevel::Info) sink_ << "info: " << m << "\n";
  }
  void debug(const std::string& m) const {
    if (level_ >= LogLevel::Debug) sink_ << "debug: " << m << "\n";
  }

 private:
  std::ostream& sink_;
  LogLevel level_;
};

// Options shared by the commands that build a backend and a config.
struct CommonOptions {
  std::string config_path;
  std::string backend = "";
  std::optional<std::string> mode;
  std::optional<double> delta, delta_min, delta_max, top_p;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> sampler;
  std::optional<std::size_t> max_new_tokens;
  std::optional<std::string> template_id;
  std::size_t bigram_dim = 16;
  std::uint64_t bigram_seed = 42;
  double bigram_smoothing = 1.0;
  std::string out_dir = "cfb_out";
};

struct BackendSpec {
  enum class Kind { None, Scripted, Bigram } kind = Kind::None;
  std::string path;
};

inline BackendSpec parse_backend_flag(const std::string& flag) {
  if (flag.empty()) return {};
  const auto colon = flag.find(':');
  if (colon == std::string::npos) throw InputError("--backend expects scripted:PATH or bigram:CORPUS");
  const std::string kind = flag.substr(0, colon);
  const std::string path = flag.substr(colon + 1);
  if (kind == "scripted") return {BackendSpec::Kind::Scripted, path};
  if (kind == "bigram") return {BackendSpec::Kind::Bigram, path};
  throw InputError("unknown backend kind '" + kind + "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << content;
}

inline std::vector<std::string> template_words(const TemplateRegistry& templates) {
  std::vector<std::string> words;
  for (const auto& [id, t] : templates.all()) {
    for (auto& w : split_words(t.text()))
      if (w != PromptTemplate::kContextSlot && w != PromptTemplate::kQuerySlot) words.push_back(std::move(w));
  }
  return words;
}

inline std::unique_ptr<ModelBackend> make_backend(const BackendSpec& spec, const CommonOptions& opts,
                                                  const TemplateRegistry& templates) {
  switch (spec.kind) {
    case BackendSpec::Kind::Scripted:
      return std::make_unique<ScriptedModel>(parse_scripted_spec(read_json_file(spec.path)));
    case BackendSpec::Kind::Bigram: {
      BigramOptions bo;
      bo.embedding_dim = opts.bigram_dim;
      bo.seed = opts.bigram_seed;
      bo.smoothing = opts.bigram_smoothing;
      bo.extra_tokens = template_words(templates);
      return build_bigram_backend(read_text_file(spec.path), bo);
    }
    case BackendSpec::Kind::None: break;
  }
  throw InputError("--backend is required");
}

inline ConfigDocument resolve_config(const CommonOptions& o) {
  ConfigDocument doc = o.config_path.empty() ? ConfigDocument{} : load_config(o.config_path);
  BoostConfig& c = doc.boost;
  if (o.mode) c.mode = parse_mode(*o.mode);
  if (o.delta) c.delta = *o.delta;
  if (o.delta_min) c.delta_min = *o.delta_min;
  if (o.delta_max) c.delta_max = *o.delta_max;
  if (o.top_p) c.top_p = *o.top_p;
  if (o.seed) c.seed = *o.seed;
  if (o.sampler) c.sampler = parse_sampler(*o.sampler);
  if (o.max_new_tokens) c.max_new_tokens = *o.max_new_tokens;
  if (o.template_id) doc.template_id = *o.template_id;
  validate_config(c);
  doc.templates.at(doc.template_id);
  return doc;
}

inline void add_common(CLI::App* cmd, CommonOptions& o, bool with_backend = true) {
  cmd->add_option("--config", o.config_path, "JSON config document");
  if (with_backend) {
    cmd->add_option("--backend", o.backend, "scripted:PATH | bigram:CORPUS");
    cmd->add_option("--mode", o.mode, "static|context|token");
    cmd->add_option("--delta", o.delta, "static boost");
    cmd->add_option("--delta-min", o.delta_min, "adaptive boost lower bound");
    cmd->add_option("--delta-max", o.delta_max, "adaptive boost upper bound");
    cmd->add_option("--top-p", o.top_p, "nucleus mass");
    cmd->add_option("--seed", o.seed, "sampling seed");
    cmd->add_option("--sampler", o.sampler, "top_p|greedy");
    cmd->add_option("--max-new-tokens", o.max_new_tokens, "generation limit");
    cmd->add_option("--template", o.template_id, "prompt template id");
    cmd->add_option("--bigram-dim", o.bigram_dim, "bigram embedding dimension");
    cmd->add_option("--bigram-seed", o.bigram_seed, "bigram embedding seed");
    cmd->add_option("--bigram-smoothing", o.bigram_smoothing, "bigram additive smoothing");
  }
  cmd->add_option("--out", o.out_dir, "output directory");
}

inline std::string now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json backend_manifest(const CommonOptions& o) {
  const BackendSpec spec = parse_backend_flag(o.backend);
  switch (spec.kind) {
    case BackendSpec::Kind::Scripted: return {{"scripted", {{"path", spec.path}}}};
    case BackendSpec::Kind::Bigram:
      return {{"bigram",
               {{"corpus", spec.path}, {"dim", o.bigram_dim}, {"seed", o.bigram_seed}, {"smoothing", o.bigram_smoothing}}}};
    case BackendSpec::Kind::None: break;
  }
  return nullptr;
}

inline std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InputError("bad grid value '" + item + "'");
    }
  }
  return out;
}

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err, std::optional<std::string> timestamp)
      : out_(out), err_(err), log_(err), timestamp_(std::move(timestamp)) {}

  int run(const std::vector<std::string>& args) {
    args_ = args;
    CLI::App app{"Context-fidelity boosting decoder"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    CommonOptions common;
    std::string context, question, input_file;
    auto* gen = app.add_subcommand("generate", "generate one answer with boosted context fidelity");
    add_common(gen, common);
    gen->add_option("--context", context, "context passage");
    gen->add_option("--question", question, "query");
    gen->add_option("--input", input_file, "JSON file with context and question");

    std::string dataset, format = "table";
    auto* ev = app.add_subcommand("eval", "evaluate a JSONL dataset");
    add_common(ev, common);
    ev->add_option("--dataset", dataset, "JSONL dataset")->required();
    ev->add_option("--format", format, "table|json")->check(CLI::IsMember({"table", "json"}));

    std::string grid, range_grid;
    std::size_t runs = 1;
    auto* sw = app.add_subcommand("sweep", "sweep boost values over a dataset");
    add_common(sw, common);
    sw->add_option("--dataset", dataset, "JSONL dataset")->required();
    auto* g1 = sw->add_option("--grid", grid, "comma-separated delta values");
    auto* g2 = sw->add_option("--range-grid", range_grid, "comma-separated MIN:MAX pairs");
    g1->excludes(g2);
    sw->add_option("--runs", runs, "runs per grid point with seeds seed..seed+runs-1")->check(CLI::PositiveNumber);

    std::size_t n = 100;
    double gap_min = 0.5, gap_max = 3.0, offset = 0.1;
    std::uint64_t suite_seed = 13;
    auto* cf = app.add_subcommand("conflict", "run the synthetic context-vs-prior conflict suite");
    add_common(cf, common, false);
    cf->add_option("--n", n, "number of cases")->check(CLI::PositiveNumber);
    cf->add_option("--gap-min", gap_min, "smallest prior-over-context logit gap");
    cf->add_option("--gap-max", gap_max, "largest prior-over-context logit gap");
    cf->add_option("--offset", offset, "boost offset around each case's gap");
    cf->add_option("--suite-seed", suite_seed, "suite generator seed");

    CostScenario scenario;
    auto* fl = app.add_subcommand("flops", "print the per-step FLOPS estimate table");
    fl->add_option("--batch", scenario.batch)->check(CLI::PositiveNumber);
    fl->add_option("--seq-len", scenario.seq_len)->check(CLI::PositiveNumber);
    fl->add_option("--hidden", scenario.hidden)->check(CLI::PositiveNumber);
    fl->add_option("--layers", scenario.layers)->check(CLI::PositiveNumber);
    fl->add_option("--context-len", scenario.context_len)->check(CLI::PositiveNumber);
    fl->add_option("--vocab", scenario.vocab)->check(CLI::PositiveNumber);
    fl->add_option("--out", common.out_dir, "output directory");

    std::string trace_path;
    auto* it = app.add_subcommand("inspect-trace", "pretty-print a saved generation trace");
    it->add_option("trace", trace_path, "result JSON written by generate")->required();
    it->add_option("--out", common.out_dir, "output directory");

    std::string manifest_path;
    auto* rr = app.add_subcommand("rerun", "re-execute a run from its manifest");
    rr->add_option("manifest", manifest_path, "manifest.json")->required();

    try {
      std::vector<std::string> reversed(args.rbegin(), args.rend());
      app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
      out_ << app.help();
      return kOk;
    } catch (const CLI::ParseError& e) {
      log_.error(e.what());
      return kUserError;
    }

    try {
      if (*gen) return cmd_generate(common, context, question, input_file);
      if (*ev) return cmd_eval(common, dataset, format);
      if (*sw) return cmd_sweep(common, dataset, grid, range_grid, runs);
      if (*cf) return cmd_conflict(common, n, gap_min, gap_max, offset, suite_seed);
      if (*fl) return cmd_flops(common, scenario);
      if (*it) return cmd_inspect_trace(common, trace_path);
      if (*rr) return cmd_rerun(manifest_path);
    } catch (const Error& e) {
      log_.error(e.what());
      switch (e.category()) {
        case ErrorCategory::User: return kUserError;
        case ErrorCategory::Backend: return kBackendError;
        case ErrorCategory::Internal: return kInternalError;
      }
    } catch (const std::exception& e) {
      log_.error(std::string("internal: ") + e.what());
      return kInternalError;
    }
    return kInternalError;
  }

 private:
  void write_manifest(const std::string& command, const CommonOptions& o, bool with_backend) {
    json manifest = {{"command", command},
                     {"argv", args_},
                     {"cwd", fs::current_path().string()},
                     {"config_path", o.config_path.empty() ? json(nullptr) : json(o.config_path)},
                     {"backend_spec", with_backend ? backend_manifest(o) : json(nullptr)},
                     {"output_dir", o.out_dir},
                     {"timestamp", timestamp_ ? *timestamp_ : now_iso8601()}};
    write_text_file(fs::path(o.out_dir) / "manifest.json", manifest.dump(2) + "\n");
  }

  struct Setup {
    ConfigDocument doc;
    std::unique_ptr<ModelBackend> backend;
  };

  Setup setup(const CommonOptions& o) {
    Setup s;
    s.doc = resolve_config(o);
    s.backend = make_backend(parse_backend_flag(o.backend), o, s.doc.templates);
    log_.info("mode " + std::string(to_string(s.doc.boost.mode)) + ", vocabulary " +
              std::to_string(s.backend->capabilities().vocab_size));
    return s;
  }

  int cmd_generate(const CommonOptions& o, std::string context, std::string question, const std::string& input) {
    Setup s = setup(o);
    if (!input.empty()) {
      const json j = read_json_file(input);
      try {
        context = j.at("context").get<std::string>();
        question = j.value("question", std::string());
      } catch (const json::exception& e) {
        throw InputError("input file needs a string 'context': " + std::string(e.what()));
      }
    }
    const PromptParts parts{context, question, s.doc.template_id};
    const GenerationResult r = generate(parts, s.doc.templates, *s.backend, s.doc.boost);
    write_text_file(fs::path(o.out_dir) / "result.json",
                    generation_to_json(r, *s.backend, s.doc.boost).dump(2) + "\n");
    write_manifest("generate", o, true);
    out_ << r.text << "\n";
    return kOk;
  }

  int cmd_eval(const CommonOptions& o, const std::string& dataset_path, const std::string& format) {
    Setup s = setup(o);
    const auto dataset = load_dataset(dataset_path);
    if (dataset.empty()) log_.warn("dataset '" + dataset_path + "' has no examples");
    const MetricReport report = run_eval(dataset, s.doc.templates, s.doc.template_id, *s.backend, s.doc.boost);
    const std::string as_json = report_to_json(report).dump(2) + "\n";
    const std::string as_table = render_report_table(report);
    write_text_file(fs::path(o.out_dir) / "report.json", as_json);
    write_text_file(fs::path(o.out_dir) / "report.txt", as_table);
    write_manifest("eval", o, true);
    out_ << (format == "json" ? as_json : as_table);
    return kOk;
  }

  int cmd_sweep(const CommonOptions& o, const std::string& dataset_path, const std::string& grid,
                const std::string& range_grid, std::size_t runs) {
    Setup s = setup(o);
    const auto dataset = load_dataset(dataset_path);
    struct Point {
      double lo, hi;
    };
    std::vector<Point> points;
    if (!range_grid.empty()) {
      std::stringstream in(range_grid);
      std::string item;
      while (std::getline(in, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw InputError("range grid entries must be MIN:MAX");
        const auto lo = parse_grid(item.substr(0, colon));
        const auto hi = parse_grid(item.substr(colon + 1));
        points.push_back({lo.at(0), hi.at(0)});
      }
    } else {
      for (double d : parse_grid(grid)) points.push_back({d, d});
    }
    if (points.size() < 2) throw InputError("a sweep needs at least two grid points");

    std::ostringstream csv;
    csv << (range_grid.empty() ? "delta" : "delta_min,delta_max") << ",rouge_l,support_rate,exact_match\n";
    for (const Point& p : points) {
      BoostConfig cfg = s.doc.boost;
      if (range_grid.empty()) cfg.delta = p.lo;
      if (!range_grid.empty() || cfg.mode != BoostMode::Static) {
        cfg.delta_min = p.lo;
        cfg.delta_max = p.hi;
      }
      double rl = 0.0, sr = 0.0, em = 0.0;
      for (std::size_t k = 0; k < runs; ++k) {
        BoostConfig run_cfg = cfg;
        run_cfg.seed = cfg.seed + k;
        const MetricReport rep = run_eval(dataset, s.doc.templates, s.doc.template_id, *s.backend, run_cfg);
        rl += rep.aggregate.rouge_l;
        sr += rep.aggregate.support_rate;
        em += rep.aggregate.exact_match;
      }
      const double n = static_cast<double>(runs);
      csv << format_fixed(p.lo, 6);
      if (!range_grid.empty()) csv << "," << format_fixed(p.hi, 6);
      csv << "," << format_fixed(rl / n, 6) << "," << format_fixed(sr / n, 6) << "," << format_fixed(em / n, 6)
          << "\n";
    }
    write_text_file(fs::path(o.out_dir) / "sweep.csv", csv.str());
    write_manifest("sweep", o, true);
    out_ << csv.str();
    return kOk;
  }

  int cmd_conflict(const CommonOptions& o, std::size_t n, double gap_min, double gap_max, double offset,
                   std::uint64_t suite_seed) {
    ConfigDocument doc = resolve_config(o);
    if (!(offset > 0.0)) throw InputError("--offset must be positive");
    const auto suite = generate_conflict_suite(n, gap_min, gap_max, suite_seed);
    BoostConfig cfg = doc.boost;
    cfg.mode = BoostMode::Static;
    cfg.sampler = SamplerKind::Greedy;
    std::size_t flips_above = 0, flips_below = 0;
    json cases = json::array();
    for (const auto& c : suite) {
      ScriptedModel model(c.spec);
      const PromptParts parts{c.example.context, c.example.question, TemplateRegistry::kDefaultId};
      auto first_answer = [&](double delta) {
        BoostConfig run_cfg = cfg;
        run_cfg.delta = std::max(0.0, delta);
        const auto r = generate(parts, TemplateRegistry{}, model, run_cfg);
        return r.generated_tokens.empty() ? std::string() : model.token_text(r.generated_tokens[0]);
      };
      const std::string above = first_answer(c.expected_flip_delta + offset);
      const std::string below = first_answer(c.expected_flip_delta - offset);
      flips_above += above == c.context_answer ? 1 : 0;
      flips_below += below == c.context_answer ? 1 : 0;
      cases.push_back({{"id", c.example.id},
                       {"gap", c.expected_flip_delta},
                       {"context_answer", c.context_answer},
                       {"parametric_answer", c.parametric_answer},
                       {"answer_above", above},
                       {"answer_below", below}});
    }
    const json summary = {{"cases", cases},
                          {"n", suite.size()},
                          {"offset", offset},
                          {"flips_above", flips_above},
                          {"flips_below", flips_below}};
    write_text_file(fs::path(o.out_dir) / "conflict.json", summary.dump(2) + "\n");
    write_manifest("conflict", o, false);
    out_ << "delta = gap + " << format_fixed(offset, 3) << ": " << flips_above << "/" << suite.size()
         << " flipped to the context answer\n"
         << "delta = gap - " << format_fixed(offset, 3) << ": " << flips_below << "/" << suite.size()
         << " flipped to the context answer\n";
    return kOk;
  }

  int cmd_flops(const CommonOptions& o, const CostScenario& s) {
    std::vector<std::string> header = {"Base Model"};
    std::vector<std::string> row;
    auto sci = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2e", v);
      return std::string(buf);
    };
    row.push_back(sci(base_model_flops(s)));
    for (Method m : kAllMethods) {
      header.emplace_back(to_string(m));
      row.push_back(sci(method_overhead_flops(m, s)));
    }
    std::ostringstream table;
    table << "scenario: batch " << s.batch << ", seq " << s.seq_len << ", hidden " << s.hidden << ", layers "
          << s.layers << ", context " << s.context_len << ", vocab " << s.vocab << "\n";
    std::string h = "        ", r = "FLOPS   ";
    for (std::size_t i = 0; i < header.size(); ++i) {
      const std::size_t w = std::max(header[i].size(), row[i].size());
      std::string a = header[i], b = row[i];
      a.resize(w, ' ');
      b.resize(w, ' ');
      h += (i ? "  " : "") + a;
      r += (i ? "  " : "") + b;
    }
    table << h << "\n" << r << "\n";
    table << "Base Model is the full decoding step; the other columns are per-step overhead\n";
    write_text_file(fs::path(o.out_dir) / "flops.txt", table.str());
    write_manifest("flops", o, false);
    out_ << table.str();
    return kOk;
  }

  int cmd_inspect_trace(const CommonOptions& o, const std::string& path) {
    const TraceDocument doc = parse_trace(read_json_file(path));
    auto text_of = [&](TokenId id) {
      if (auto it = doc.token_text.find(id); it != doc.token_text.end()) return it->second;
      if (auto it = doc.chosen_text.find(id); it != doc.chosen_text.end()) return it->second;
      return "#" + std::to_string(index_of(id));
    };
    std::ostringstream t;
    auto pad = [](std::string s, std::size_t w) {
      s.resize(std::max(w, s.size()), ' ');
      return s;
    };
    t << pad("step", 5) << pad("jsd", 9) << pad("delta", 9) << pad("boosted", 8) << pad("top boosts", 40)
      << pad("chosen", 14) << "prob\n";
    for (const StepRecord& s : doc.trace) {
      std::vector<std::pair<double, TokenId>> ranked;
      for (const auto& [w, b] : s.boost_vector_sparse) ranked.emplace_back(b, w);
      std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      std::vector<std::string> top;
      for (std::size_t k = 0; k < std::min<std::size_t>(3, ranked.size()); ++k)
        top.push_back(text_of(ranked[k].second) + "=" + format_fixed(ranked[k].first, 3));
      t << pad(std::to_string(s.step_index), 5)
        << pad(s.divergence_used ? format_fixed(*s.divergence_used) : "-", 9)
        << pad(format_fixed(s.delta_effective, 3), 9) << pad(std::to_string(s.boosted_token_count), 8)
        << pad(join(top, " "), 40) << pad(text_of(s.chosen_token), 14) << format_fixed(s.chosen_prob) << "\n";
    }
    t << "stop: " << doc.stop_reason;
    if (doc.terminal_step) t << " (end token drawn with prob " << format_fixed(doc.terminal_step->chosen_prob) << ")";
    t << "\n";
    write_text_file(fs::path(o.out_dir) / "trace_table.txt", t.str());
    write_manifest("inspect-trace", o, false);
    out_ << t.str();
    return kOk;
  }

  int cmd_rerun(const std::string& manifest_path) {
    const json m = read_json_file(manifest_path);
    std::vector<std::string> argv;
    std::string cwd, timestamp;
    try {
      argv = m.at("argv").get<std::vector<std::string>>();
      cwd = m.at("cwd").get<std::string>();
      timestamp = m.at("timestamp").get<std::string>();
    } catch (const json::exception& e) {
      throw InputError(std::string("malformed manifest: ") + e.what());
    }
    if (!argv.empty() && argv.front() == "rerun") throw InputError("manifest records a rerun");
    const fs::path previous = fs::current_path();
    fs::current_path(cwd);
    Runner inner(out_, err_, timestamp);
    const int code = inner.run(argv);
    fs::current_path(previous);
    return code;
  }

  std::ostream& out_;
  std::ostream& err_;
  Logger log_;
  std::optional<std::string> timestamp_;
  std::vector<std::string> args_;
};

// Entry point shared by the executable and the tests. `args` excludes the
// program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return Runner(out, err, std::nullopt).run(args);
}

}  // namespace cfb::cli

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cfb/errors.hpp"

namespace cfb {

// Index into a backend vocabulary. Ordered so that lowest-id tie-breaks and
// std::map iteration are deterministic.
enum class TokenId : std::uint32_t {};

constexpr TokenId token(std::size_t index) { return static_cast<TokenId>(index); }
constexpr std::size_t index_of(TokenId id) { return static_cast<std::size_t>(id); }

enum class SequenceOrigin { Prompt, Generated };

struct TokenSequence {
  std::vector<TokenId> tokens;
  SequenceOrigin origin = SequenceOrigin::Prompt;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  TokenId operator[](std::size_t i) const { return tokens[i]; }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

enum class BoostMode { Static, ContextAware, TokenAware };
enum class SamplerKind { TopP, Greedy };

inline std::string_view to_string(BoostMode mode) {
  switch (mode) {
    case BoostMode::Static: return "static";
    case BoostMode::ContextAware: return "context";
    case BoostMode::TokenAware: return "token";
  }
  return "?";
}

inline BoostMode parse_mode(std::string_view text) {
  if (text == "static") return BoostMode::Static;
  if (text == "context") return BoostMode::ContextAware;
  if (text == "token") return BoostMode::TokenAware;
  throw ConfigError("mode", "expected static|context|token, got '" + std::string(text) + "'");
}

inline std::string_view to_string(SamplerKind kind) {
  return kind == SamplerKind::TopP ? "top_p" : "greedy";
}

inline SamplerKind parse_sampler(std::string_view text) {
  if (text == "top_p" || text == "topp") return SamplerKind::TopP;
  if (text == "greedy") return SamplerKind::Greedy;
  throw ConfigError("sampler", "expected top_p|greedy, got '" + std::string(text) + "'");
}

inline constexpr double kLambdaTolerance = 1e-9;
inline constexpr double kProbabilityTolerance = 1e-6;

struct BoostConfig {
  BoostMode mode = BoostMode::Static;
  double delta = 2.0;      // fixed boost, static mode
  double delta_min = 1.0;  // adaptive range, context/token modes
  double delta_max = 5.0;
  double lambda1 = 0.6;  // attention weight
  double lambda2 = 0.4;  // semantic weight
  double top_p = 0.9;
  SamplerKind sampler = SamplerKind::TopP;
  std::size_t max_new_tokens = 64;
  std::uint64_t seed = 0;
  // Recompute the with/without-context divergence at every step instead of
  // once per example.
  bool divergence_per_step = false;
  // Clamp semantic scores to [0, 1] before fusing.
  bool clamp_semantic_scores = false;

  friend bool operator==(const BoostConfig&, const BoostConfig&) = default;
};

inline BoostConfig validate_config(const BoostConfig& cfg) {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(cfg.delta) || cfg.delta < 0.0) throw ConfigError("delta", "must be finite and >= 0");
  if (!finite(cfg.delta_min) || cfg.delta_min < 0.0)
    throw ConfigError("delta_min", "must be finite and >= 0");
  if (!finite(cfg.delta_max)) throw ConfigError("delta_max", "must be finite");
  if (cfg.delta_min > cfg.delta_max) throw ConfigError("delta_min", "delta_min exceeds delta_max");
  if (!finite(cfg.lambda1) || !finite(cfg.lambda2) || cfg.lambda1 < 0.0 || cfg.lambda1 > 1.0 ||
      cfg.lambda2 < 0.0 || cfg.lambda2 > 1.0)
    throw ConfigError("lambda", "lambda1 and lambda2 must lie in [0, 1]");
  if (std::abs(cfg.lambda1 + cfg.lambda2 - 1.0) > kLambdaTolerance)
    throw ConfigError("lambda", "lambda1 + lambda2 must equal 1");
  if (!(cfg.top_p > 0.0 && cfg.top_p <= 1.0)) throw ConfigError("top_p", "must lie in (0, 1]");
  if (cfg.max_new_tokens == 0) throw ConfigError("max_new_tokens", "must be positive");
  return cfg;
}

enum class DistributionKind { Logits, Probabilities };

// A logit or probability vector over the vocabulary at one decoding step.
class Distribution {
 public:
  static Distribution logits(std::vector<double> values) {
    return Distribution(std::move(values), DistributionKind::Logits);
  }

  static Distribution probabilities(std::vector<double> values) {
    double sum = 0.0;
    for (double v : values) {
      if (!(v >= 0.0)) throw InputError("probability entries must be non-negative");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kProbabilityTolerance)
      throw InputError("probabilities sum to " + std::to_string(sum));
    return Distribution(std::move(values), DistributionKind::Probabilities);
  }

  DistributionKind kind() const { return kind_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double operator[](TokenId id) const { return values_[index_of(id)]; }

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  Distribution(std::vector<double> values, DistributionKind kind)
      : values_(std::move(values)), kind_(kind) {}

  std::vector<double> values_;
  DistributionKind kind_;
};

// Audit record for one decoding step.
struct StepRecord {
  std::size_t step_index = 0;
  std::optional<double> divergence_used;  // absent in static mode
  double delta_effective = 0.0;
  std::size_t boosted_token_count = 0;
  std::map<TokenId, double> boost_vector_sparse;
  TokenId chosen_token{};
  double chosen_prob = 0.0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

}  // namespace cfb

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include "cfb/core.hpp"
#include "cfb/sampling.hpp"
#include "cfb/support.hpp"

namespace cfb {

// Base-2 Jensen-Shannon divergence, in [0, 1]. Terms with p_i = 0 vanish.
inline double jensen_shannon_divergence(const Distribution& p, const Distribution& q) {
  if (p.kind() != DistributionKind::Probabilities || q.kind() != DistributionKind::Probabilities)
    throw InputError("jensen_shannon_divergence expects probability vectors");
  if (p.size() != q.size())
    throw DimensionError(std::to_string(p.size()) + " vs " + std::to_string(q.size()));
  double kl_p = 0.0;
  double kl_q = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) kl_p += p[i] * std::log2(p[i] / m);
    if (q[i] > 0.0) kl_q += q[i] * std::log2(q[i] / m);
  }
  return std::clamp(0.5 * (kl_p + kl_q), 0.0, 1.0);
}

inline constexpr double kDivergenceSlack = 1e-9;

// delta(D) = delta_min + (delta_max - delta_min) * D
inline double adaptive_delta(double jsd, const BoostConfig& cfg) {
  if (!(jsd >= -kDivergenceSlack && jsd <= 1.0 + kDivergenceSlack))
    throw RangeError("divergence " + std::to_string(jsd) + " outside [0, 1]");
  jsd = std::clamp(jsd, 0.0, 1.0);
  return cfg.delta_min + (cfg.delta_max - cfg.delta_min) * jsd;
}

struct DivergenceReading {
  double jsd = 0.0;
  double delta_adaptive = 0.0;
};

inline DivergenceReading divergence_reading(const Distribution& with_context_logits,
                                            const Distribution& without_context_logits, const BoostConfig& cfg) {
  const double d = jensen_shannon_divergence(softmax(with_context_logits), softmax(without_context_logits));
  return {d, adaptive_delta(d, cfg)};
}

// Next-token divergence between the full prompt and the same template with
// the context slot removed.
inline DivergenceReading compute_divergence_reading(const PromptParts& parts, const TemplateRegistry& templates,
                                                    ModelBackend& backend, const BoostConfig& cfg) {
  const ResolvedPrompt full = resolve_source_span(parts, templates, backend);
  const TokenSequence query_only = render_query_only(parts, templates, backend);
  if (query_only.empty()) throw InputError("query-only prompt is empty");
  return divergence_reading(backend.forward(full.prompt).next_token_logits,
                            backend.forward(query_only).next_token_logits, cfg);
}

// alpha(w) = sum of attention over every source occurrence of w.
inline TokenScores aggregate_attention(const AttentionRow& attention, const SupportSet& support) {
  TokenScores alpha;
  for (const auto& [id, positions] : support.positions) {
    double acc = 0.0;
    for (std::size_t p : positions) {
      auto it = attention.find(p);
      if (it == attention.end()) throw MissingPositionError(p);
      acc += it->second;
    }
    alpha[id] = acc;
  }
  return alpha;
}

struct RelevanceVector {
  TokenScores raw;
  TokenScores normalized;
  TokenScores attention_part;
  TokenScores semantic_part;
};

// raw r(w) = lambda1 * alpha(w) + lambda2 * s(w), then divided by its mean over
// the support set. An all-zero raw vector normalizes to all ones.
inline RelevanceVector fuse_relevance(const TokenScores& alpha, const SupportSet& support, const BoostConfig& cfg) {
  if (!support.semantic_score) throw ModeArgumentError("support set has no semantic scores");
  RelevanceVector rel;
  double total = 0.0;
  bool all_zero = true;
  for (TokenId w : support.members) {
    auto a = alpha.find(w);
    auto s = support.semantic_score->find(w);
    if (a == alpha.end() || s == support.semantic_score->end())
      throw InvariantError("relevance inputs do not cover the support set");
    double semantic = s->second;
    if (cfg.clamp_semantic_scores) semantic = std::clamp(semantic, 0.0, 1.0);
    const double r = cfg.lambda1 * a->second + cfg.lambda2 * semantic;
    rel.attention_part[w] = a->second;
    rel.semantic_part[w] = semantic;
    rel.raw[w] = r;
    total += r;
    all_zero = all_zero && r == 0.0;
  }
  if (support.members.empty()) return rel;
  if (all_zero) {
    for (TokenId w : support.members) rel.normalized[w] = 1.0;
    return rel;
  }
  const double mean = total / static_cast<double>(support.members.size());
  if (!(mean > 0.0)) throw NegativeMeanError(mean);
  for (const auto& [w, r] : rel.raw) rel.normalized[w] = r / mean;
  return rel;
}

struct BoostVector {
  std::map<TokenId, double> boosts;
  BoostMode mode = BoostMode::Static;
};

inline BoostVector assemble_boost(BoostMode mode, const BoostConfig& cfg, const std::optional<DivergenceReading>& reading,
                                  const std::optional<RelevanceVector>& relevance, const SupportSet& support) {
  BoostVector out{{}, mode};
  switch (mode) {
    case BoostMode::Static:
      for (TokenId w : support.members) out.boosts[w] = cfg.delta;
      break;
    case BoostMode::ContextAware:
      if (!reading) throw ModeArgumentError("context mode needs a divergence reading");
      for (TokenId w : support.members) out.boosts[w] = reading->delta_adaptive;
      break;
    case BoostMode::TokenAware:
      if (!reading) throw ModeArgumentError("token mode needs a divergence reading");
      if (!relevance) throw ModeArgumentError("token mode needs a relevance vector");
      for (TokenId w : support.members) {
        auto it = relevance->normalized.find(w);
        if (it == relevance->normalized.end()) throw InvariantError("relevance misses a support token");
        out.boosts[w] = reading->delta_adaptive * it->second;
      }
      break;
  }
  return out;
}

// l~(w) = l(w) + boost(w) for boosted tokens, l(w) otherwise.
inline Distribution shape_logits(const Distribution& logits, const BoostVector& boost) {
  std::vector<double> out = logits.values();
  for (const auto& [w, b] : boost.boosts) {
    if (index_of(w) >= out.size()) throw DimensionError("boost token outside the vocabulary");
    out[index_of(w)] += b;
  }
  return Distribution::logits(std::move(out));
}

inline Distribution shape_logits(const Distribution& logits, const std::map<TokenId, double>& boosts) {
  return shape_logits(logits, BoostVector{boosts, BoostMode::Static});
}

}  // namespace cfb

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cfb/core.hpp"
#include "cfb/rng.hpp"

namespace cfb {

inline Distribution softmax(const Distribution& logits) {
  const auto& in = logits.values();
  if (in.empty()) throw InputError("softmax of an empty vector");
  for (double x : in)
    if (!std::isfinite(x)) throw NonFiniteError("logit vector contains NaN or infinity");
  const double peak = *std::max_element(in.begin(), in.end());
  std::vector<double> out(in.size());
  double total = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - peak);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return Distribution::probabilities(std::move(out));
}

inline TokenId sample_greedy(const Distribution& dist) {
  const auto& v = dist.values();
  // max_element returns the first maximum, i.e. the lowest id among ties.
  return token(static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin()));
}

// Slack on the cumulative-mass comparison so that prefixes whose mass equals
// top_p in exact arithmetic are not extended by rounding.
inline constexpr double kNucleusSlack = 1e-12;

// Token ids of the nucleus: the shortest prefix of the probability-sorted
// vocabulary (ties by lower id) whose mass reaches top_p.
inline std::vector<std::size_t> nucleus(const Distribution& probs, double top_p) {
  const auto& p = probs.values();
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  double cumulative = 0.0;
  std::size_t keep = order.size();
  for (std::size_t i = 0; i < order.size(); ++i) {
    cumulative += p[order[i]];
    if (cumulative >= top_p - kNucleusSlack) {
      keep = i + 1;
      break;
    }
  }
  order.resize(keep);
  return order;
}

// Consumes exactly one uniform draw from rng per call.
inline TokenId sample_top_p(const Distribution& probs, double top_p, Rng& rng) {
  if (probs.kind() != DistributionKind::Probabilities) throw InputError("sample_top_p expects probabilities");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw InputError("top_p must lie in (0, 1]");
  const auto kept = nucleus(probs, top_p);
  double mass = 0.0;
  for (std::size_t id : kept) mass += probs[id];
  const double u = rng.uniform() * mass;
  double cumulative = 0.0;
  std::size_t chosen = kept.front();
  for (std::size_t id : kept) {
    if (probs[id] <= 0.0) continue;
    chosen = id;
    cumulative += probs[id];
    if (cumulative > u) break;
  }
  return token(chosen);
}

inline TokenId sample(const Distribution& probs, SamplerKind kind, double top_p, Rng& rng) {
  return kind == SamplerKind::Greedy ? sample_greedy(probs) : sample_top_p(probs, top_p, rng);
}

}  // namespace cfb

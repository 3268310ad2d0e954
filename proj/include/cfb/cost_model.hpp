#pragma once

#include <array>
#include <cstddef>
#include <string_view>

#include "cfb/errors.hpp"

namespace cfb {

struct CostScenario {
  double batch = 1;
  double seq_len = 128;
  double hidden = 4096;
  double layers = 32;
  double context_len = 512;
  // Not stated alongside the reference per-step figures; 32000 matches the
  // Llama-2 and Mistral tokenizers.
  double vocab = 32000;
};

inline void check_scenario(const CostScenario& s) {
  if (!(s.batch > 0 && s.seq_len > 0 && s.hidden > 0 && s.layers > 0 && s.context_len > 0 && s.vocab > 0))
    throw InputError("every cost scenario dimension must be positive");
}

// Dense projection work over the full sequence: 12 h^2 weights per layer
// (4 h^2 attention projections, 8 h^2 MLP) at four FLOPs per weight per token.
// A bare multiply-add count would give two; four is the calibrated factor.
inline double projection_flops(const CostScenario& s) {
  return 2.0 * 2.0 * 12.0 * s.hidden * s.hidden * s.layers * s.seq_len * s.batch;
}

// Score and value products: each of the seq_len query positions attends over
// context_len keys, two matmuls of hidden width, two FLOPs per MAC.
inline double attention_flops(const CostScenario& s) {
  return 2.0 * 2.0 * s.seq_len * s.context_len * s.hidden * s.layers * s.batch;
}

inline double base_model_flops(const CostScenario& s) {
  check_scenario(s);
  return projection_flops(s) + attention_flops(s);
}

enum class Method { CAD, ADACAD, COIECD, StaticCFB, ContextAwareCFB, TokenAwareCFB };

inline constexpr std::array<Method, 6> kAllMethods = {Method::CAD,       Method::ADACAD,          Method::COIECD,
                                                      Method::StaticCFB, Method::ContextAwareCFB, Method::TokenAwareCFB};

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::CAD: return "CAD";
    case Method::ADACAD: return "ADACAD";
    case Method::COIECD: return "COIECD";
    case Method::StaticCFB: return "Static CFB";
    case Method::ContextAwareCFB: return "Context-aware CFB";
    case Method::TokenAwareCFB: return "Token-aware CFB";
  }
  return "?";
}

// Per-step overhead as a multiple of context_len * vocab. The multiples are a
// calibration against the reference per-step figures, not a derivation.
inline double overhead_coefficient(Method m) {
  switch (m) {
    case Method::CAD: return 3.0;
    case Method::ADACAD: return 7.0;
    case Method::COIECD: return 8.0;
    case Method::StaticCFB: return 5.0;
    case Method::ContextAwareCFB: return 6.0;
    case Method::TokenAwareCFB: return 17.5;
  }
  return 0.0;
}

inline double method_overhead_flops(Method m, const CostScenario& s) {
  check_scenario(s);
  return overhead_coefficient(m) * s.context_len * s.vocab * s.batch;
}

}  // namespace cfb

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cfb/boosting.hpp"
#include "cfb/rng.hpp"
#include "cfb/sampling.hpp"
#include "cfb/support.hpp"

namespace cfb {

enum class StopReason { EOS, MaxTokens };

inline std::string_view to_string(StopReason reason) {
  return reason == StopReason::EOS ? "eos" : "max_tokens";
}

struct GenerationResult {
  std::string text;
  TokenSequence generated_tokens{{}, SequenceOrigin::Generated};
  // One record per generated token.
  std::vector<StepRecord> trace;
  // The step that drew end-of-sequence, when generation stopped that way.
  std::optional<StepRecord> terminal_step;
  StopReason stop_reason = StopReason::MaxTokens;

  TokenSequence prompt;
  SourceSpan span;
  SupportSet support;
  std::optional<DivergenceReading> reading;
};

// Boost for one decoding step. Token mode consumes the attention row fetched
// over the source span at this step.
inline BoostVector step_boost(const BoostConfig& cfg, const SupportSet& support,
                              const std::optional<DivergenceReading>& reading,
                              const std::optional<AttentionRow>& attention) {
  if (cfg.mode != BoostMode::TokenAware) return assemble_boost(cfg.mode, cfg, reading, std::nullopt, support);
  if (!attention) throw ModeArgumentError("token mode needs an attention row");
  const TokenScores alpha = aggregate_attention(*attention, support);
  return assemble_boost(cfg.mode, cfg, reading, fuse_relevance(alpha, support, cfg), support);
}

inline TokenSequence concat(const TokenSequence& a, const TokenSequence& b) {
  TokenSequence out = a;
  out.tokens.insert(out.tokens.end(), b.tokens.begin(), b.tokens.end());
  return out;
}

inline GenerationResult generate(const PromptParts& parts, const TemplateRegistry& templates, ModelBackend& backend,
                                 const BoostConfig& config) {
  const BoostConfig cfg = validate_config(config);
  const auto& caps = backend.capabilities();
  if (!caps.supports(cfg.mode))
    throw CapabilityError("token mode needs a backend that provides attention and embeddings");

  GenerationResult result;
  ResolvedPrompt resolved = resolve_source_span(parts, templates, backend);
  result.prompt = resolved.prompt;
  result.span = resolved.span;
  result.support = build_support_set(resolved.prompt, resolved.span, backend);

  const bool adaptive = cfg.mode != BoostMode::Static;
  TokenSequence query_only;
  if (adaptive) {
    query_only = render_query_only(parts, templates, backend);
    if (query_only.empty()) throw InputError("query-only prompt is empty");
    if (!cfg.divergence_per_step) {
      result.reading = divergence_reading(backend.forward(resolved.prompt).next_token_logits,
                                          backend.forward(query_only).next_token_logits, cfg);
    }
  }

  const std::vector<std::size_t> source_positions =
      cfg.mode == BoostMode::TokenAware ? resolved.span.positions() : std::vector<std::size_t>{};

  Rng rng(cfg.seed);
  TokenSequence output = resolved.prompt;
  for (std::size_t step = 0; step < cfg.max_new_tokens; ++step) {
    ForwardOutput fwd = backend.forward(output, source_positions);
    if (adaptive && cfg.divergence_per_step) {
      result.reading = divergence_reading(
          fwd.next_token_logits,
          backend.forward(concat(query_only, result.generated_tokens)).next_token_logits, cfg);
    }
    const BoostVector boost = step_boost(cfg, result.support, result.reading, fwd.attention_to_positions);
    const Distribution probs = softmax(shape_logits(fwd.next_token_logits, boost));
    const TokenId next = sample(probs, cfg.sampler, cfg.top_p, rng);

    StepRecord record;
    record.step_index = step;
    if (adaptive) record.divergence_used = result.reading->jsd;
    record.delta_effective = adaptive ? result.reading->delta_adaptive : cfg.delta;
    record.boost_vector_sparse = boost.boosts;
    for (const auto& [w, b] : boost.boosts) record.boosted_token_count += b != 0.0 ? 1 : 0;
    record.chosen_token = next;
    record.chosen_prob = probs[next];

    if (next == caps.eos_id) {
      result.terminal_step = std::move(record);
      result.stop_reason = StopReason::EOS;
      break;
    }
    result.trace.push_back(std::move(record));
    result.generated_tokens.tokens.push_back(next);
    output.tokens.push_back(next);
  }
  result.text = backend.detokenize(result.generated_tokens);
  return result;
}

inline GenerationResult generate(const PromptParts& parts, ModelBackend& backend, const BoostConfig& cfg) {
  return generate(parts, TemplateRegistry{}, backend, cfg);
}

// Plain sampling with no logit shaping; the reference run for zero-boost
// identity checks.
inline GenerationResult generate_unboosted(const PromptParts& parts, const TemplateRegistry& templates,
                                           ModelBackend& backend, const BoostConfig& config) {
  const BoostConfig cfg = validate_config(config);
  GenerationResult result;
  result.prompt = resolve_source_span(parts, templates, backend).prompt;
  Rng rng(cfg.seed);
  TokenSequence output = result.prompt;
  for (std::size_t step = 0; step < cfg.max_new_tokens; ++step) {
    const Distribution probs = softmax(backend.forward(output).next_token_logits);
    const TokenId next = sample(probs, cfg.sampler, cfg.top_p, rng);
    if (next == backend.capabilities().eos_id) {
      result.stop_reason = StopReason::EOS;
      break;
    }
    result.generated_tokens.tokens.push_back(next);
    output.tokens.push_back(next);
  }
  result.text = backend.detokenize(result.generated_tokens);
  return result;
}

}  // namespace cfb

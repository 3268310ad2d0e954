#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cfb/cfb.hpp"
#include "oracle.hpp"

namespace testing_support {

using namespace cfb;

// Forwards to another backend while counting calls and recording inputs.
class CountingBackend final : public ModelBackend {
 public:
  explicit CountingBackend(ModelBackend& inner) : inner_(inner) {}

  const BackendCapabilities& capabilities() const override { return inner_.capabilities(); }
  TokenSequence tokenize(std::string_view text) const override { return inner_.tokenize(text); }
  std::string detokenize(const TokenSequence& tokens) const override { return inner_.detokenize(tokens); }
  std::string token_text(TokenId id) const override { return inner_.token_text(id); }

  std::size_t forward_calls = 0;
  std::size_t embed_calls = 0;
  std::vector<TokenSequence> forwarded;

 protected:
  ForwardOutput do_forward(const TokenSequence& tokens, std::span<const std::size_t> positions) override {
    ++forward_calls;
    forwarded.push_back(tokens);
    return inner_.forward(tokens, positions);
  }
  std::vector<double> do_embed(TokenId id) override {
    ++embed_calls;
    return inner_.embed(id);
  }

 private:
  ModelBackend& inner_;
};

inline std::vector<std::string> instance_vocab(const oracle::Instance& in) {
  std::vector<std::string> vocab = {"</s>", "Context:", "Answer:"};
  for (std::size_t id = 3; id < in.vocab; ++id) vocab.push_back("w" + std::to_string(id));
  return vocab;
}

inline std::string words(const std::vector<std::string>& vocab, const std::vector<std::size_t>& ids) {
  std::string out;
  for (auto id : ids) out += (out.empty() ? "" : " ") + vocab[id];
  return out;
}

inline const char* kInstanceTemplate = "Context: {C}\n{Q} Answer:";

inline BoostConfig instance_config(const oracle::Instance& in) {
  BoostConfig cfg;
  cfg.mode = in.mode == 0 ? BoostMode::Static : in.mode == 1 ? BoostMode::ContextAware : BoostMode::TokenAware;
  cfg.delta = in.delta;
  cfg.delta_min = in.delta_min;
  cfg.delta_max = in.delta_max;
  cfg.lambda1 = in.lambda1;
  cfg.lambda2 = in.lambda2;
  return cfg;
}

inline ScriptedModel instance_model(const oracle::Instance& in) {
  ScriptedModelSpec spec;
  spec.vocab = instance_vocab(in);
  AttentionRow row;
  for (std::size_t i = 0; i < in.span.size(); ++i) row[1 + i] = in.attention[i];  // span starts after "Context:"
  spec.steps = {{in.logits, row}};
  spec.query_logits = in.query_logits;
  spec.embeddings = in.embeddings;
  return ScriptedModel(spec);
}

struct PipelineOutput {
  SupportSet support;
  DivergenceReading reading;
  BoostVector boost;
  std::optional<RelevanceVector> relevance;
  Distribution shaped = Distribution::logits({});
};

// Library route for one decoding step of an oracle instance.
inline PipelineOutput run_pipeline(const oracle::Instance& in) {
  ScriptedModel model = instance_model(in);
  const auto vocab = instance_vocab(in);
  TemplateRegistry templates;
  templates.add("oracle", kInstanceTemplate);
  const PromptParts parts{words(vocab, in.span), words(vocab, in.question), "oracle"};
  const BoostConfig cfg = validate_config(instance_config(in));

  PipelineOutput out;
  const ResolvedPrompt resolved = resolve_source_span(parts, templates, model);
  out.support = build_support_set(resolved.prompt, resolved.span, model);
  out.reading = compute_divergence_reading(parts, templates, model, cfg);
  const ForwardOutput fwd = model.forward(resolved.prompt, resolved.span.positions());
  if (cfg.mode == BoostMode::TokenAware)
    out.relevance = fuse_relevance(aggregate_attention(*fwd.attention_to_positions, out.support), out.support, cfg);
  out.boost = step_boost(cfg, out.support, out.reading, fwd.attention_to_positions);
  out.shaped = shape_logits(fwd.next_token_logits, out.boost);
  return out;
}

}  // namespace testing_support

#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "cfb/backend.hpp"

namespace cfb {

struct ScriptedStep {
  std::vector<double> logits;
  std::optional<AttentionRow> attention;

  friend bool operator==(const ScriptedStep&, const ScriptedStep&) = default;
};

// Table-driven model. Step t of the script answers any sequence that carries
// t tokens after its last `prompt_end` token (0 when the marker is absent);
// steps past the end of the script repeat the final entry. Sequences without
// any `context_marker` token are treated as query-only prompts and answered
// with `query_logits` when those are given.
struct ScriptedModelSpec {
  std::vector<std::string> vocab;
  std::vector<ScriptedStep> steps;
  std::optional<std::vector<std::vector<double>>> embeddings;
  std::optional<std::vector<double>> query_logits;
  std::string eos = "</s>";
  std::string prompt_end = "Answer:";
  std::string context_marker = "Context:";

  friend bool operator==(const ScriptedModelSpec&, const ScriptedModelSpec&) = default;
};

class ScriptedModel final : public ModelBackend {
 public:
  explicit ScriptedModel(ScriptedModelSpec spec) : spec_(std::move(spec)) {
    if (spec_.vocab.empty()) throw InputError("scripted model needs a non-empty vocabulary");
    vocab_ = Vocabulary(spec_.vocab);
    if (vocab_.size() != spec_.vocab.size()) throw InputError("scripted vocabulary has duplicate entries");
    if (spec_.steps.empty()) throw InputError("scripted model needs at least one step");
    const std::size_t v = vocab_.size();
    bool all_attention = true;
    for (std::size_t i = 0; i < spec_.steps.size(); ++i) {
      if (spec_.steps[i].logits.size() != v)
        throw InputError("step " + std::to_string(i) + " logits length differs from vocabulary size");
      all_attention = all_attention && spec_.steps[i].attention.has_value();
    }
    if (spec_.query_logits && spec_.query_logits->size() != v)
      throw InputError("query_logits length differs from vocabulary size");

    caps_.vocab_size = v;
    caps_.provides_attention = all_attention;
    caps_.eos_id = vocab_.at(spec_.eos);
    caps_.special_token_ids = {caps_.eos_id};
    if (spec_.embeddings) {
      const auto& table = *spec_.embeddings;
      if (table.size() != v) throw InputError("embedding table needs one row per vocabulary entry");
      const std::size_t d = table.front().size();
      if (d == 0) throw InputError("embedding rows must be non-empty");
      for (const auto& row : table)
        if (row.size() != d) throw InputError("embedding rows have inconsistent length");
      caps_.provides_embeddings = true;
      caps_.embedding_dim = d;
    }
    prompt_end_ = vocab_.find(spec_.prompt_end);
    context_marker_ = vocab_.find(spec_.context_marker);
  }

  const ScriptedModelSpec& spec() const { return spec_; }
  const BackendCapabilities& capabilities() const override { return caps_; }
  TokenSequence tokenize(std::string_view text) const override { return vocab_.tokenize(text); }
  std::string detokenize(const TokenSequence& tokens) const override { return vocab_.detokenize(tokens); }
  std::string token_text(TokenId id) const override { return vocab_.text(id); }
  const Vocabulary& vocabulary() const { return vocab_; }

  std::size_t step_index(const TokenSequence& tokens) const {
    if (!prompt_end_) return 0;
    auto it = std::find(tokens.tokens.rbegin(), tokens.tokens.rend(), *prompt_end_);
    if (it == tokens.tokens.rend()) return 0;
    return static_cast<std::size_t>(it - tokens.tokens.rbegin());
  }

  bool is_query_only(const TokenSequence& tokens) const {
    if (!context_marker_) return false;
    return std::find(tokens.tokens.begin(), tokens.tokens.end(), *context_marker_) == tokens.tokens.end();
  }

 protected:
  ForwardOutput do_forward(const TokenSequence& tokens,
                           std::span<const std::size_t> attention_positions) override {
    const ScriptedStep& step = spec_.steps[std::min(step_index(tokens), spec_.steps.size() - 1)];
    if (spec_.query_logits && is_query_only(tokens))
      return {Distribution::logits(*spec_.query_logits), std::nullopt};

    ForwardOutput out{Distribution::logits(step.logits), std::nullopt};
    if (!attention_positions.empty()) {
      AttentionRow row;
      for (std::size_t p : attention_positions) {
        if (auto it = step.attention->find(p); it != step.attention->end()) row.emplace(p, it->second);
      }
      out.attention_to_positions = std::move(row);
    }
    return out;
  }

  std::vector<double> do_embed(TokenId id) override {
    return (*spec_.embeddings)[index_of(id)];
  }

 private:
  ScriptedModelSpec spec_;
  Vocabulary vocab_;
  BackendCapabilities caps_;
  std::optional<TokenId> prompt_end_;
  std::optional<TokenId> context_marker_;
};

}  // namespace cfb

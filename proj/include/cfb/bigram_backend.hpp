#pragma once

#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "cfb/backend.hpp"
#include "cfb/rng.hpp"

namespace cfb {

struct BigramOptions {
  std::size_t embedding_dim = 16;
  std::uint64_t seed = 42;
  double smoothing = 1.0;
  // Words that must be tokenizable although absent from the corpus, such as
  // template scaffolding. They only ever see smoothed counts.
  std::vector<std::string> extra_tokens;
};

// Bigram language model over a whitespace-tokenized corpus. Every corpus line
// ends with an implicit end-of-sequence token. Attention is uniform over the
// requested positions; embeddings are drawn once from a seeded generator.
class BigramModel final : public ModelBackend {
 public:
  static constexpr const char* kEos = "</s>";

  const BackendCapabilities& capabilities() const override { return caps_; }
  TokenSequence tokenize(std::string_view text) const override { return vocab_.tokenize(text); }
  std::string detokenize(const TokenSequence& tokens) const override { return vocab_.detokenize(tokens); }
  std::string token_text(TokenId id) const override { return vocab_.text(id); }
  const Vocabulary& vocabulary() const { return vocab_; }

  double count(TokenId prev, TokenId next) const {
    return counts_[index_of(prev) * vocab_.size() + index_of(next)];
  }

  friend std::unique_ptr<BigramModel> build_bigram_backend(std::string_view corpus,
                                                           const BigramOptions& options);

 protected:
  ForwardOutput do_forward(const TokenSequence& tokens,
                           std::span<const std::size_t> attention_positions) override {
    const std::size_t v = vocab_.size();
    const std::size_t prev = index_of(tokens.tokens.back());
    std::vector<double> logits(v);
    for (std::size_t next = 0; next < v; ++next)
      logits[next] = std::log(counts_[prev * v + next] + smoothing_);
    ForwardOutput out{Distribution::logits(std::move(logits)), std::nullopt};
    if (!attention_positions.empty()) {
      AttentionRow row;
      const double mass = 1.0 / static_cast<double>(attention_positions.size());
      for (std::size_t p : attention_positions) row[p] = mass;
      out.attention_to_positions = std::move(row);
    }
    return out;
  }

  std::vector<double> do_embed(TokenId id) override {
    const std::size_t d = *caps_.embedding_dim;
    auto first = embeddings_.begin() + static_cast<std::ptrdiff_t>(index_of(id) * d);
    return {first, first + static_cast<std::ptrdiff_t>(d)};
  }

 private:
  BigramModel() = default;

  Vocabulary vocab_;
  BackendCapabilities caps_;
  std::vector<double> counts_;      // |V| x |V|, row = previous token
  std::vector<double> embeddings_;  // |V| x d
  double smoothing_ = 1.0;
};

inline std::unique_ptr<BigramModel> build_bigram_backend(std::string_view corpus,
                                                         const BigramOptions& options) {
  if (!(options.smoothing > 0.0)) throw CorpusError("smoothing must be positive");
  if (options.embedding_dim == 0) throw CorpusError("embedding dimension must be positive");

  std::unique_ptr<BigramModel> model(new BigramModel());
  Vocabulary& vocab = model->vocab_;
  const TokenId eos = vocab.add(BigramModel::kEos);

  std::vector<std::vector<TokenId>> lines;
  std::istringstream in{std::string(corpus)};
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    std::vector<TokenId> ids;
    std::string word;
    while (words >> word) {
      if (word == BigramModel::kEos) throw CorpusError("corpus may not contain the reserved token </s>");
      ids.push_back(vocab.add(word));
    }
    if (!ids.empty()) lines.push_back(std::move(ids));
  }
  if (vocab.size() - 1 < 2) throw CorpusError("corpus must contain at least two distinct tokens");
  for (const auto& w : options.extra_tokens) vocab.add(w);

  const std::size_t v = vocab.size();
  model->counts_.assign(v * v, 0.0);
  for (const auto& ids : lines) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const TokenId next = i + 1 < ids.size() ? ids[i + 1] : eos;
      model->counts_[index_of(ids[i]) * v + index_of(next)] += 1.0;
    }
  }

  Rng rng(options.seed);
  model->embeddings_.resize(v * options.embedding_dim);
  for (double& x : model->embeddings_) x = rng.uniform(-1.0, 1.0);

  model->smoothing_ = options.smoothing;
  auto& caps = model->caps_;
  caps.vocab_size = v;
  caps.provides_attention = true;
  caps.provides_embeddings = true;
  caps.embedding_dim = options.embedding_dim;
  caps.eos_id = eos;
  caps.special_token_ids = {eos};
  return model;
}

}  // namespace cfb

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cfb/core.hpp"

namespace cfb {

struct BackendCapabilities {
  bool provides_logits = true;
  bool provides_attention = false;
  bool provides_embeddings = false;
  std::size_t vocab_size = 0;
  std::optional<std::size_t> embedding_dim;
  std::set<TokenId> special_token_ids;
  TokenId eos_id{};

  bool supports(BoostMode mode) const {
    return mode != BoostMode::TokenAware || (provides_attention && provides_embeddings);
  }
};

// Attention mass from the final position to each requested prompt position.
// A restriction of a full attention row, so the values need not sum to 1.
using AttentionRow = std::map<std::size_t, double>;

struct ForwardOutput {
  Distribution next_token_logits;
  std::optional<AttentionRow> attention_to_positions;
};

// Closed whitespace vocabulary shared by the desk-scale backends.
class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> words) {
    for (auto& w : words) add(std::move(w));
  }

  TokenId add(std::string word) {
    if (auto it = index_.find(word); it != index_.end()) return it->second;
    TokenId id = token(words_.size());
    index_.emplace(word, id);
    words_.push_back(std::move(word));
    return id;
  }

  std::optional<TokenId> find(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TokenId at(std::string_view word) const {
    auto id = find(word);
    if (!id) throw OOVError(std::string(word));
    return *id;
  }

  const std::string& text(TokenId id) const { return words_.at(index_of(id)); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  TokenSequence tokenize(std::string_view text) const {
    TokenSequence out;
    std::istringstream in{std::string(text)};
    std::string word;
    while (in >> word) out.tokens.push_back(at(word));
    return out;
  }

  std::string detokenize(const TokenSequence& seq) const {
    std::string out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i) out += ' ';
      out += text(seq[i]);
    }
    return out;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

// Language model interface consumed by the decoding loop. The public entry
// points check preconditions and capability flags, then dispatch to the
// backend-specific implementation, so no backend can return fabricated
// attention or embeddings it does not declare.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  virtual const BackendCapabilities& capabilities() const = 0;
  virtual TokenSequence tokenize(std::string_view text) const = 0;
  virtual std::string detokenize(const TokenSequence& tokens) const = 0;
  virtual std::string token_text(TokenId id) const = 0;

  ForwardOutput forward(const TokenSequence& tokens,
                        std::span<const std::size_t> attention_positions = {}) {
    const auto& caps = capabilities();
    if (tokens.empty()) throw InputError("forward called with an empty sequence");
    for (TokenId id : tokens.tokens) {
      if (index_of(id) >= caps.vocab_size)
        throw InputError("token id " + std::to_string(index_of(id)) + " outside vocabulary of size " +
                         std::to_string(caps.vocab_size));
    }
    if (!attention_positions.empty() && !caps.provides_attention)
      throw CapabilityError("backend does not provide attention");
    for (std::size_t p : attention_positions) {
      if (p >= tokens.size())
        throw InputError("attention position " + std::to_string(p) + " beyond sequence length");
    }
    ForwardOutput out = do_forward(tokens, attention_positions);
    if (out.next_token_logits.size() != caps.vocab_size)
      throw DimensionError("backend returned " + std::to_string(out.next_token_logits.size()) +
                           " logits for vocabulary of size " + std::to_string(caps.vocab_size));
    if (attention_positions.empty()) out.attention_to_positions.reset();
    return out;
  }

  std::vector<double> embed(TokenId id) {
    const auto& caps = capabilities();
    if (!caps.provides_embeddings) throw CapabilityError("backend does not provide embeddings");
    if (index_of(id) >= caps.vocab_size)
      throw InputError("token id " + std::to_string(index_of(id)) + " outside vocabulary");
    return do_embed(id);
  }

 protected:
  virtual ForwardOutput do_forward(const TokenSequence& tokens,
                                   std::span<const std::size_t> attention_positions) = 0;
  virtual std::vector<double> do_embed(TokenId id) {
    (void)id;
    throw CapabilityError("backend does not provide embeddings");
  }
};

}  // namespace cfb

#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cfb/backend.hpp"

namespace cfb {

struct PromptParts {
  std::string context_text;
  std::string query_text;
  std::string template_id = "qa_v1";
};

// A prompt template with a `{C}` context slot and an optional `{Q}` query
// slot. Slots must be whitespace-delimited so the context occupies an exact
// token range of the rendered prompt.
class PromptTemplate {
 public:
  static constexpr std::string_view kContextSlot = "{C}";
  static constexpr std::string_view kQuerySlot = "{Q}";

  explicit PromptTemplate(std::string text) : text_(std::move(text)) {
    const auto c = text_.find(kContextSlot);
    if (c == std::string::npos || text_.find(kContextSlot, c + 1) != std::string::npos)
      throw ConfigError("templates", "template must contain {C} exactly once: " + text_);
    const auto q = text_.find(kQuerySlot);
    if (q != std::string::npos && text_.find(kQuerySlot, q + 1) != std::string::npos)
      throw ConfigError("templates", "template may contain {Q} at most once: " + text_);
    check_delimited(c);
    if (q != std::string::npos) check_delimited(q);
  }

  const std::string& text() const { return text_; }

  std::string render(std::string_view context, std::string_view query) const {
    return substitute(text_, context, query);
  }

  // The template with the context slot removed entirely: the whole line when
  // the slot sits on a line of its own, otherwise only the placeholder.
  std::string render_without_context(std::string_view query) const {
    const auto c = text_.find(kContextSlot);
    const auto line_begin = text_.rfind('\n', c);
    const auto begin = line_begin == std::string::npos ? 0 : line_begin + 1;
    auto end = text_.find('\n', c);
    const bool own_line = text_.substr(begin, (end == std::string::npos ? text_.size() : end) - begin)
                              .find(kQuerySlot) == std::string::npos;
    std::string stripped;
    if (own_line) {
      end = end == std::string::npos ? text_.size() : end + 1;
      stripped = text_.substr(0, begin) + text_.substr(end);
    } else {
      stripped = text_.substr(0, c) + text_.substr(c + kContextSlot.size());
    }
    return substitute(stripped, "", query);
  }

  // Renders with placeholders and returns the pieces in order, tagging which
  // piece is the context.
  struct Piece {
    std::string text;
    bool is_context;
  };

  std::vector<Piece> pieces(std::string_view context, std::string_view query) const {
    std::vector<Piece> out;
    const auto c = text_.find(kContextSlot);
    const auto q = text_.find(kQuerySlot);
    std::size_t cursor = 0;
    auto emit_until = [&](std::size_t pos) {
      out.push_back({text_.substr(cursor, pos - cursor), false});
    };
    if (q != std::string::npos && q < c) {
      emit_until(q);
      out.push_back({std::string(query), false});
      cursor = q + kQuerySlot.size();
    }
    emit_until(c);
    out.push_back({std::string(context), true});
    cursor = c + kContextSlot.size();
    if (q != std::string::npos && q > c) {
      emit_until(q);
      out.push_back({std::string(query), false});
      cursor = q + kQuerySlot.size();
    }
    out.push_back({text_.substr(cursor), false});
    return out;
  }

 private:
  void check_delimited(std::size_t pos) const {
    auto is_space = [](char ch) { return ch == ' ' || ch == '\n' || ch == '\t' || ch == '\r'; };
    const bool left = pos == 0 || is_space(text_[pos - 1]);
    const std::size_t after = pos + 3;
    const bool right = after >= text_.size() || is_space(text_[after]);
    if (!left || !right)
      throw ConfigError("templates", "slots must be whitespace-delimited: " + text_);
  }

  static std::string substitute(std::string text, std::string_view context, std::string_view query) {
    auto replace = [&](std::string_view slot, std::string_view value) {
      if (auto pos = text.find(slot); pos != std::string::npos) text.replace(pos, slot.size(), value);
    };
    replace(kContextSlot, context);
    replace(kQuerySlot, query);
    return text;
  }

  std::string text_;
};

class TemplateRegistry {
 public:
  static constexpr const char* kDefaultId = "qa_v1";
  static constexpr const char* kDefaultText = "Context: {C}\nQuestion: {Q}\nAnswer:";

  TemplateRegistry() { add(kDefaultId, kDefaultText); }

  void add(const std::string& id, std::string text) {
    templates_.insert_or_assign(id, PromptTemplate(std::move(text)));
  }

  const PromptTemplate& at(const std::string& id) const {
    auto it = templates_.find(id);
    if (it == templates_.end()) throw ConfigError("template", "unknown template id '" + id + "'");
    return it->second;
  }

  const std::map<std::string, PromptTemplate>& all() const { return templates_; }

 private:
  std::map<std::string, PromptTemplate> templates_;
};

struct SourceSpan {
  TokenSequence tokens;
  std::size_t start_pos = 0;
  std::size_t length = 0;

  std::size_t end_pos() const { return start_pos + length; }

  std::vector<std::size_t> positions() const {
    std::vector<std::size_t> out(length);
    for (std::size_t i = 0; i < length; ++i) out[i] = start_pos + i;
    return out;
  }
};

struct ResolvedPrompt {
  TokenSequence prompt;
  SourceSpan span;
};

inline ResolvedPrompt resolve_source_span(const PromptParts& parts, const TemplateRegistry& templates,
                                          const ModelBackend& backend) {
  const TokenSequence context = backend.tokenize(parts.context_text);
  if (context.empty()) throw EmptyContextError();
  ResolvedPrompt out;
  for (const auto& piece : templates.at(parts.template_id).pieces(parts.context_text, parts.query_text)) {
    if (piece.is_context) {
      out.span.start_pos = out.prompt.size();
      out.span.length = context.size();
      out.span.tokens = context;
      out.prompt.tokens.insert(out.prompt.tokens.end(), context.tokens.begin(), context.tokens.end());
    } else {
      const TokenSequence seq = backend.tokenize(piece.text);
      out.prompt.tokens.insert(out.prompt.tokens.end(), seq.tokens.begin(), seq.tokens.end());
    }
  }
  return out;
}

inline TokenSequence render_query_only(const PromptParts& parts, const TemplateRegistry& templates,
                                       const ModelBackend& backend) {
  return backend.tokenize(templates.at(parts.template_id).render_without_context(parts.query_text));
}

using TokenScores = std::map<TokenId, double>;

struct SupportSet {
  std::set<TokenId> members;
  std::map<TokenId, std::vector<std::size_t>> positions;
  std::optional<TokenScores> semantic_score;

  bool contains(TokenId id) const { return members.count(id) != 0; }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// s(w) = (1/|S|) * sum over span occurrences c of cosine(e_w, e_c). The sum
// is grouped by distinct span token in id order, so it does not depend on the
// order of occurrences. Each distinct token is embedded exactly once.
inline TokenScores compute_semantic_scores(const std::set<TokenId>& members, const SourceSpan& span,
                                           ModelBackend& backend) {
  std::map<TokenId, std::size_t> multiplicity;
  for (TokenId c : span.tokens.tokens) ++multiplicity[c];
  for (TokenId w : members) multiplicity.try_emplace(w, 0);

  std::map<TokenId, std::vector<double>> embeddings;
  std::map<TokenId, double> squared_norm;
  for (const auto& [id, count] : multiplicity) {
    auto e = backend.embed(id);
    const double n2 = dot(e, e);
    if (!(n2 > 0.0)) throw ZeroNormError("token '" + backend.token_text(id) + "'");
    squared_norm[id] = n2;
    embeddings.emplace(id, std::move(e));
  }

  const double span_size = static_cast<double>(span.tokens.size());
  TokenScores scores;
  for (TokenId w : members) {
    const auto& ew = embeddings.at(w);
    double acc = 0.0;
    for (const auto& [c, count] : multiplicity) {
      if (count == 0) continue;
      const double cosine = dot(ew, embeddings.at(c)) / std::sqrt(squared_norm.at(w) * squared_norm.at(c));
      acc += static_cast<double>(count) * cosine;
    }
    scores[w] = acc / span_size;
  }
  return scores;
}

inline SupportSet build_support_set(const TokenSequence& prompt, const SourceSpan& span, ModelBackend& backend) {
  if (span.end_pos() > prompt.size() || span.tokens.size() != span.length)
    throw InvariantError("source span does not fit the prompt");
  const auto& special = backend.capabilities().special_token_ids;
  SupportSet support;
  for (std::size_t p = span.start_pos; p < span.end_pos(); ++p) {
    const TokenId id = prompt[p];
    if (id != span.tokens[p - span.start_pos]) throw InvariantError("source span does not match the prompt");
    if (special.count(id)) continue;
    support.members.insert(id);
    support.positions[id].push_back(p);
  }
  if (backend.capabilities().provides_embeddings)
    support.semantic_score = compute_semantic_scores(support.members, span, backend);
  return support;
}

}  // namespace cfb

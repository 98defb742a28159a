#include "alm/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace alm {

namespace {

std::uint64_t pair_key(TokenId left, TokenId right) {
  return (static_cast<std::uint64_t>(left) << 32) | right;
}

std::string printable_token(const TokenString& token) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < token.size(); ++i) {
    if (i) os << ' ';
    Symbol s = token[i];
    if (s >= 0x20 && s < 0x7f)
      os << '\'' << static_cast<char>(s) << '\'';
    else
      os << s;
  }
  os << ']';
  return os.str();
}

}  // namespace

std::string to_string(TokenizerKind kind) {
  switch (kind) {
    case TokenizerKind::LongestMatch: return "longest_match";
    case TokenizerKind::Bpe: return "bpe";
    case TokenizerKind::Byte: return "byte";
  }
  return "?";
}

TokenizerKind tokenizer_kind_from_string(const std::string& s) {
  if (s == "longest_match") return TokenizerKind::LongestMatch;
  if (s == "bpe") return TokenizerKind::Bpe;
  if (s == "byte") return TokenizerKind::Byte;
  throw ConfigError("unknown tokenizer kind: \"" + s + "\"");
}

Tokenizer Tokenizer::from_parts(std::string name, TokenizerKind kind,
                                std::vector<TokenString> vocab,
                                std::vector<std::pair<TokenString, TokenString>> merges,
                                std::vector<SpecialToken> specials) {
  Tokenizer t;
  t.name_ = std::move(name);
  t.kind_ = kind;
  t.vocab_ = std::move(vocab);
  t.merges_ = std::move(merges);
  t.specials_ = std::move(specials);
  t.validate(/*requireByteCoverage=*/true);
  t.build_indexes();
  return t;
}

Tokenizer Tokenizer::from_parts_unchecked(std::string name, TokenizerKind kind,
                                          std::vector<TokenString> vocab,
                                          std::vector<std::pair<TokenString, TokenString>> merges,
                                          std::vector<SpecialToken> specials) {
  Tokenizer t;
  t.name_ = std::move(name);
  t.kind_ = kind;
  t.vocab_ = std::move(vocab);
  t.merges_ = std::move(merges);
  t.specials_ = std::move(specials);
  t.validate(/*requireByteCoverage=*/false);
  t.build_indexes();
  return t;
}

void Tokenizer::validate(bool requireByteCoverage) const {
  if (name_.empty()) throw ConfigError("tokenizer: empty name");

  const Symbol alphabet = kByteAlphabetSize + static_cast<Symbol>(specials_.size());
  std::vector<bool> specialSeen(specials_.size(), false);
  for (const SpecialToken& sp : specials_) {
    if (sp.value < kByteAlphabetSize || sp.value >= alphabet)
      throw ConfigError("tokenizer: special symbol value " + std::to_string(sp.value) +
                        " outside [256, 256 + specialCount)");
    std::size_t idx = sp.value - kByteAlphabetSize;
    if (specialSeen[idx])
      throw ConfigError("tokenizer: duplicate special symbol value " + std::to_string(sp.value));
    specialSeen[idx] = true;
  }

  if (vocab_.empty()) throw ConfigError("tokenizer: empty vocabulary");

  std::unordered_map<TokenString, TokenId, TokenStringHash> seen;
  std::array<bool, kByteAlphabetSize> byteCovered{};
  for (TokenId id = 0; id < vocab_.size(); ++id) {
    const TokenString& token = vocab_[id];
    if (token.empty()) throw ConfigError("tokenizer: empty token at id " + std::to_string(id));
    for (Symbol s : token) {
      if (s >= alphabet)
        throw ConfigError("tokenizer: token " + printable_token(token) + " uses symbol " +
                          std::to_string(s) + " outside the alphabet of size " +
                          std::to_string(alphabet));
      if (!is_byte_symbol(s) && token.size() != 1)
        throw ConfigError("tokenizer: special symbol " + std::to_string(s) +
                          " must be the entire token, got " + printable_token(token));
    }
    if (!seen.emplace(token, id).second)
      throw ConfigError("tokenizer: duplicate token " + printable_token(token));
    if (token.size() == 1 && is_byte_symbol(token[0])) byteCovered[token[0]] = true;
  }

  if (requireByteCoverage) {
    for (Symbol b = 0; b < kByteAlphabetSize; ++b)
      if (!byteCovered[b])
        throw ConfigError("tokenizer: missing byte coverage for byte " + std::to_string(b));
  }

  if (kind_ == TokenizerKind::Byte) {
    // exactly the single bytes plus special symbols
    for (const TokenString& token : vocab_) {
      if (token.size() != 1)
        throw ConfigError("tokenizer: byte kind admits only single-symbol tokens, got " +
                          printable_token(token));
    }
    std::size_t expected = (requireByteCoverage ? kByteAlphabetSize : 0) + specials_.size();
    if (requireByteCoverage && vocab_.size() != expected)
      throw ConfigError("tokenizer: byte kind requires exactly 256 byte tokens plus specials, got " +
                        std::to_string(vocab_.size()));
  }

  if (kind_ != TokenizerKind::Bpe && !merges_.empty())
    throw ConfigError("tokenizer: merges are only valid for kind bpe");
  for (const auto& [left, right] : merges_) {
    if (!seen.count(left))
      throw ConfigError("tokenizer: merge references unknown token " + printable_token(left));
    if (!seen.count(right))
      throw ConfigError("tokenizer: merge references unknown token " + printable_token(right));
    TokenString joined = left;
    joined.insert(joined.end(), right.begin(), right.end());
    if (!seen.count(joined))
      throw ConfigError("tokenizer: merge result " + printable_token(joined) +
                        " is not in the vocabulary");
  }
}

void Tokenizer::build_indexes() {
  tokenToId_.reserve(vocab_.size());
  byteTokenId_.fill(-1);
  trie_.clear();
  trie_.emplace_back();
  for (TokenId id = 0; id < vocab_.size(); ++id) {
    const TokenString& token = vocab_[id];
    tokenToId_.emplace(token, id);
    if (token.size() == 1) {
      if (is_byte_symbol(token[0]))
        byteTokenId_[token[0]] = static_cast<std::int32_t>(id);
      else
        specialTokenId_[token[0]] = id;
    }
    std::int32_t node = 0;
    for (Symbol s : token) {
      auto it = trie_[node].next.find(s);
      if (it == trie_[node].next.end()) {
        trie_.emplace_back();
        std::int32_t fresh = static_cast<std::int32_t>(trie_.size() - 1);
        trie_[node].next.emplace(s, fresh);
        node = fresh;
      } else {
        node = it->second;
      }
    }
    trie_[node].tokenId = static_cast<std::int32_t>(id);
  }
  mergeRank_.reserve(merges_.size());
  for (std::uint32_t rank = 0; rank < merges_.size(); ++rank) {
    const auto& [left, right] = merges_[rank];
    TokenId leftId = tokenToId_.at(left);
    TokenId rightId = tokenToId_.at(right);
    TokenString joined = left;
    joined.insert(joined.end(), right.begin(), right.end());
    TokenId mergedId = tokenToId_.at(joined);
    mergeRank_.emplace(pair_key(leftId, rightId), std::make_pair(rank, mergedId));
  }
}

const TokenString& Tokenizer::token(TokenId id) const {
  if (id >= vocab_.size())
    throw std::out_of_range("tokenizer: token id " + std::to_string(id) + " out of range");
  return vocab_[id];
}

std::optional<TokenId> Tokenizer::find(const TokenString& token) const {
  auto it = tokenToId_.find(token);
  if (it == tokenToId_.end()) return std::nullopt;
  return it->second;
}

bool Tokenizer::is_special_token(TokenId id) const {
  const TokenString& t = token(id);
  return t.size() == 1 && !is_byte_symbol(t[0]);
}

std::vector<TokenId> Tokenizer::tokenize(std::span<const Symbol> text) const {
  const Symbol alphabet = alphabet_size();
  for (Symbol s : text)
    if (s >= alphabet)
      throw std::invalid_argument("tokenize: symbol " + std::to_string(s) +
                                  " outside the alphabet of size " + std::to_string(alphabet));

  std::vector<TokenId> out;
  out.reserve(text.size() / 2 + 1);
  // Specials are atomic tokens, so they split the text into byte segments.
  std::size_t segStart = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    bool atSpecial = i < text.size() && !is_byte_symbol(text[i]);
    if (i == text.size() || atSpecial) {
      std::span<const Symbol> seg = text.subspan(segStart, i - segStart);
      if (!seg.empty()) {
        std::vector<TokenId> ids;
        switch (kind_) {
          case TokenizerKind::LongestMatch: ids = tokenize_segment_longest(seg); break;
          case TokenizerKind::Bpe: ids = tokenize_segment_bpe(seg); break;
          case TokenizerKind::Byte:
            ids.reserve(seg.size());
            for (Symbol s : seg) {
              std::int32_t id = byteTokenId_[s];
              if (id < 0)
                throw std::invalid_argument("tokenize: byte " + std::to_string(s) +
                                            " is not covered by the vocabulary");
              ids.push_back(static_cast<TokenId>(id));
            }
            break;
        }
        out.insert(out.end(), ids.begin(), ids.end());
      }
      if (atSpecial) {
        auto it = specialTokenId_.find(text[i]);
        if (it == specialTokenId_.end())
          throw std::invalid_argument("tokenize: special symbol " + std::to_string(text[i]) +
                                      " has no vocabulary token");
        out.push_back(it->second);
      }
      segStart = i + 1;
    }
  }
  return out;
}

std::vector<TokenId> Tokenizer::tokenize_bytes(std::string_view text) const {
  SymbolString symbols = symbols_from_bytes(text);
  return tokenize(symbols);
}

std::vector<TokenId> Tokenizer::tokenize_segment_longest(std::span<const Symbol> seg) const {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < seg.size()) {
    std::int32_t node = 0;
    std::int32_t bestId = -1;
    std::size_t bestLen = 0;
    for (std::size_t j = pos; j < seg.size(); ++j) {
      auto it = trie_[node].next.find(seg[j]);
      if (it == trie_[node].next.end()) break;
      node = it->second;
      if (trie_[node].tokenId >= 0) {
        bestId = trie_[node].tokenId;
        bestLen = j - pos + 1;
      }
    }
    if (bestId < 0)
      throw std::invalid_argument("tokenize: symbol " + std::to_string(seg[pos]) +
                                  " is not covered by the vocabulary");
    out.push_back(static_cast<TokenId>(bestId));
    pos += bestLen;
  }
  return out;
}

std::vector<TokenId> Tokenizer::tokenize_segment_bpe(std::span<const Symbol> seg) const {
  std::vector<TokenId> ids;
  ids.reserve(seg.size());
  for (Symbol s : seg) {
    std::int32_t id = byteTokenId_[s];
    if (id < 0)
      throw std::invalid_argument("tokenize: byte " + std::to_string(s) +
                                  " is not covered by the vocabulary");
    ids.push_back(static_cast<TokenId>(id));
  }
  // Lowest-rank-first pair merging: repeatedly merge every occurrence of the
  // best-ranked adjacent pair, left to right.
  while (ids.size() >= 2) {
    std::uint32_t bestRank = std::numeric_limits<std::uint32_t>::max();
    TokenId bestMerged = 0;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      auto it = mergeRank_.find(pair_key(ids[i], ids[i + 1]));
      if (it != mergeRank_.end() && it->second.first < bestRank) {
        bestRank = it->second.first;
        bestMerged = it->second.second;
      }
    }
    if (bestRank == std::numeric_limits<std::uint32_t>::max()) break;
    const auto& [left, right] = merges_[bestRank];
    TokenId leftId = tokenToId_.at(left);
    TokenId rightId = tokenToId_.at(right);
    std::vector<TokenId> next;
    next.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i + 1 < ids.size() && ids[i] == leftId && ids[i + 1] == rightId) {
        next.push_back(bestMerged);
        ++i;
      } else {
        next.push_back(ids[i]);
      }
    }
    ids = std::move(next);
  }
  return ids;
}

SymbolString Tokenizer::detokenize(std::span<const TokenId> ids) const {
  SymbolString out;
  for (TokenId id : ids) {
    const TokenString& t = token(id);  // throws on out-of-range ids
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

bool same_tokenizer(const Tokenizer& a, const Tokenizer& b) {
  return a.kind() == b.kind() && a.vocab() == b.vocab();
}

namespace {

TokenString parse_token_entry(const nlohmann::json& entry, Symbol alphabet) {
  TokenString token;
  if (entry.is_string()) {
    for (unsigned char c : entry.get<std::string>()) token.push_back(static_cast<Symbol>(c));
  } else if (entry.is_array()) {
    for (const auto& v : entry) {
      if (!v.is_number_unsigned())
        throw ConfigError("tokenizer spec: token symbol values must be non-negative integers");
      std::uint64_t value = v.get<std::uint64_t>();
      if (value >= alphabet)
        throw ConfigError("tokenizer spec: symbol value " + std::to_string(value) +
                          " outside the alphabet of size " + std::to_string(alphabet));
      token.push_back(static_cast<Symbol>(value));
    }
  } else {
    throw ConfigError("tokenizer spec: vocab entries must be strings or symbol arrays");
  }
  return token;
}

}  // namespace

Tokenizer parse_tokenizer_spec(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("tokenizer spec: document must be an object");
  if (!doc.contains("name") || !doc["name"].is_string())
    throw ConfigError("tokenizer spec: missing string field \"name\"");
  if (!doc.contains("kind") || !doc["kind"].is_string())
    throw ConfigError("tokenizer spec: missing string field \"kind\"");

  std::string name = doc["name"].get<std::string>();
  TokenizerKind kind = tokenizer_kind_from_string(doc["kind"].get<std::string>());

  std::vector<SpecialToken> specials;
  if (doc.contains("special_tokens")) {
    if (!doc["special_tokens"].is_array())
      throw ConfigError("tokenizer spec: \"special_tokens\" must be an array");
    for (const auto& sp : doc["special_tokens"]) {
      if (!sp.is_object() || !sp.contains("symbol_value"))
        throw ConfigError("tokenizer spec: special tokens need a \"symbol_value\"");
      SpecialToken st;
      st.value = sp["symbol_value"].get<Symbol>();
      st.label = sp.value("label", std::string{});
      specials.push_back(std::move(st));
    }
  }
  const Symbol alphabet = kByteAlphabetSize + static_cast<Symbol>(specials.size());

  std::vector<TokenString> vocab;
  if (doc.contains("vocab")) {
    if (!doc["vocab"].is_array()) throw ConfigError("tokenizer spec: \"vocab\" must be an array");
    for (const auto& entry : doc["vocab"]) vocab.push_back(parse_token_entry(entry, alphabet));
  } else if (kind == TokenizerKind::Byte) {
    for (Symbol b = 0; b < kByteAlphabetSize; ++b) vocab.push_back({b});
  } else {
    throw ConfigError("tokenizer spec: missing \"vocab\" (only kind byte may omit it)");
  }

  // Declared specials that are not explicit vocab entries become trailing
  // single-symbol tokens, in declaration order.
  for (const SpecialToken& sp : specials) {
    TokenString single{sp.value};
    if (std::find(vocab.begin(), vocab.end(), single) == vocab.end()) vocab.push_back(single);
  }

  std::vector<std::pair<TokenString, TokenString>> merges;
  if (doc.contains("merges")) {
    if (!doc["merges"].is_array()) throw ConfigError("tokenizer spec: \"merges\" must be an array");
    for (const auto& m : doc["merges"]) {
      if (!m.is_array() || m.size() != 2)
        throw ConfigError("tokenizer spec: each merge must be a [left, right] pair");
      merges.emplace_back(parse_token_entry(m[0], alphabet), parse_token_entry(m[1], alphabet));
    }
  }

  return Tokenizer::from_parts(std::move(name), kind, std::move(vocab), std::move(merges),
                               std::move(specials));
}

Tokenizer load_tokenizer(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open tokenizer spec: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed tokenizer spec " + path + ": " + e.what());
  }
  return parse_tokenizer_spec(doc);
}

PretokenBoundarySet boundary_set(const Tokenizer& a, const Tokenizer& b) {
  std::array<bool, kByteAlphabetSize> interior{};
  for (const Tokenizer* tok : {&a, &b}) {
    for (const TokenString& token : tok->vocab())
      for (std::size_t pos = 1; pos < token.size(); ++pos)
        if (is_byte_symbol(token[pos])) interior[token[pos]] = true;
  }
  PretokenBoundarySet out;
  for (Symbol byte = 0; byte < kByteAlphabetSize; ++byte) {
    if (!interior[byte]) {
      out.member[byte] = true;
      out.bytes.push_back(byte);
    }
  }
  return out;
}

}  // namespace alm

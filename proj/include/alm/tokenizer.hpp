#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "alm/types.hpp"

namespace alm {

enum class TokenizerKind { LongestMatch, Bpe, Byte };

std::string to_string(TokenizerKind kind);
TokenizerKind tokenizer_kind_from_string(const std::string& s);

/// A vocabulary entry: a non-empty sequence of symbols. A special symbol, if
/// present, is the entire token.
using TokenString = SymbolString;

struct SpecialToken {
  Symbol value = 0;
  std::string label;
};

/// Byte-level tokenizer model (V, T): an ordered vocabulary of extended-byte
/// token strings plus a deterministic tokenization function with the byte
/// fusion property. Detokenization is a left inverse of tokenization.
///
/// Immutable after construction; all operations are const and thread-safe.
class Tokenizer {
 public:
  /// Validates all vocabulary invariants (uniqueness, byte coverage, special
  /// atomicity, merge consistency) and builds the lookup structures.
  static Tokenizer from_parts(std::string name, TokenizerKind kind,
                              std::vector<TokenString> vocab,
                              std::vector<std::pair<TokenString, TokenString>> merges,
                              std::vector<SpecialToken> specials);

  /// Skips byte-coverage validation. For programmatic fixtures over a
  /// restricted alphabet; tokenize() is then total only for covered symbols.
  static Tokenizer from_parts_unchecked(std::string name, TokenizerKind kind,
                                        std::vector<TokenString> vocab,
                                        std::vector<std::pair<TokenString, TokenString>> merges,
                                        std::vector<SpecialToken> specials);

  const std::string& name() const { return name_; }
  TokenizerKind kind() const { return kind_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  const std::vector<TokenString>& vocab() const { return vocab_; }
  const TokenString& token(TokenId id) const;
  std::optional<TokenId> find(const TokenString& token) const;
  const std::vector<SpecialToken>& special_tokens() const { return specials_; }

  /// 256 + number of special tokens.
  Symbol alphabet_size() const { return kByteAlphabetSize + static_cast<Symbol>(specials_.size()); }
  bool is_special_token(TokenId id) const;

  /// Deterministic tokenization. Concatenating the resulting token strings
  /// reproduces `text` exactly (byte fusion).
  std::vector<TokenId> tokenize(std::span<const Symbol> text) const;
  std::vector<TokenId> tokenize_bytes(std::string_view text) const;

  /// Left inverse of tokenize: concatenation of the token strings.
  SymbolString detokenize(std::span<const TokenId> ids) const;

 private:
  Tokenizer() = default;
  void build_indexes();
  void validate(bool requireByteCoverage) const;
  std::vector<TokenId> tokenize_segment_longest(std::span<const Symbol> seg) const;
  std::vector<TokenId> tokenize_segment_bpe(std::span<const Symbol> seg) const;

  std::string name_;
  TokenizerKind kind_ = TokenizerKind::LongestMatch;
  std::vector<TokenString> vocab_;
  std::vector<std::pair<TokenString, TokenString>> merges_;
  std::vector<SpecialToken> specials_;

  struct TokenStringHash {
    std::size_t operator()(const TokenString& s) const {
      std::size_t h = 1469598103934665603ull;
      for (Symbol c : s) {
        h ^= c;
        h *= 1099511628211ull;
      }
      return h;
    }
  };
  std::unordered_map<TokenString, TokenId, TokenStringHash> tokenToId_;
  // longest-match trie; node 0 is the root
  struct TrieNode {
    std::unordered_map<Symbol, std::int32_t> next;
    std::int32_t tokenId = -1;
  };
  std::vector<TrieNode> trie_;
  std::array<std::int32_t, kByteAlphabetSize> byteTokenId_{};
  std::unordered_map<Symbol, TokenId> specialTokenId_;
  // BPE: (leftId, rightId) -> {rank, mergedId}
  std::unordered_map<std::uint64_t, std::pair<std::uint32_t, TokenId>> mergeRank_;
};

/// Structural equality of the tokenizer model (kind + vocab + merges).
bool same_tokenizer(const Tokenizer& a, const Tokenizer& b);

/// Parses the tokenizer-spec document schema: fields `name`, `kind`
/// ("longest_match" | "bpe" | "byte"), `vocab` (tokens as UTF-8 strings or
/// arrays of symbol values; optional for kind "byte"), `merges` ([left, right]
/// pairs, BPE only) and `special_tokens` ({symbol_value, label}). Token ids
/// follow array order; declared specials missing from the vocab are appended
/// as single-symbol tokens in declaration order.
Tokenizer parse_tokenizer_spec(const nlohmann::json& doc);

/// Reads and parses a tokenizer-spec file. Throws ConfigError on any problem.
Tokenizer load_tokenizer(const std::string& path);

/// Bytes that never occur at any position >= 1 of any token of either
/// vocabulary. Such a byte can only ever start a token.
struct PretokenBoundarySet {
  std::array<bool, kByteAlphabetSize> member{};
  std::vector<Symbol> bytes;  // sorted members

  bool contains(Symbol s) const { return s < kByteAlphabetSize && member[s]; }
  std::size_t size() const { return bytes.size(); }
};

PretokenBoundarySet boundary_set(const Tokenizer& a, const Tokenizer& b);

}  // namespace alm

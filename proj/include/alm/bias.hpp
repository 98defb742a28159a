#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "alm/alignment.hpp"
#include "alm/tokenizer.hpp"
#include "alm/types.hpp"

namespace alm {

/// All cover encodings of a single token t: valid token sequences u with
/// T(D(u)) = u whose decoding extends D(t) and whose last token straddles the
/// end of D(t). Contains the singleton [t].
struct CoverEncodingSet {
  TokenId tokenId = 0;
  std::vector<std::vector<TokenId>> covers;
};

/// Decoded covers other than the singleton: the texts ruled out by observing
/// the token as the latest tokenization step.
struct ImpliedExclusions {
  TokenId tokenId = 0;
  std::vector<SymbolString> excluded;  // full decoded strings, sorted
};

struct UnigramTable {
  std::vector<std::uint64_t> counts;  // per token id
  std::vector<double> prob;           // add-one smoothed, sums to 1
  std::uint64_t totalCount = 0;
};

/// Sparse symmetrized tokenization-bias differences over last-token pairs.
/// Absent entries are zero.
struct BiasMatrix {
  std::string studentTokenizer;
  std::string teacherTokenizer;
  std::unordered_map<std::uint64_t, double> entries;  // (studentId << 32) | teacherId

  static std::uint64_t key(TokenId studentId, TokenId teacherId) {
    return (static_cast<std::uint64_t>(studentId) << 32) | teacherId;
  }
  double lookup(TokenId studentId, TokenId teacherId) const {
    auto it = entries.find(key(studentId, teacherId));
    return it == entries.end() ? 0.0 : it->second;
  }
};

/// Enumerates covers as u = T(x[:p]) + [v] over every split p of the token
/// bytes x and every vocabulary token v matching x[p:] and extending strictly
/// past the end, keeping candidates that pass the validity check T(D(u)) = u.
/// Throws for special-symbol tokens (no byte content).
CoverEncodingSet cover_encodings(const Tokenizer& tok, TokenId tokenId);

ImpliedExclusions implied_exclusions(const Tokenizer& tok, TokenId tokenId);

/// Exclusions keyed by their extension past the token end (the decoded cover
/// minus the token's own bytes), mapped to the cover's straddling last token.
/// Empty for special tokens. Exclusions from different vocabularies are
/// comparable in this suffix-anchored form when both tokens end at the same
/// text position.
std::map<SymbolString, TokenId> exclusion_extensions(const Tokenizer& tok, TokenId tokenId);

struct BiasDifference {
  double studentGivenTeacher = 0.0;  // teacher-side exclusions the student lacks
  double teacherGivenStudent = 0.0;
  double symmetrized = 0.0;
};

/// Approximate tokenization-bias difference for a last-token pair ending at
/// the same text position: each direction sums the unigram probability of the
/// straddling token over the exclusion extensions present on one side only.
BiasDifference bias_difference(TokenId lastTokStudent, TokenId lastTokTeacher,
                               const Tokenizer& tokStudent, const Tokenizer& tokTeacher,
                               const UnigramTable& unigramStudent,
                               const UnigramTable& unigramTeacher);

/// Symmetrized bias for every co-occurring last-token pair with a nonzero
/// value. A pair can co-occur only if one token's bytes are a suffix of the
/// other's and the canonical tokenizations of the longer token's bytes end in
/// the pair; other pairs are never looked up and are not stored.
BiasMatrix build_bias_matrix(const Tokenizer& tokStudent, const Tokenizer& tokTeacher,
                             const UnigramTable& unigramStudent,
                             const UnigramTable& unigramTeacher, unsigned threads = 1);

/// Add-one smoothed token frequencies over the tokenized corpus.
UnigramTable unigram_from_corpus(const Tokenizer& tok, const std::vector<std::string>& corpus);

/// Per-quad max of the prefix-end and chunk-end pair biases, for
/// apply_constraint with ConstraintKind::BiasThreshold. The first quad has
/// prefix bias zero.
ConstraintContext bias_constraint_context(const ChunkAlignment& alignment,
                                          std::span<const TokenId> teacherIds,
                                          std::span<const TokenId> studentIds,
                                          const BiasMatrix& matrix);

void save_bias_matrix(const BiasMatrix& matrix, const std::string& path);
BiasMatrix load_bias_matrix(const std::string& path);

}  // namespace alm

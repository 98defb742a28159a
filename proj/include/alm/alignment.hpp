#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "alm/tokenizer.hpp"
#include "alm/types.hpp"

namespace alm {

/// One aligned chunk: teacher token span [i, j) and student token span [k, l)
/// decode to the same symbol substring, and both prefixes decode equally.
struct ChunkQuadruple {
  std::size_t i = 0, j = 0;  // teacher span
  std::size_t k = 0, l = 0;  // student span

  bool operator==(const ChunkQuadruple&) const = default;
};

struct ChunkAlignment {
  std::vector<ChunkQuadruple> quads;
  std::size_t teacherLen = 0;
  std::size_t studentLen = 0;
};

struct BinaryMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> data;  // row-major

  BinaryMatrix() = default;
  BinaryMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0) {}
  std::uint8_t& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Chunk matrices for batched loss computation: column c of M (student) and
/// N (teacher) marks the tokens of chunk c; K = min(studentLen, teacherLen)
/// with all-zero trailing columns.
struct ChunkMatrices {
  BinaryMatrix m;  // studentLen x K
  BinaryMatrix n;  // teacherLen x K
};

enum class ConstraintKind { None, BoundaryMass, BiasThreshold };

struct AlignmentConstraint {
  ConstraintKind kind = ConstraintKind::None;
  double gamma = 0.0;
};

/// Per-quad context used by apply_constraint. For BoundaryMass, boundaryMass[r]
/// is the teacher boundary mass after quad r's chunk; for BiasThreshold,
/// biasScore[r] is max(prefix-end bias, chunk-end bias) for quad r.
struct ConstraintContext {
  std::vector<double> boundaryMass;
  std::vector<double> biasScore;
};

/// Single forward pass over both token sequences, advancing whichever
/// cumulative symbol offset is smaller and emitting a quadruple whenever the
/// offsets coincide. The result tiles both sequences exactly.
/// Throws std::invalid_argument if the sequences decode to different texts.
ChunkAlignment align_greedy(std::span<const TokenId> teacherIds, std::span<const TokenId> studentIds,
                            const Tokenizer& teacherTok, const Tokenizer& studentTok);

/// Independent construction from the intersection of token-end symbol offsets.
/// Must equal align_greedy on all inputs.
ChunkAlignment align_bruteforce(std::span<const TokenId> teacherIds,
                                std::span<const TokenId> studentIds, const Tokenizer& teacherTok,
                                const Tokenizer& studentTok);

/// Keeps the subsequence of quads satisfying the constraint: BoundaryMass
/// keeps quads with context mass >= gamma, BiasThreshold keeps quads with
/// context bias <= gamma, None is the identity.
ChunkAlignment apply_constraint(const ChunkAlignment& alignment, const AlignmentConstraint& constraint,
                                const ConstraintContext& ctx);

ChunkMatrices to_matrices(const ChunkAlignment& alignment);

/// (per-position log-probs row vector) * matrix -> per-chunk sums.
std::vector<double> row_times_matrix(std::span<const double> row, const BinaryMatrix& matrix);

}  // namespace alm

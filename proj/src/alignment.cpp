#include "alm/alignment.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace alm {

namespace {

void check_same_text(std::span<const TokenId> teacherIds, std::span<const TokenId> studentIds,
                     const Tokenizer& teacherTok, const Tokenizer& studentTok) {
  if (teacherTok.detokenize(teacherIds) != studentTok.detokenize(studentIds))
    throw std::invalid_argument("alignment: token sequences decode to different texts");
}

}  // namespace

ChunkAlignment align_greedy(std::span<const TokenId> teacherIds, std::span<const TokenId> studentIds,
                            const Tokenizer& teacherTok, const Tokenizer& studentTok) {
  check_same_text(teacherIds, studentIds, teacherTok, studentTok);

  ChunkAlignment out;
  out.teacherLen = teacherIds.size();
  out.studentLen = studentIds.size();

  std::size_t ti = 0, si = 0;       // next token index per side
  std::size_t offT = 0, offS = 0;   // cumulative symbol offsets
  std::size_t chunkI = 0, chunkK = 0;
  while (ti < teacherIds.size() && si < studentIds.size()) {
    std::size_t endT = offT + teacherTok.token(teacherIds[ti]).size();
    std::size_t endS = offS + studentTok.token(studentIds[si]).size();
    if (endT < endS) {
      offT = endT;
      ++ti;
    } else if (endS < endT) {
      offS = endS;
      ++si;
    } else {
      offT = endT;
      offS = endS;
      ++ti;
      ++si;
      out.quads.push_back({chunkI, ti, chunkK, si});
      chunkI = ti;
      chunkK = si;
    }
  }
  return out;
}

ChunkAlignment align_bruteforce(std::span<const TokenId> teacherIds,
                                std::span<const TokenId> studentIds, const Tokenizer& teacherTok,
                                const Tokenizer& studentTok) {
  check_same_text(teacherIds, studentIds, teacherTok, studentTok);

  // offset -> number of tokens ending at or before that offset
  auto end_offsets = [](std::span<const TokenId> ids, const Tokenizer& tok) {
    std::unordered_map<std::size_t, std::size_t> count;
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    count.emplace(0, 0);
    for (std::size_t t = 0; t < ids.size(); ++t) {
      off += tok.token(ids[t]).size();
      count[off] = t + 1;
      offsets.push_back(off);
    }
    return std::make_pair(std::move(count), std::move(offsets));
  };

  auto [countT, offsetsT] = end_offsets(teacherIds, teacherTok);
  auto [countS, offsetsS] = end_offsets(studentIds, studentTok);

  std::vector<std::size_t> shared;
  for (std::size_t off : offsetsT)
    if (countS.count(off)) shared.push_back(off);

  ChunkAlignment out;
  out.teacherLen = teacherIds.size();
  out.studentLen = studentIds.size();
  std::size_t prev = 0;
  for (std::size_t off : shared) {
    out.quads.push_back({countT.at(prev), countT.at(off), countS.at(prev), countS.at(off)});
    prev = off;
  }
  return out;
}

ChunkAlignment apply_constraint(const ChunkAlignment& alignment, const AlignmentConstraint& constraint,
                                const ConstraintContext& ctx) {
  if (constraint.kind == ConstraintKind::None) return alignment;

  const std::vector<double>* values = nullptr;
  if (constraint.kind == ConstraintKind::BoundaryMass) values = &ctx.boundaryMass;
  if (constraint.kind == ConstraintKind::BiasThreshold) values = &ctx.biasScore;
  if (values->size() != alignment.quads.size())
    throw std::invalid_argument("apply_constraint: context has " + std::to_string(values->size()) +
                                " entries for " + std::to_string(alignment.quads.size()) + " quads");

  ChunkAlignment out;
  out.teacherLen = alignment.teacherLen;
  out.studentLen = alignment.studentLen;
  for (std::size_t r = 0; r < alignment.quads.size(); ++r) {
    bool keep = constraint.kind == ConstraintKind::BoundaryMass
                    ? (*values)[r] >= constraint.gamma
                    : (*values)[r] <= constraint.gamma;
    if (keep) out.quads.push_back(alignment.quads[r]);
  }
  return out;
}

ChunkMatrices to_matrices(const ChunkAlignment& alignment) {
  std::size_t k = std::min(alignment.studentLen, alignment.teacherLen);
  ChunkMatrices out;
  out.m = BinaryMatrix(alignment.studentLen, k);
  out.n = BinaryMatrix(alignment.teacherLen, k);
  for (std::size_t c = 0; c < alignment.quads.size(); ++c) {
    const ChunkQuadruple& q = alignment.quads[c];
    for (std::size_t t = q.k; t < q.l; ++t) out.m.at(t, c) = 1;
    for (std::size_t t = q.i; t < q.j; ++t) out.n.at(t, c) = 1;
  }
  return out;
}

std::vector<double> row_times_matrix(std::span<const double> row, const BinaryMatrix& matrix) {
  if (row.size() != matrix.rows)
    throw std::invalid_argument("row_times_matrix: row length " + std::to_string(row.size()) +
                                " != matrix rows " + std::to_string(matrix.rows));
  std::vector<double> out(matrix.cols, 0.0);
  for (std::size_t r = 0; r < matrix.rows; ++r)
    for (std::size_t c = 0; c < matrix.cols; ++c)
      if (matrix.at(r, c)) out[c] += row[r];
  return out;
}

}  // namespace alm

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "alm/alignment.hpp"

namespace alm {

enum class DivergenceKind { KL, TVD, KLInf, TVDInf };

std::string to_string(DivergenceKind kind);
DivergenceKind divergence_kind_from_string(const std::string& s);

struct DivergenceSpec {
  DivergenceKind kind = DivergenceKind::KL;
  double tau = 100.0;  // ignored for the *Inf kinds
};

struct LossBreakdown {
  double total = 0.0;  // mean of perChunk, or 0 when chunkCount == 0
  std::vector<double> perChunk;
  std::size_t chunkCount = 0;
};

struct TaskGradient {
  std::string taskId;
  std::vector<double> lastLayerGrad;
};

/// The f-divergence over the binarised outcomes {chunk, not-chunk} of a pair
/// of chunk log-probabilities, with temperature tau applied as p^(1/tau).
///
///   KL      f(p^|q^) + f(1-p^|1-q^) with f(a|b) = a log(a/b)
///   TVD     |p^ - q^|
///   KLInf   (lp - lq) + lp log(lq / lp)      (tau -> inf closed form)
///   TVDInf  |lp - lq|                        (tau -> inf closed form)
///
/// Non-negative, zero iff the log-probabilities are equal.
double binarized_f(double teacherChunkLp, double studentChunkLp, const DivergenceSpec& spec);

/// d binarized_f / d studentChunkLp.
double binarized_f_dstudent(double teacherChunkLp, double studentChunkLp,
                            const DivergenceSpec& spec);

/// Per-chunk boundary masses for outcome debiasing, one entry per chunk on
/// each side.
struct DebiasInputs {
  std::vector<double> teacherBoundaryMass;
  std::vector<double> studentBoundaryMass;
};

struct AlmLossResult {
  LossBreakdown breakdown;
  /// d breakdown.total / d studentChunkLps[r]. Debiasing shifts a chunk
  /// log-probability by a constant in it, so this is also the gradient
  /// w.r.t. the debiased value (and w.r.t. the log boundary mass).
  std::vector<double> gradStudentChunkLp;
};

/// The ALM objective over one alignment's chunk log-probabilities: the mean
/// binarized f-divergence across chunks, optionally outcome-debiased on both
/// sides. Throws if a teacher chunk debiases to -inf (the gamma constraint is
/// the sanctioned way to remove zero-mass chunks).
AlmLossResult alm_loss(std::span<const double> teacherChunkLps,
                       std::span<const double> studentChunkLps, const DivergenceSpec& spec,
                       const DebiasInputs* debias = nullptr);

/// Full categorical f-divergence over an explicit finite outcome set; the
/// independent reference the binarised form is checked against. KL and TVD
/// only.
double categorical_f_bruteforce(std::span<const double> p, std::span<const double> q,
                                DivergenceKind kind);

struct HiddenLossResult {
  double value = 0.0;
  std::vector<double> gradProj;                        // studentDim x teacherDim
  std::vector<std::vector<double>> gradStudentHidden;  // same shape as studentHidden
};

/// Sum over aligned chunk-end pairs (j, l) of ||H_T[j] - proj(H_S[l])||_2,
/// where proj is a learnt studentDim x teacherDim matrix applied as
/// rowvector * proj. Hidden rows are indexed by position (row p = state after
/// p tokens); the alignment must be the unconstrained greedy alignment.
HiddenLossResult hidden_loss(const std::vector<std::vector<double>>& teacherHidden,
                             const std::vector<std::vector<double>>& studentHidden,
                             std::span<const double> proj, std::size_t studentDim,
                             std::size_t teacherDim, const ChunkAlignment& alignment);

struct SftLossResult {
  double value = 0.0;
  std::vector<double> gradSeqLogprobs;
};

/// Next-token prediction baseline: negative mean realized log-probability.
SftLossResult sft_loss(std::span<const double> seqLogprobs);

/// Inverse-norm task weights, normalized to sum to one, so that the
/// post-weighting last-layer gradient norms are equal across tasks.
/// Zero norms are floored at 1e-12 to keep the weights finite.
std::vector<double> gradmag_weights(const std::vector<TaskGradient>& taskGrads);

/// Weighted sum of losses; weights must sum to 1 within 1e-9.
double combine_losses(std::span<const double> losses, std::span<const double> weights);

}  // namespace alm

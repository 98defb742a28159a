#include "alm/objective.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "alm/lm.hpp"
#include "alm/util.hpp"

namespace alm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double checked_logprob(double lp, const char* side) {
  if (std::isnan(lp) || lp == kInf)
    throw std::invalid_argument(std::string("binarized_f: non-finite ") + side +
                                " chunk log-probability");
  // sums of per-position log-probs may carry +eps float noise for prob-1 chunks
  return std::min(lp, 0.0);
}

}  // namespace

std::string to_string(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::KL: return "kl";
    case DivergenceKind::TVD: return "tvd";
    case DivergenceKind::KLInf: return "kl-inf";
    case DivergenceKind::TVDInf: return "tvd-inf";
  }
  return "?";
}

DivergenceKind divergence_kind_from_string(const std::string& s) {
  if (s == "kl") return DivergenceKind::KL;
  if (s == "tvd") return DivergenceKind::TVD;
  if (s == "kl-inf") return DivergenceKind::KLInf;
  if (s == "tvd-inf") return DivergenceKind::TVDInf;
  throw ConfigError("unknown divergence kind: \"" + s + "\"");
}

double binarized_f(double teacherChunkLp, double studentChunkLp, const DivergenceSpec& spec) {
  double lp = checked_logprob(teacherChunkLp, "teacher");
  double lq = checked_logprob(studentChunkLp, "student");
  if (lp == lq) return 0.0;
  if (spec.tau <= 0.0 || !std::isfinite(spec.tau))
    throw std::invalid_argument("binarized_f: tau must be finite and positive");

  switch (spec.kind) {
    case DivergenceKind::KL: {
      double a = lp / spec.tau;
      double b = lq / spec.tau;
      double phat = std::exp(a);
      double term1 = phat * (a - b);
      if (phat >= 1.0) return term1;  // not-chunk mass is zero on both counts
      double term2 = (1.0 - phat) * (log1mexp(a) - log1mexp(b));
      return term1 + term2;
    }
    case DivergenceKind::TVD:
      return std::abs(std::exp(lp / spec.tau) - std::exp(lq / spec.tau));
    case DivergenceKind::KLInf: {
      if (lp == 0.0) return -lq;
      return (lp - lq) + lp * std::log(lq / lp);
    }
    case DivergenceKind::TVDInf:
      return std::abs(lp - lq);
  }
  return 0.0;
}

double binarized_f_dstudent(double teacherChunkLp, double studentChunkLp,
                            const DivergenceSpec& spec) {
  double lp = checked_logprob(teacherChunkLp, "teacher");
  double lq = checked_logprob(studentChunkLp, "student");

  switch (spec.kind) {
    case DivergenceKind::KL: {
      double phat = std::exp(lp / spec.tau);
      double qhat = std::exp(lq / spec.tau);
      if (qhat >= 1.0) return (phat >= 1.0 ? 0.0 : -kInf);
      return (-phat + qhat * (1.0 - phat) / (1.0 - qhat)) / spec.tau;
    }
    case DivergenceKind::TVD: {
      double phat = std::exp(lp / spec.tau);
      double qhat = std::exp(lq / spec.tau);
      if (phat == qhat) return 0.0;
      return (qhat > phat ? 1.0 : -1.0) * qhat / spec.tau;
    }
    case DivergenceKind::KLInf: {
      if (lp == lq) return 0.0;
      return -1.0 + lp / lq;
    }
    case DivergenceKind::TVDInf: {
      if (lp == lq) return 0.0;
      return lq > lp ? 1.0 : -1.0;
    }
  }
  return 0.0;
}

AlmLossResult alm_loss(std::span<const double> teacherChunkLps,
                       std::span<const double> studentChunkLps, const DivergenceSpec& spec,
                       const DebiasInputs* debias) {
  if (teacherChunkLps.size() != studentChunkLps.size())
    throw std::invalid_argument("alm_loss: chunk list length mismatch");
  const std::size_t n = teacherChunkLps.size();
  if (debias &&
      (debias->teacherBoundaryMass.size() != n || debias->studentBoundaryMass.size() != n))
    throw std::invalid_argument("alm_loss: debias mass length mismatch");

  AlmLossResult out;
  out.breakdown.chunkCount = n;
  out.breakdown.perChunk.resize(n);
  out.gradStudentChunkLp.assign(n, 0.0);
  if (n == 0) return out;

  double sum = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double lp = teacherChunkLps[r];
    double lq = studentChunkLps[r];
    if (debias) {
      lp = debiased_chunk_logprob(lp, debias->teacherBoundaryMass[r]);
      lq = debiased_chunk_logprob(lq, debias->studentBoundaryMass[r]);
      if (lp == -kInf)
        throw std::runtime_error(
            "alm_loss: teacher chunk debiased to zero mass; such chunks must be removed by the "
            "gamma constraint before loss computation");
    }
    out.breakdown.perChunk[r] = binarized_f(lp, lq, spec);
    out.gradStudentChunkLp[r] = binarized_f_dstudent(lp, lq, spec) / static_cast<double>(n);
    sum += out.breakdown.perChunk[r];
  }
  out.breakdown.total = sum / static_cast<double>(n);
  return out;
}

double categorical_f_bruteforce(std::span<const double> p, std::span<const double> q,
                                DivergenceKind kind) {
  if (p.size() != q.size())
    throw std::invalid_argument("categorical_f_bruteforce: distribution size mismatch");
  if (kind != DivergenceKind::KL && kind != DivergenceKind::TVD)
    throw std::invalid_argument("categorical_f_bruteforce: only KL and TVD are categorical");
  double sumP = 0.0, sumQ = 0.0;
  for (double x : p) sumP += x;
  for (double x : q) sumQ += x;
  if (std::abs(sumP - 1.0) > 1e-9 || std::abs(sumQ - 1.0) > 1e-9)
    throw std::invalid_argument("categorical_f_bruteforce: distributions must be normalized");

  double out = 0.0;
  for (std::size_t x = 0; x < p.size(); ++x) {
    if (kind == DivergenceKind::KL) {
      if (p[x] > 0.0) out += p[x] * std::log(p[x] / q[x]);
    } else {
      out += std::abs(p[x] - q[x]);
    }
  }
  return out;
}

HiddenLossResult hidden_loss(const std::vector<std::vector<double>>& teacherHidden,
                             const std::vector<std::vector<double>>& studentHidden,
                             std::span<const double> proj, std::size_t studentDim,
                             std::size_t teacherDim, const ChunkAlignment& alignment) {
  if (proj.size() != studentDim * teacherDim)
    throw std::invalid_argument("hidden_loss: projection shape mismatch");
  for (const auto& row : teacherHidden)
    if (row.size() != teacherDim) throw std::invalid_argument("hidden_loss: teacher row dimension");
  for (const auto& row : studentHidden)
    if (row.size() != studentDim) throw std::invalid_argument("hidden_loss: student row dimension");

  HiddenLossResult out;
  out.gradProj.assign(proj.size(), 0.0);
  out.gradStudentHidden.assign(studentHidden.size(), std::vector<double>(studentDim, 0.0));

  for (const ChunkQuadruple& quad : alignment.quads) {
    if (quad.j >= teacherHidden.size() || quad.l >= studentHidden.size())
      throw std::invalid_argument("hidden_loss: alignment exceeds hidden rows");
    const std::vector<double>& ht = teacherHidden[quad.j];
    const std::vector<double>& hs = studentHidden[quad.l];

    // residual r = H_T[j] - hs . proj
    std::vector<double> residual(teacherDim, 0.0);
    for (std::size_t t = 0; t < teacherDim; ++t) {
      double projected = 0.0;
      for (std::size_t s = 0; s < studentDim; ++s) projected += hs[s] * proj[s * teacherDim + t];
      residual[t] = ht[t] - projected;
    }
    double norm = 0.0;
    for (double r : residual) norm += r * r;
    norm = std::sqrt(norm);
    out.value += norm;
    if (norm == 0.0) continue;

    for (std::size_t t = 0; t < teacherDim; ++t) {
      double dr = residual[t] / norm;  // dL/dresidual[t]
      for (std::size_t s = 0; s < studentDim; ++s) {
        out.gradProj[s * teacherDim + t] -= hs[s] * dr;
        out.gradStudentHidden[quad.l][s] -= proj[s * teacherDim + t] * dr;
      }
    }
  }
  return out;
}

SftLossResult sft_loss(std::span<const double> seqLogprobs) {
  if (seqLogprobs.empty()) throw std::invalid_argument("sft_loss: empty sequence");
  SftLossResult out;
  const double n = static_cast<double>(seqLogprobs.size());
  for (double lp : seqLogprobs) out.value -= lp / n;
  out.gradSeqLogprobs.assign(seqLogprobs.size(), -1.0 / n);
  return out;
}

std::vector<double> gradmag_weights(const std::vector<TaskGradient>& taskGrads) {
  if (taskGrads.empty()) throw std::invalid_argument("gradmag_weights: no tasks");
  std::vector<double> inv(taskGrads.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < taskGrads.size(); ++i) {
    double norm = 0.0;
    for (double g : taskGrads[i].lastLayerGrad) {
      if (!std::isfinite(g))
        throw std::invalid_argument("gradmag_weights: non-finite gradient in task " +
                                    taskGrads[i].taskId);
      norm += g * g;
    }
    norm = std::max(std::sqrt(norm), 1e-12);
    inv[i] = 1.0 / norm;
    sum += inv[i];
  }
  for (double& w : inv) w /= sum;
  return inv;
}

double combine_losses(std::span<const double> losses, std::span<const double> weights) {
  if (losses.size() != weights.size())
    throw std::invalid_argument("combine_losses: length mismatch");
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (std::abs(wsum - 1.0) > 1e-9)
    throw std::invalid_argument("combine_losses: weights must sum to 1");
  double out = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) out += weights[i] * losses[i];
  return out;
}

}  // namespace alm

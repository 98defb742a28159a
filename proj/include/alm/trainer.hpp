#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "alm/bias.hpp"
#include "alm/lm.hpp"
#include "alm/objective.hpp"

namespace alm {

enum class TrainMode { Alm, AlmSft, Sft };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
  TrainMode mode = TrainMode::Alm;
  DivergenceSpec divergence;                     // kl, tau 100 by default
  AlignmentConstraint constraint;                // none by default
  bool useDebias = false;
  bool useHiddenLoss = false;
  std::size_t steps = 100;
  std::size_t batchSize = 16;
  double learningRate = 1e-2;
  double adamBeta1 = 0.9;
  double adamBeta2 = 0.999;
  double adamEps = 1e-8;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  const BiasMatrix* biasMatrix = nullptr;        // required for BiasThreshold
};

struct StepRecord {
  std::size_t step = 0;
  std::vector<std::string> taskNames;
  std::vector<double> taskLosses;
  double combined = 0.0;
  std::vector<double> weights;
  std::vector<double> gradNorms;        // designated-block norm per task
  std::vector<double> postWeightNorms;  // weights[i] * gradNorms[i]
};

struct GapMetrics {
  double almLoss = 0.0;            // chunk-weighted mean binarized f-divergence
  double meanAbsGap = 0.0;         // chunk-weighted mean |delta chunk log-prob|
  double survivingFraction = 1.0;  // surviving chunks / aligned chunks
  struct PerDoc {
    std::size_t chunkCount = 0;
    std::size_t surviving = 0;
    double almLoss = 0.0;
    double meanAbsGap = 0.0;
  };
  std::vector<PerDoc> perDoc;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  GapMetrics finalEval;
};

// ---- Adam ----

struct AdamHyper {
  double learningRate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  std::size_t t = 0;
};

/// Standard Adam with bias correction and no weight decay.
void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               const AdamHyper& hyper);

// ---- training / evaluation ----

/// Distillation loop: per step, sample a batch, align under both tokenizers,
/// apply the constraint, compute the active losses and their per-task
/// last-layer gradients, weight them with GradMag and Adam-update the student
/// (and the hidden projection, when active). Deterministic given the seed.
TrainReport distill(const LanguageModel& teacher, TrainableLM& student,
                    const std::vector<std::string>& corpus, const TrainConfig& config,
                    const std::vector<std::string>* evalCorpus = nullptr);

/// Held-out measurement of the chunk-level objective between two models.
GapMetrics evaluate_gap(const LanguageModel& teacher, const LanguageModel& student,
                        const std::vector<std::string>& corpus, const DivergenceSpec& divergence,
                        const AlignmentConstraint& constraint, bool useDebias,
                        const BiasMatrix* biasMatrix = nullptr);

/// Central finite differences on a random parameter subsample against the
/// analytic gradient; returns the max relative error. `loss` evaluates with
/// the current contents of `params`, which are restored after each probe.
double grad_check(const std::function<double()>& loss, std::vector<double>& params,
                  std::span<const double> analyticGrad, double epsilon, std::size_t sampleCount,
                  std::uint64_t seed);

/// Gradient check of one distillation task ("alm", "sft" or "hidden") for a
/// teacher/student pair over a small corpus, covering the student parameters
/// and, for "hidden", the projection parameters as well.
double grad_check_task(const LanguageModel& teacher, TrainableLM& student,
                       const std::vector<std::string>& corpus, const TrainConfig& config,
                       const std::string& task, double epsilon, std::size_t sampleCount,
                       std::uint64_t seed);

}  // namespace alm

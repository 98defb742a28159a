#include "alm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "alm/alignment.hpp"
#include "alm/util.hpp"

namespace alm {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Alm: return "alm";
    case TrainMode::AlmSft: return "alm-sft";
    case TrainMode::Sft: return "sft";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "alm") return TrainMode::Alm;
  if (s == "alm-sft") return TrainMode::AlmSft;
  if (s == "sft") return TrainMode::Sft;
  throw ConfigError("unknown train mode: \"" + s + "\"");
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               const AdamHyper& hyper) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: parameter/gradient shape mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  } else if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state shape mismatch");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grads[i];
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grads[i] * grads[i];
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    params[i] -= hyper.learningRate * mhat / (std::sqrt(vhat) + hyper.eps);
  }
}

namespace {

struct PreparedDoc {
  std::vector<TokenId> teacherIds;
  std::vector<TokenId> studentIds;
  ChunkAlignment aligned;    // unconstrained greedy alignment
  ChunkAlignment surviving;  // after the configured constraint
  std::vector<double> teacherChunkLp;  // per surviving quad
  std::vector<double> teacherMass;     // per surviving quad, only under debias
  std::vector<std::vector<double>> teacherHidden;
};

struct DocEval {
  double almLoss = 0.0;
  double sftLoss = 0.0;
  double hiddenLoss = 0.0;
  std::vector<double> gradAlm, gradSft, gradHidden, gradProj;
};

/// Shared forward/backward machinery between distill() and grad_check_task().
class Engine {
 public:
  Engine(const LanguageModel& teacher, TrainableLM& student, const TrainConfig& config)
      : teacher_(teacher), student_(student), config_(config) {
    almActive_ = config_.mode != TrainMode::Sft;
    sftActive_ = config_.mode != TrainMode::Alm;
    hiddenActive_ = false;
    if (config_.useHiddenLoss) {
      if (!almActive_) {
        std::cerr << "[trainer] hidden loss disabled: mode sft ignores the teacher\n";
      } else if (!teacher_.has_hidden() || !student_.has_hidden()) {
        std::cerr << "[trainer] hidden loss disabled: "
                  << (teacher_.has_hidden() ? "student" : "teacher")
                  << " model has no hidden states\n";
      } else {
        hiddenActive_ = true;
      }
    }
    if (almActive_) {
      boundary_ = boundary_set(teacher_.tokenizer(), student_.tokenizer());
      teacherBoundaryIds_ = boundary_token_ids(teacher_.tokenizer(), boundary_);
      studentBoundaryIds_ = boundary_token_ids(student_.tokenizer(), boundary_);
    }
    if (config_.constraint.kind == ConstraintKind::BiasThreshold && !config_.biasMatrix)
      throw ConfigError("trainer: bias constraint requires a bias matrix");
  }

  void prepare(const std::vector<std::string>& corpus) {
    if (corpus.empty()) throw ConfigError("trainer: empty corpus");
    docs_.resize(corpus.size());
    parallel_for(corpus.size(), config_.threads,
                 [&](std::size_t d) { docs_[d] = prepare_doc(corpus[d]); });
  }

  std::size_t doc_count() const { return docs_.size(); }
  bool alm_active() const { return almActive_; }
  bool sft_active() const { return sftActive_; }
  bool hidden_active() const { return hiddenActive_; }

  std::vector<std::string> task_names() const {
    std::vector<std::string> names;
    if (almActive_) names.push_back("alm");
    if (sftActive_) names.push_back("sft");
    if (hiddenActive_) names.push_back("hidden");
    return names;
  }

  /// Mean per-doc task losses over the batch; gradients are accumulated with
  /// the same 1/batch scaling. Reduction runs in index order regardless of
  /// the thread count.
  std::vector<DocEval> eval_items(std::span<const std::size_t> indices,
                                  const std::vector<double>& proj, bool wantGrads) {
    std::vector<DocEval> items(indices.size());
    const double invBatch = 1.0 / static_cast<double>(indices.size());
    parallel_for(indices.size(), config_.threads, [&](std::size_t b) {
      items[b] = eval_doc(docs_[indices[b]], proj, wantGrads, invBatch);
    });
    return items;
  }

  std::size_t proj_size() const {
    return hiddenActive_ ? student_.hidden_dim() * teacher_.hidden_dim() : 0;
  }

 private:
  PreparedDoc prepare_doc(const std::string& text) const {
    PreparedDoc doc;
    doc.studentIds = student_.tokenizer().tokenize_bytes(text);
    if (!almActive_) return doc;

    doc.teacherIds = teacher_.tokenizer().tokenize_bytes(text);
    doc.aligned = align_greedy(doc.teacherIds, doc.studentIds, teacher_.tokenizer(),
                               student_.tokenizer());

    const bool needMass =
        config_.useDebias || config_.constraint.kind == ConstraintKind::BoundaryMass;
    std::unordered_set<std::size_t> massPositions;
    if (needMass)
      for (const ChunkQuadruple& quad : doc.aligned.quads) massPositions.insert(quad.j);

    const auto& ids = doc.teacherIds;
    std::vector<double> seqLp(ids.size());
    std::unordered_map<std::size_t, double> massAt;
    for (std::size_t t = 0; t <= ids.size(); ++t) {
      bool wantSeq = t < ids.size();
      bool wantMass = massPositions.count(t) > 0;
      if (!wantSeq && !wantMass) continue;
      std::vector<double> lp =
          teacher_.next_logprobs(std::span<const TokenId>(ids).first(t));
      if (wantSeq) seqLp[t] = lp[ids[t]];
      if (wantMass) massAt[t] = boundary_mass_from_logprobs(lp, teacherBoundaryIds_);
    }

    ConstraintContext ctx;
    if (config_.constraint.kind == ConstraintKind::BoundaryMass) {
      ctx.boundaryMass.reserve(doc.aligned.quads.size());
      for (const ChunkQuadruple& quad : doc.aligned.quads)
        ctx.boundaryMass.push_back(massAt.at(quad.j));
    } else if (config_.constraint.kind == ConstraintKind::BiasThreshold) {
      ctx = bias_constraint_context(doc.aligned, doc.teacherIds, doc.studentIds,
                                    *config_.biasMatrix);
    }
    doc.surviving = apply_constraint(doc.aligned, config_.constraint, ctx);

    doc.teacherChunkLp.reserve(doc.surviving.quads.size());
    for (const ChunkQuadruple& quad : doc.surviving.quads)
      doc.teacherChunkLp.push_back(chunk_logprob(seqLp, quad.i, quad.j));
    if (config_.useDebias) {
      doc.teacherMass.reserve(doc.surviving.quads.size());
      for (const ChunkQuadruple& quad : doc.surviving.quads)
        doc.teacherMass.push_back(massAt.at(quad.j));
    }
    if (hiddenActive_) doc.teacherHidden = teacher_.hidden_states(doc.teacherIds);
    return doc;
  }

  DocEval eval_doc(const PreparedDoc& doc, const std::vector<double>& proj, bool wantGrads,
                   double invBatch) const {
    DocEval out;
    const std::size_t paramCount = student_.params().size();
    const auto& ids = doc.studentIds;
    std::span<const TokenId> idSpan(ids);

    // one pass for the realized log-probs and the debias masses
    std::vector<double> seqLp(ids.size());
    std::unordered_map<std::size_t, double> massAt;
    std::unordered_set<std::size_t> massPositions;
    if (almActive_ && config_.useDebias)
      for (const ChunkQuadruple& quad : doc.surviving.quads) massPositions.insert(quad.l);
    for (std::size_t t = 0; t <= ids.size(); ++t) {
      bool wantSeq = t < ids.size();
      bool wantMass = massPositions.count(t) > 0;
      if (!wantSeq && !wantMass) continue;
      std::vector<double> lp = student_.next_logprobs(idSpan.first(t));
      if (wantSeq) seqLp[t] = lp[ids[t]];
      if (wantMass) massAt[t] = boundary_mass_from_logprobs(lp, studentBoundaryIds_);
    }

    if (almActive_) {
      const std::size_t chunkCount = doc.surviving.quads.size();
      std::vector<double> studentChunkLp(chunkCount);
      DebiasInputs debias;
      if (config_.useDebias) {
        debias.teacherBoundaryMass = doc.teacherMass;
        debias.studentBoundaryMass.resize(chunkCount);
      }
      for (std::size_t r = 0; r < chunkCount; ++r) {
        const ChunkQuadruple& quad = doc.surviving.quads[r];
        studentChunkLp[r] = chunk_logprob(seqLp, quad.k, quad.l);
        if (config_.useDebias) debias.studentBoundaryMass[r] = massAt.at(quad.l);
      }
      AlmLossResult alm = alm_loss(doc.teacherChunkLp, studentChunkLp, config_.divergence,
                                   config_.useDebias ? &debias : nullptr);
      out.almLoss = alm.breakdown.total;
      if (wantGrads) {
        out.gradAlm.assign(paramCount, 0.0);
        for (std::size_t r = 0; r < chunkCount; ++r) {
          double w = alm.gradStudentChunkLp[r] * invBatch;
          if (w == 0.0) continue;
          const ChunkQuadruple& quad = doc.surviving.quads[r];
          for (std::size_t t = quad.k; t < quad.l; ++t)
            student_.accum_logprob_grad(idSpan.first(t), ids[t], w, out.gradAlm);
          if (config_.useDebias)
            student_.accum_boundary_grad(idSpan.first(quad.l), studentBoundaryIds_, w,
                                         out.gradAlm);
        }
      }
    }

    if (sftActive_) {
      SftLossResult sft = sft_loss(seqLp);
      out.sftLoss = sft.value;
      if (wantGrads) {
        out.gradSft.assign(paramCount, 0.0);
        for (std::size_t t = 0; t < ids.size(); ++t)
          student_.accum_logprob_grad(idSpan.first(t), ids[t],
                                      sft.gradSeqLogprobs[t] * invBatch, out.gradSft);
      }
    }

    if (hiddenActive_) {
      std::vector<std::vector<double>> studentHidden = student_.hidden_states(ids);
      HiddenLossResult hid =
          hidden_loss(doc.teacherHidden, studentHidden, proj, student_.hidden_dim(),
                      teacher_.hidden_dim(), doc.aligned);
      out.hiddenLoss = hid.value;
      if (wantGrads) {
        out.gradHidden.assign(paramCount, 0.0);
        out.gradProj.assign(proj.size(), 0.0);
        for (std::size_t i = 0; i < proj.size(); ++i) out.gradProj[i] = hid.gradProj[i] * invBatch;
        for (std::size_t p = 0; p < hid.gradStudentHidden.size(); ++p) {
          const std::vector<double>& row = hid.gradStudentHidden[p];
          bool nonzero = std::any_of(row.begin(), row.end(), [](double x) { return x != 0.0; });
          if (nonzero) student_.accum_hidden_grad(idSpan, p, row, invBatch, out.gradHidden);
        }
      }
    }
    return out;
  }

  const LanguageModel& teacher_;
  TrainableLM& student_;
  TrainConfig config_;
  bool almActive_ = false, sftActive_ = false, hiddenActive_ = false;
  PretokenBoundarySet boundary_;
  std::vector<TokenId> teacherBoundaryIds_, studentBoundaryIds_;
  std::vector<PreparedDoc> docs_;
};

double block_norm(const std::vector<double>& grad, std::pair<std::size_t, std::size_t> block) {
  double norm = 0.0;
  for (std::size_t i = block.first; i < block.first + block.second; ++i) norm += grad[i] * grad[i];
  return std::sqrt(norm);
}

void validate_config(const TrainConfig& config) {
  if (config.steps < 1) throw ConfigError("trainer: steps must be >= 1");
  if (config.batchSize < 1) throw ConfigError("trainer: batch size must be >= 1");
  if (config.learningRate <= 0.0) throw ConfigError("trainer: learning rate must be > 0");
  if (!std::isfinite(config.constraint.gamma) || config.constraint.gamma < 0.0)
    throw ConfigError("trainer: gamma must be finite and non-negative");
}

}  // namespace

TrainReport distill(const LanguageModel& teacher, TrainableLM& student,
                    const std::vector<std::string>& corpus, const TrainConfig& config,
                    const std::vector<std::string>* evalCorpus) {
  validate_config(config);
  Engine engine(teacher, student, config);
  engine.prepare(corpus);

  std::vector<double> proj(engine.proj_size(), 0.0);
  AdamHyper hyper{config.learningRate, config.adamBeta1, config.adamBeta2, config.adamEps};
  AdamState studentState, projState;
  std::mt19937_64 rng(config.seed);

  // GradMag balances tasks on the last layer shared by all of them: the
  // output block, or the embedding block when the hidden loss is active
  // (the hidden states never reach the output weights).
  std::pair<std::size_t, std::size_t> block =
      engine.hidden_active() && student.embedding_block().second > 0 ? student.embedding_block()
                                                                     : student.output_block();

  TrainReport report;
  report.steps.reserve(config.steps);
  const std::size_t docCount = engine.doc_count();

  for (std::size_t step = 0; step < config.steps; ++step) {
    std::vector<std::size_t> indices(config.batchSize);
    for (std::size_t& idx : indices)
      idx = std::min(docCount - 1, static_cast<std::size_t>(uniform01(rng) * docCount));

    std::vector<DocEval> items = engine.eval_items(indices, proj, /*wantGrads=*/true);

    StepRecord rec;
    rec.step = step;
    rec.taskNames = engine.task_names();
    std::vector<std::vector<double>> taskGrads;
    std::vector<double> projGrad(proj.size(), 0.0);
    const double invBatch = 1.0 / static_cast<double>(items.size());

    auto reduce_task = [&](auto lossOf, auto gradOf) {
      double loss = 0.0;
      std::vector<double> grad(student.params().size(), 0.0);
      for (const DocEval& item : items) {
        loss += lossOf(item) * invBatch;
        const std::vector<double>& g = gradOf(item);
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
      }
      rec.taskLosses.push_back(loss);
      taskGrads.push_back(std::move(grad));
    };
    if (engine.alm_active())
      reduce_task([](const DocEval& e) { return e.almLoss; },
                  [](const DocEval& e) -> const std::vector<double>& { return e.gradAlm; });
    if (engine.sft_active())
      reduce_task([](const DocEval& e) { return e.sftLoss; },
                  [](const DocEval& e) -> const std::vector<double>& { return e.gradSft; });
    if (engine.hidden_active()) {
      reduce_task([](const DocEval& e) { return e.hiddenLoss; },
                  [](const DocEval& e) -> const std::vector<double>& { return e.gradHidden; });
      for (const DocEval& item : items)
        for (std::size_t i = 0; i < projGrad.size(); ++i) projGrad[i] += item.gradProj[i];
    }

    for (double loss : rec.taskLosses)
      if (!std::isfinite(loss))
        throw std::runtime_error("trainer: non-finite loss at step " + std::to_string(step));

    std::vector<TaskGradient> blockGrads;
    for (std::size_t i = 0; i < taskGrads.size(); ++i) {
      TaskGradient tg;
      tg.taskId = rec.taskNames[i];
      tg.lastLayerGrad.assign(taskGrads[i].begin() + block.first,
                              taskGrads[i].begin() + block.first + block.second);
      blockGrads.push_back(std::move(tg));
    }
    rec.weights = gradmag_weights(blockGrads);
    rec.combined = combine_losses(rec.taskLosses, rec.weights);
    for (std::size_t i = 0; i < taskGrads.size(); ++i) {
      rec.gradNorms.push_back(block_norm(taskGrads[i], block));
      rec.postWeightNorms.push_back(rec.weights[i] * rec.gradNorms.back());
    }

    std::vector<double> combinedGrad(student.params().size(), 0.0);
    for (std::size_t i = 0; i < taskGrads.size(); ++i)
      for (std::size_t p = 0; p < combinedGrad.size(); ++p)
        combinedGrad[p] += rec.weights[i] * taskGrads[i][p];
    adam_step(student.params(), combinedGrad, studentState, hyper);

    if (engine.hidden_active()) {
      std::size_t hiddenIdx = rec.taskNames.size() - 1;  // hidden is listed last
      for (double& g : projGrad) g *= rec.weights[hiddenIdx];
      adam_step(proj, projGrad, projState, hyper);
    }

    report.steps.push_back(std::move(rec));
  }

  report.finalEval = evaluate_gap(teacher, student, evalCorpus ? *evalCorpus : corpus,
                                  config.divergence, config.constraint, config.useDebias,
                                  config.biasMatrix);
  return report;
}

GapMetrics evaluate_gap(const LanguageModel& teacher, const LanguageModel& student,
                        const std::vector<std::string>& corpus, const DivergenceSpec& divergence,
                        const AlignmentConstraint& constraint, bool useDebias,
                        const BiasMatrix* biasMatrix) {
  if (constraint.kind == ConstraintKind::BiasThreshold && !biasMatrix)
    throw ConfigError("evaluate_gap: bias constraint requires a bias matrix");

  PretokenBoundarySet boundary = boundary_set(teacher.tokenizer(), student.tokenizer());
  std::vector<TokenId> teacherBoundaryIds = boundary_token_ids(teacher.tokenizer(), boundary);
  std::vector<TokenId> studentBoundaryIds = boundary_token_ids(student.tokenizer(), boundary);

  GapMetrics out;
  double lossSum = 0.0, gapSum = 0.0;
  std::size_t totalChunks = 0, totalSurviving = 0;

  for (const std::string& text : corpus) {
    std::vector<TokenId> teacherIds = teacher.tokenizer().tokenize_bytes(text);
    std::vector<TokenId> studentIds = student.tokenizer().tokenize_bytes(text);
    ChunkAlignment aligned =
        align_greedy(teacherIds, studentIds, teacher.tokenizer(), student.tokenizer());

    const bool needMass = useDebias || constraint.kind == ConstraintKind::BoundaryMass;
    auto side_pass = [&](const LanguageModel& lm, const std::vector<TokenId>& ids,
                         const std::vector<TokenId>& boundaryIds, auto needMassAt) {
      std::vector<double> seqLp(ids.size());
      std::unordered_map<std::size_t, double> massAt;
      for (std::size_t t = 0; t <= ids.size(); ++t) {
        bool wantSeq = t < ids.size();
        bool wantMass = needMassAt(t);
        if (!wantSeq && !wantMass) continue;
        std::vector<double> lp = lm.next_logprobs(std::span<const TokenId>(ids).first(t));
        if (wantSeq) seqLp[t] = lp[ids[t]];
        if (wantMass) massAt[t] = boundary_mass_from_logprobs(lp, boundaryIds);
      }
      return std::make_pair(std::move(seqLp), std::move(massAt));
    };

    std::unordered_set<std::size_t> teacherEnds;
    if (needMass)
      for (const ChunkQuadruple& quad : aligned.quads) teacherEnds.insert(quad.j);
    auto [teacherSeqLp, teacherMassAt] =
        side_pass(teacher, teacherIds, teacherBoundaryIds,
                  [&](std::size_t t) { return teacherEnds.count(t) > 0; });

    ConstraintContext ctx;
    if (constraint.kind == ConstraintKind::BoundaryMass) {
      for (const ChunkQuadruple& quad : aligned.quads)
        ctx.boundaryMass.push_back(teacherMassAt.at(quad.j));
    } else if (constraint.kind == ConstraintKind::BiasThreshold) {
      ctx = bias_constraint_context(aligned, teacherIds, studentIds, *biasMatrix);
    }
    ChunkAlignment surviving = apply_constraint(aligned, constraint, ctx);

    std::unordered_set<std::size_t> studentEnds;
    if (useDebias)
      for (const ChunkQuadruple& quad : surviving.quads) studentEnds.insert(quad.l);
    auto [studentSeqLp, studentMassAt] =
        side_pass(student, studentIds, studentBoundaryIds,
                  [&](std::size_t t) { return studentEnds.count(t) > 0; });

    GapMetrics::PerDoc doc;
    doc.chunkCount = aligned.quads.size();
    doc.surviving = surviving.quads.size();
    double docLoss = 0.0, docGap = 0.0;
    for (const ChunkQuadruple& quad : surviving.quads) {
      double lpT = chunk_logprob(teacherSeqLp, quad.i, quad.j);
      double lpS = chunk_logprob(studentSeqLp, quad.k, quad.l);
      if (useDebias) {
        lpT = debiased_chunk_logprob(lpT, teacherMassAt.at(quad.j));
        lpS = debiased_chunk_logprob(lpS, studentMassAt.at(quad.l));
      }
      docLoss += binarized_f(lpT, lpS, divergence);
      docGap += std::abs(lpT - lpS);
    }
    if (doc.surviving > 0) {
      doc.almLoss = docLoss / static_cast<double>(doc.surviving);
      doc.meanAbsGap = docGap / static_cast<double>(doc.surviving);
    }
    lossSum += docLoss;
    gapSum += docGap;
    totalChunks += doc.chunkCount;
    totalSurviving += doc.surviving;
    out.perDoc.push_back(doc);
  }

  if (totalSurviving > 0) {
    out.almLoss = lossSum / static_cast<double>(totalSurviving);
    out.meanAbsGap = gapSum / static_cast<double>(totalSurviving);
  }
  out.survivingFraction =
      totalChunks > 0 ? static_cast<double>(totalSurviving) / static_cast<double>(totalChunks) : 1.0;
  return out;
}

double grad_check(const std::function<double()>& loss, std::vector<double>& params,
                  std::span<const double> analyticGrad, double epsilon, std::size_t sampleCount,
                  std::uint64_t seed) {
  if (params.size() != analyticGrad.size())
    throw std::invalid_argument("grad_check: gradient size mismatch");
  if (epsilon <= 0.0) throw std::invalid_argument("grad_check: epsilon must be > 0");

  std::vector<std::size_t> indices;
  if (sampleCount >= params.size()) {
    indices.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) indices[i] = i;
  } else {
    std::mt19937_64 rng(seed);
    std::unordered_set<std::size_t> picked;
    while (picked.size() < sampleCount)
      picked.insert(std::min(params.size() - 1,
                             static_cast<std::size_t>(uniform01(rng) * params.size())));
    indices.assign(picked.begin(), picked.end());
    std::sort(indices.begin(), indices.end());
  }

  double maxRel = 0.0;
  for (std::size_t i : indices) {
    double saved = params[i];
    params[i] = saved + epsilon;
    double up = loss();
    params[i] = saved - epsilon;
    double down = loss();
    params[i] = saved;
    double fd = (up - down) / (2.0 * epsilon);
    double rel = std::abs(fd - analyticGrad[i]) /
                 std::max({std::abs(fd), std::abs(analyticGrad[i]), 1e-4});
    maxRel = std::max(maxRel, rel);
  }
  return maxRel;
}

double grad_check_task(const LanguageModel& teacher, TrainableLM& student,
                       const std::vector<std::string>& corpus, const TrainConfig& config,
                       const std::string& task, double epsilon, std::size_t sampleCount,
                       std::uint64_t seed) {
  TrainConfig cfg = config;
  if (task == "alm") {
    cfg.mode = TrainMode::Alm;
    cfg.useHiddenLoss = false;
  } else if (task == "sft") {
    cfg.mode = TrainMode::Sft;
    cfg.useHiddenLoss = false;
  } else if (task == "hidden") {
    cfg.mode = TrainMode::Alm;
    cfg.useHiddenLoss = true;
  } else {
    throw ConfigError("grad_check_task: unknown task \"" + task + "\"");
  }

  Engine engine(teacher, student, cfg);
  engine.prepare(corpus);
  std::vector<std::size_t> indices(engine.doc_count());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;

  std::vector<double> proj(engine.proj_size(), 0.0);
  if (!proj.empty()) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    for (double& x : proj) x = uniform01(rng) - 0.5;
  }

  auto batch_task = [&](bool wantGrads) {
    std::vector<DocEval> items = engine.eval_items(indices, proj, wantGrads);
    double loss = 0.0;
    std::vector<double> grad, projGrad;
    if (wantGrads) {
      grad.assign(student.params().size(), 0.0);
      projGrad.assign(proj.size(), 0.0);
    }
    const double invBatch = 1.0 / static_cast<double>(items.size());
    for (const DocEval& item : items) {
      double value = task == "alm" ? item.almLoss : task == "sft" ? item.sftLoss : item.hiddenLoss;
      loss += value * invBatch;
      if (!wantGrads) continue;
      const std::vector<double>& g =
          task == "alm" ? item.gradAlm : task == "sft" ? item.gradSft : item.gradHidden;
      for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
      for (std::size_t i = 0; i < item.gradProj.size(); ++i) projGrad[i] += item.gradProj[i];
    }
    return std::make_tuple(loss, std::move(grad), std::move(projGrad));
  };

  auto [lossValue, analytic, analyticProj] = batch_task(true);
  (void)lossValue;
  auto lossOnly = [&]() { return std::get<0>(batch_task(false)); };

  double maxRel = grad_check(lossOnly, student.params(), analytic, epsilon, sampleCount, seed);
  if (task == "hidden" && !proj.empty()) {
    double projRel = grad_check(lossOnly, proj, analyticProj, epsilon,
                                std::min(sampleCount, proj.size()), seed + 1);
    maxRel = std::max(maxRel, projRel);
  }
  return maxRel;
}

}  // namespace alm

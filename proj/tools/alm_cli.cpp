// Command-line surface for the cross-tokenizer distillation library:
// tokenize, align, loss reports, bias matrices, teacher fitting, distillation,
// evaluation and corpus synthesis. Records go to stdout (or --output),
// diagnostics to stderr. Exit codes: 0 success, 1 runtime failure,
// 2 usage/config error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "alm/alignment.hpp"
#include "alm/bias.hpp"
#include "alm/lm.hpp"
#include "alm/objective.hpp"
#include "alm/tokenizer.hpp"
#include "alm/trainer.hpp"
#include "alm/util.hpp"

namespace {

using nlohmann::json;

std::string dump(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

struct OutputStream {
  explicit OutputStream(const std::string& path) {
    if (!path.empty() && path != "-") {
      file.open(path);
      if (!file) throw alm::ConfigError("cannot write output file: " + path);
    }
  }
  std::ostream& get() { return file.is_open() ? file : std::cout; }
  std::ofstream file;
};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw alm::ConfigError("cannot open input file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

json token_strings_json(const alm::Tokenizer& tok, const std::vector<alm::TokenId>& ids) {
  json tokens = json::array();
  for (alm::TokenId id : ids) tokens.push_back(tok.token(id));
  return tokens;
}

json quads_json(const alm::ChunkAlignment& alignment) {
  json out = json::array();
  for (const alm::ChunkQuadruple& q : alignment.quads) out.push_back({q.i, q.j, q.k, q.l});
  return out;
}

// flags shared by every command that computes the chunk objective
struct ObjectiveFlags {
  std::string f = "kl";
  double tau = 100.0;
  std::string constraint = "none";
  double gamma = 0.1;
  bool debias = false;
  std::string biasMatrixPath;

  void attach(CLI::App* cmd, bool withDebias = true) {
    cmd->add_option("--f", f, "divergence: kl | tvd | kl-inf | tvd-inf")
        ->check(CLI::IsMember({"kl", "tvd", "kl-inf", "tvd-inf"}));
    cmd->add_option("--tau", tau, "temperature (ignored by *-inf kinds)");
    cmd->add_option("--constraint", constraint, "alignment constraint: none | boundary | bias")
        ->check(CLI::IsMember({"none", "boundary", "bias"}));
    cmd->add_option("--gamma", gamma, "constraint threshold");
    if (withDebias) cmd->add_flag("--debias", debias, "outcome-debias chunk probabilities");
    cmd->add_option("--bias-matrix", biasMatrixPath, "bias matrix file (bias constraint)");
  }

  alm::DivergenceSpec divergence() const {
    return {alm::divergence_kind_from_string(f), tau};
  }
  alm::AlignmentConstraint constraint_spec() const {
    alm::AlignmentConstraint c;
    if (constraint == "boundary") c.kind = alm::ConstraintKind::BoundaryMass;
    if (constraint == "bias") c.kind = alm::ConstraintKind::BiasThreshold;
    c.gamma = gamma;
    return c;
  }
  std::optional<alm::BiasMatrix> load_matrix() const {
    if (constraint != "bias") return std::nullopt;
    if (biasMatrixPath.empty())
      throw alm::ConfigError("--constraint bias requires --bias-matrix");
    return alm::load_bias_matrix(biasMatrixPath);
  }
  json echo() const {
    return {{"f", f},        {"tau", tau},       {"constraint", constraint},
            {"gamma", gamma}, {"debias", debias}, {"bias_matrix", biasMatrixPath}};
  }
};

// ---- tokenize ----

int cmd_tokenize(const std::string& tokPath, const std::string& inputPath,
                 const std::string& outputPath) {
  alm::Tokenizer tok = alm::load_tokenizer(tokPath);
  OutputStream out(outputPath);
  for (const std::string& line : read_lines(inputPath)) {
    std::vector<alm::TokenId> ids = tok.tokenize_bytes(line);
    json rec{{"text", line}, {"ids", ids}, {"tokens", token_strings_json(tok, ids)}};
    out.get() << dump(rec) << '\n';
  }
  return 0;
}

// ---- align ----

int cmd_align(const std::string& teacherTokPath, const std::string& studentTokPath,
              const std::string& inputPath, const std::string& outputPath,
              const ObjectiveFlags& flags, const std::string& teacherLmPath) {
  auto teacherTok = std::make_shared<const alm::Tokenizer>(alm::load_tokenizer(teacherTokPath));
  auto studentTok = std::make_shared<const alm::Tokenizer>(alm::load_tokenizer(studentTokPath));
  alm::AlignmentConstraint constraint = flags.constraint_spec();
  std::optional<alm::BiasMatrix> matrix = flags.load_matrix();

  std::unique_ptr<alm::LanguageModel> teacherLm;
  alm::PretokenBoundarySet boundary;
  std::vector<alm::TokenId> teacherBoundaryIds;
  if (constraint.kind == alm::ConstraintKind::BoundaryMass) {
    if (teacherLmPath.empty())
      throw alm::ConfigError("--constraint boundary requires --teacher-lm");
    teacherLm = alm::load_model(teacherLmPath, teacherTok);
    boundary = alm::boundary_set(*teacherTok, *studentTok);
    teacherBoundaryIds = alm::boundary_token_ids(*teacherTok, boundary);
  }

  OutputStream out(outputPath);
  for (const std::string& line : read_lines(inputPath)) {
    std::vector<alm::TokenId> teacherIds = teacherTok->tokenize_bytes(line);
    std::vector<alm::TokenId> studentIds = studentTok->tokenize_bytes(line);
    alm::ChunkAlignment aligned =
        alm::align_greedy(teacherIds, studentIds, *teacherTok, *studentTok);

    alm::ConstraintContext ctx;
    if (constraint.kind == alm::ConstraintKind::BoundaryMass) {
      for (const alm::ChunkQuadruple& quad : aligned.quads)
        ctx.boundaryMass.push_back(alm::boundary_mass(
            *teacherLm, std::span<const alm::TokenId>(teacherIds).first(quad.j), boundary));
    } else if (constraint.kind == alm::ConstraintKind::BiasThreshold) {
      ctx = alm::bias_constraint_context(aligned, teacherIds, studentIds, *matrix);
    }
    alm::ChunkAlignment filtered = alm::apply_constraint(aligned, constraint, ctx);

    json rec{{"text", line},
             {"teacher_ids", teacherIds},
             {"student_ids", studentIds},
             {"quads", quads_json(aligned)},
             {"filtered_quads", quads_json(filtered)}};
    out.get() << dump(rec) << '\n';
  }
  return 0;
}

// ---- loss ----

int cmd_loss(const std::string& teacherTokPath, const std::string& studentTokPath,
             const std::string& teacherLmPath, const std::string& studentLmPath,
             const std::string& inputPath, const std::string& outputPath,
             const ObjectiveFlags& flags) {
  auto teacherTok = std::make_shared<const alm::Tokenizer>(alm::load_tokenizer(teacherTokPath));
  auto studentTok = std::make_shared<const alm::Tokenizer>(alm::load_tokenizer(studentTokPath));
  std::unique_ptr<alm::LanguageModel> teacher = alm::load_model(teacherLmPath, teacherTok);
  std::unique_ptr<alm::LanguageModel> student = alm::load_model(studentLmPath, studentTok);
  alm::DivergenceSpec divergence = flags.divergence();
  alm::AlignmentConstraint constraint = flags.constraint_spec();
  std::optional<alm::BiasMatrix> matrix = flags.load_matrix();

  alm::PretokenBoundarySet boundary = alm::boundary_set(*teacherTok, *studentTok);
  std::vector<alm::TokenId> teacherBoundaryIds = alm::boundary_token_ids(*teacherTok, boundary);
  std::vector<alm::TokenId> studentBoundaryIds = alm::boundary_token_ids(*studentTok, boundary);

  json docs = json::array();
  double lossSum = 0.0, gapSum = 0.0;
  std::size_t totalChunks = 0, totalSurviving = 0;

  for (const std::string& line : read_lines(inputPath)) {
    if (line.empty()) continue;
    std::vector<alm::TokenId> teacherIds = teacherTok->tokenize_bytes(line);
    std::vector<alm::TokenId> studentIds = studentTok->tokenize_bytes(line);
    alm::ChunkAlignment aligned =
        alm::align_greedy(teacherIds, studentIds, *teacherTok, *studentTok);

    std::vector<double> teacherSeqLp = alm::sequence_logprobs(*teacher, teacherIds);
    std::vector<double> studentSeqLp = alm::sequence_logprobs(*student, studentIds);

    alm::ConstraintContext ctx;
    if (constraint.kind == alm::ConstraintKind::BoundaryMass) {
      for (const alm::ChunkQuadruple& quad : aligned.quads)
        ctx.boundaryMass.push_back(alm::boundary_mass(
            *teacher, std::span<const alm::TokenId>(teacherIds).first(quad.j), boundary));
    } else if (constraint.kind == alm::ConstraintKind::BiasThreshold) {
      ctx = alm::bias_constraint_context(aligned, teacherIds, studentIds, *matrix);
    }
    alm::ChunkAlignment surviving = alm::apply_constraint(aligned, constraint, ctx);

    json chunks = json::array();
    double docLoss = 0.0;
    for (const alm::ChunkQuadruple& quad : surviving.quads) {
      double lpT = alm::chunk_logprob(teacherSeqLp, quad.i, quad.j);
      double lpS = alm::chunk_logprob(studentSeqLp, quad.k, quad.l);
      if (flags.debias) {
        lpT = alm::debiased_chunk_logprob(
            lpT, alm::boundary_mass(*teacher,
                                    std::span<const alm::TokenId>(teacherIds).first(quad.j),
                                    boundary));
        lpS = alm::debiased_chunk_logprob(
            lpS, alm::boundary_mass(*student,
                                    std::span<const alm::TokenId>(studentIds).first(quad.l),
                                    boundary));
      }
      double value = alm::binarized_f(lpT, lpS, divergence);
      docLoss += value;
      gapSum += std::abs(lpT - lpS);
      chunks.push_back({{"quad", {quad.i, quad.j, quad.k, quad.l}},
                        {"teacher_lp", lpT},
                        {"student_lp", lpS},
                        {"value", value}});
    }
    std::size_t surv = surviving.quads.size();
    docs.push_back({{"text", line},
                    {"chunk_count", aligned.quads.size()},
                    {"surviving", surv},
                    {"per_chunk", std::move(chunks)},
                    {"total", surv ? docLoss / static_cast<double>(surv) : 0.0}});
    lossSum += docLoss;
    totalChunks += aligned.quads.size();
    totalSurviving += surv;
  }

  json report{
      {"config", flags.echo()},
      {"docs", std::move(docs)},
      {"aggregate",
       {{"total", totalSurviving ? lossSum / static_cast<double>(totalSurviving) : 0.0},
        {"chunk_count", totalChunks},
        {"surviving_chunks", totalSurviving},
        {"surviving_fraction",
         totalChunks ? static_cast<double>(totalSurviving) / static_cast<double>(totalChunks)
                     : 1.0},
        {"mean_abs_gap", totalSurviving ? gapSum / static_cast<double>(totalSurviving) : 0.0}}}};
  OutputStream out(outputPath);
  out.get() << dump(report) << '\n';
  return 0;
}

// ---- fit-teacher ----

int cmd_fit_teacher(const std::string& tokPath, const std::string& corpusPath, std::size_t order,
                    double addK, const std::string& outPath) {
  auto tok = std::make_shared<const alm::Tokenizer>(alm::load_tokenizer(tokPath));
  std::vector<std::string> corpus = alm::load_corpus(corpusPath);
  std::vector<std::vector<alm::TokenId>> corpusIds;
  corpusIds.reserve(corpus.size());
  for (const std::string& doc : corpus) corpusIds.push_back(tok->tokenize_bytes(doc));
  alm::TableLM lm = alm::fit_table_lm(tok, corpusIds, order, addK);
  alm::save_model(lm, outPath);
  std::cout << dump(json{{"fitted", outPath},
                         {"order", order},
                         {"add_k", addK},
                         {"docs", corpus.size()},
                         {"rows", lm.rows()}})
            << '\n';
  return 0;
}

// ---- bias-matrix ----

int cmd_bias_matrix(const std::string& studentTokPath, const std::string& teacherTokPath,
                    const std::string& corpusPath, const std::string& outPath, unsigned threads) {
  alm::Tokenizer studentTok = alm::load_tokenizer(studentTokPath);
  alm::Tokenizer teacherTok = alm::load_tokenizer(teacherTokPath);
  std::vector<std::string> corpus = alm::load_corpus(corpusPath);
  alm::UnigramTable studentUnigram = alm::unigram_from_corpus(studentTok, corpus);
  alm::UnigramTable teacherUnigram = alm::unigram_from_corpus(teacherTok, corpus);
  alm::BiasMatrix matrix =
      alm::build_bias_matrix(studentTok, teacherTok, studentUnigram, teacherUnigram, threads);
  alm::save_bias_matrix(matrix, outPath);
  std::cout << dump(json{{"bias_matrix", outPath},
                         {"entries", matrix.entries.size()},
                         {"unigram_corpus", corpusPath},
                         {"unigram_docs", corpus.size()}})
            << '\n';
  return 0;
}

// ---- distill ----

struct DistillFlags {
  std::string teacherTok, studentTok, teacherLm, corpus, evalCorpus, outStudent, reportPath;
  std::string studentKind = "table";
  std::size_t studentOrder = 1;
  std::size_t embedDim = 8;
  std::size_t window = 4;
  std::string mode = "alm";
  bool hiddenLoss = false;
  std::size_t steps = 100;
  std::size_t batchSize = 16;
  double learningRate = 1e-2;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

json step_record_json(const alm::StepRecord& rec) {
  json tasks = json::object();
  json weights = json::object();
  json norms = json::object();
  json postNorms = json::object();
  for (std::size_t i = 0; i < rec.taskNames.size(); ++i) {
    tasks[rec.taskNames[i]] = rec.taskLosses[i];
    weights[rec.taskNames[i]] = rec.weights[i];
    norms[rec.taskNames[i]] = rec.gradNorms[i];
    postNorms[rec.taskNames[i]] = rec.postWeightNorms[i];
  }
  return {{"step", rec.step},       {"losses", tasks},       {"combined", rec.combined},
          {"weights", weights},     {"grad_norms", norms},   {"post_weight_norms", postNorms}};
}

json gap_json(const alm::GapMetrics& gap) {
  return {{"alm_loss", gap.almLoss},
          {"mean_abs_gap", gap.meanAbsGap},
          {"surviving_fraction", gap.survivingFraction},
          {"docs", gap.perDoc.size()}};
}

int cmd_distill(const DistillFlags& fl, const ObjectiveFlags& obj) {
  auto teacherTok = std::make_shared<const alm::Tokenizer>(alm::load_tokenizer(fl.teacherTok));
  auto studentTok = std::make_shared<const alm::Tokenizer>(alm::load_tokenizer(fl.studentTok));
  std::unique_ptr<alm::LanguageModel> teacher = alm::load_model(fl.teacherLm, teacherTok);
  std::vector<std::string> corpus = alm::load_corpus(fl.corpus);
  std::vector<std::string> evalCorpus;
  if (!fl.evalCorpus.empty()) evalCorpus = alm::load_corpus(fl.evalCorpus);

  std::unique_ptr<alm::TrainableLM> student;
  if (fl.studentKind == "table") {
    student = std::make_unique<alm::TableLM>(studentTok, fl.studentOrder);
  } else if (fl.studentKind == "linear") {
    student = std::make_unique<alm::LinearLM>(studentTok, fl.embedDim, fl.window, fl.seed);
  } else {
    throw alm::ConfigError("unknown student kind: \"" + fl.studentKind + "\"");
  }

  std::optional<alm::BiasMatrix> matrix = obj.load_matrix();
  alm::TrainConfig config;
  config.mode = alm::train_mode_from_string(fl.mode);
  config.divergence = obj.divergence();
  config.constraint = obj.constraint_spec();
  config.useDebias = obj.debias;
  config.useHiddenLoss = fl.hiddenLoss;
  config.steps = fl.steps;
  config.batchSize = fl.batchSize;
  config.learningRate = fl.learningRate;
  config.seed = fl.seed;
  config.threads = fl.threads;
  config.biasMatrix = matrix ? &*matrix : nullptr;

  alm::TrainReport report =
      alm::distill(*teacher, *student, corpus, config, evalCorpus.empty() ? nullptr : &evalCorpus);

  if (!fl.outStudent.empty()) alm::save_model(*student, fl.outStudent);
  if (!fl.reportPath.empty()) {
    std::ofstream rep(fl.reportPath);
    if (!rep) throw alm::ConfigError("cannot write report: " + fl.reportPath);
    for (const alm::StepRecord& rec : report.steps) rep << dump(step_record_json(rec)) << '\n';
  }
  json summary{{"steps", report.steps.size()},
               {"final_eval", gap_json(report.finalEval)},
               {"student", fl.outStudent},
               {"mode", fl.mode},
               {"config", obj.echo()}};
  if (!report.steps.empty()) summary["last_step"] = step_record_json(report.steps.back());
  std::cout << dump(summary) << '\n';
  return 0;
}

// ---- eval ----

int cmd_eval(const std::string& teacherTokPath, const std::string& studentTokPath,
             const std::string& teacherLmPath, const std::string& studentLmPath,
             const std::string& corpusPath, const std::string& outputPath,
             const ObjectiveFlags& flags) {
  auto teacherTok = std::make_shared<const alm::Tokenizer>(alm::load_tokenizer(teacherTokPath));
  auto studentTok = std::make_shared<const alm::Tokenizer>(alm::load_tokenizer(studentTokPath));
  std::unique_ptr<alm::LanguageModel> teacher = alm::load_model(teacherLmPath, teacherTok);
  std::unique_ptr<alm::LanguageModel> student = alm::load_model(studentLmPath, studentTok);
  std::vector<std::string> corpus = alm::load_corpus(corpusPath);
  std::optional<alm::BiasMatrix> matrix = flags.load_matrix();

  alm::GapMetrics gap =
      alm::evaluate_gap(*teacher, *student, corpus, flags.divergence(), flags.constraint_spec(),
                        flags.debias, matrix ? &*matrix : nullptr);
  json perDoc = json::array();
  for (const auto& doc : gap.perDoc)
    perDoc.push_back({{"chunk_count", doc.chunkCount},
                      {"surviving", doc.surviving},
                      {"alm_loss", doc.almLoss},
                      {"mean_abs_gap", doc.meanAbsGap}});
  json out = gap_json(gap);
  out["per_doc"] = std::move(perDoc);
  out["config"] = flags.echo();
  OutputStream os(outputPath);
  os.get() << dump(out) << '\n';
  return 0;
}

// ---- gen-corpus ----

int cmd_gen_corpus(std::uint64_t seed, std::size_t docCount, std::size_t minLen, std::size_t maxLen,
                   const std::string& lexicon, const std::string& alphabet,
                   const std::string& outPath) {
  if (maxLen < minLen) throw alm::ConfigError("gen-corpus: --max-len must be >= --min-len");
  std::vector<std::string> words;
  if (!lexicon.empty()) {
    std::string word;
    for (char c : lexicon) {
      if (c == ',') {
        if (!word.empty()) words.push_back(word);
        word.clear();
      } else {
        word.push_back(c);
      }
    }
    if (!word.empty()) words.push_back(word);
    if (words.empty()) throw alm::ConfigError("gen-corpus: empty lexicon");
  } else if (alphabet.empty()) {
    throw alm::ConfigError("gen-corpus: need --lexicon or --alphabet");
  }

  std::mt19937_64 rng(seed);
  auto pick = [&rng](std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(alm::uniform01(rng) * n));
  };

  OutputStream out(outPath);
  for (std::size_t d = 0; d < docCount; ++d) {
    std::size_t len = minLen + pick(maxLen - minLen + 1);
    std::string doc;
    for (std::size_t u = 0; u < len; ++u) {
      if (!words.empty())
        doc += words[pick(words.size())];
      else
        doc.push_back(alphabet[pick(alphabet.size())]);
    }
    if (doc.empty()) continue;
    out.get() << doc << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-tokenizer distillation toolkit"};
  app.require_subcommand(1);

  // tokenize
  auto* tokenize = app.add_subcommand("tokenize", "tokenize input lines");
  std::string tkTok, tkInput, tkOutput;
  tokenize->add_option("--tokenizer", tkTok, "tokenizer spec file")->required();
  tokenize->add_option("--input", tkInput, "input text file, one text per line")->required();
  tokenize->add_option("--output", tkOutput, "output file (default stdout)");

  // align
  auto* align = app.add_subcommand("align", "align teacher/student tokenizations");
  std::string alTeacherTok, alStudentTok, alInput, alOutput, alTeacherLm;
  ObjectiveFlags alFlags;
  align->add_option("--teacher-tok", alTeacherTok, "teacher tokenizer spec")->required();
  align->add_option("--student-tok", alStudentTok, "student tokenizer spec")->required();
  align->add_option("--input", alInput, "input text file")->required();
  align->add_option("--output", alOutput, "output file (default stdout)");
  align->add_option("--teacher-lm", alTeacherLm, "teacher checkpoint (boundary constraint)");
  alFlags.attach(align, /*withDebias=*/false);

  // loss
  auto* loss = app.add_subcommand("loss", "per-chunk loss report");
  std::string loTeacherTok, loStudentTok, loTeacherLm, loStudentLm, loInput, loOutput;
  ObjectiveFlags loFlags;
  loss->add_option("--teacher-tok", loTeacherTok, "teacher tokenizer spec")->required();
  loss->add_option("--student-tok", loStudentTok, "student tokenizer spec")->required();
  loss->add_option("--teacher-lm", loTeacherLm, "teacher checkpoint")->required();
  loss->add_option("--student-lm", loStudentLm, "student checkpoint")->required();
  loss->add_option("--input", loInput, "input text file")->required();
  loss->add_option("--output", loOutput, "output file (default stdout)");
  loFlags.attach(loss);

  // fit-teacher
  auto* fit = app.add_subcommand("fit-teacher", "fit an n-gram table model");
  std::string ftTok, ftCorpus, ftOut;
  std::size_t ftOrder = 1;
  double ftAddK = 0.1;
  fit->add_option("--tokenizer", ftTok, "tokenizer spec")->required();
  fit->add_option("--input", ftCorpus, "training corpus")->required();
  fit->add_option("--order", ftOrder, "context length");
  fit->add_option("--add-k", ftAddK, "smoothing constant")->check(CLI::PositiveNumber);
  fit->add_option("--output", ftOut, "checkpoint path")->required();

  // bias-matrix
  auto* bias = app.add_subcommand("bias-matrix", "precompute the sparse bias matrix");
  std::string bmStudentTok, bmTeacherTok, bmCorpus, bmOut;
  unsigned bmThreads = 1;
  bias->add_option("--student-tok", bmStudentTok, "student tokenizer spec")->required();
  bias->add_option("--teacher-tok", bmTeacherTok, "teacher tokenizer spec")->required();
  bias->add_option("--corpus", bmCorpus, "corpus for the unigram tables")->required();
  bias->add_option("--output", bmOut, "bias matrix path")->required();
  bias->add_option("--threads", bmThreads, "worker threads");

  // distill
  auto* distill = app.add_subcommand("distill", "run the distillation loop");
  DistillFlags dfl;
  ObjectiveFlags dObj;
  distill->add_option("--teacher-tok", dfl.teacherTok, "teacher tokenizer spec")->required();
  distill->add_option("--student-tok", dfl.studentTok, "student tokenizer spec")->required();
  distill->add_option("--teacher-lm", dfl.teacherLm, "teacher checkpoint")->required();
  distill->add_option("--corpus", dfl.corpus, "training corpus")->required();
  distill->add_option("--eval-corpus", dfl.evalCorpus, "held-out corpus for the final eval");
  distill->add_option("--student-kind", dfl.studentKind, "table | linear")
      ->check(CLI::IsMember({"table", "linear"}));
  distill->add_option("--student-order", dfl.studentOrder, "table student context length");
  distill->add_option("--embed-dim", dfl.embedDim, "linear student embedding dim");
  distill->add_option("--window", dfl.window, "linear student context window");
  distill->add_option("--mode", dfl.mode, "alm | alm-sft | sft")
      ->check(CLI::IsMember({"alm", "alm-sft", "sft"}));
  distill->add_flag("--hidden-loss", dfl.hiddenLoss, "add the hidden-state alignment loss");
  distill->add_option("--steps", dfl.steps, "training steps");
  distill->add_option("--batch-size", dfl.batchSize, "batch size");
  distill->add_option("--lr", dfl.learningRate, "Adam learning rate");
  distill->add_option("--seed", dfl.seed, "rng seed")->required();
  distill->add_option("--threads", dfl.threads, "worker threads");
  distill->add_option("--out-student", dfl.outStudent, "path for the trained student checkpoint");
  distill->add_option("--report", dfl.reportPath, "per-step training log (jsonl)");
  dObj.attach(distill);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate the chunk-level gap");
  std::string evTeacherTok, evStudentTok, evTeacherLm, evStudentLm, evCorpus, evOutput;
  ObjectiveFlags evFlags;
  eval->add_option("--teacher-tok", evTeacherTok, "teacher tokenizer spec")->required();
  eval->add_option("--student-tok", evStudentTok, "student tokenizer spec")->required();
  eval->add_option("--teacher-lm", evTeacherLm, "teacher checkpoint")->required();
  eval->add_option("--student-lm", evStudentLm, "student checkpoint")->required();
  eval->add_option("--corpus", evCorpus, "evaluation corpus")->required();
  eval->add_option("--output", evOutput, "output file (default stdout)");
  evFlags.attach(eval);

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "synthesize a corpus");
  std::uint64_t gcSeed = 0;
  std::size_t gcDocs = 100, gcMin = 4, gcMax = 16;
  std::string gcLexicon, gcAlphabet, gcOut;
  gen->add_option("--seed", gcSeed, "rng seed")->required();
  gen->add_option("--docs", gcDocs, "number of documents");
  gen->add_option("--min-len", gcMin, "min units per document");
  gen->add_option("--max-len", gcMax, "max units per document");
  gen->add_option("--lexicon", gcLexicon, "comma-separated words (sampled as units)");
  gen->add_option("--alphabet", gcAlphabet, "characters (sampled as units)");
  gen->add_option("--output", gcOut, "output file (default stdout)");

  try {
    app.parse(argc, argv);
    if (*tokenize) return cmd_tokenize(tkTok, tkInput, tkOutput);
    if (*align)
      return cmd_align(alTeacherTok, alStudentTok, alInput, alOutput, alFlags, alTeacherLm);
    if (*loss)
      return cmd_loss(loTeacherTok, loStudentTok, loTeacherLm, loStudentLm, loInput, loOutput,
                      loFlags);
    if (*fit) return cmd_fit_teacher(ftTok, ftCorpus, ftOrder, ftAddK, ftOut);
    if (*bias) return cmd_bias_matrix(bmStudentTok, bmTeacherTok, bmCorpus, bmOut, bmThreads);
    if (*distill) return cmd_distill(dfl, dObj);
    if (*eval)
      return cmd_eval(evTeacherTok, evStudentTok, evTeacherLm, evStudentLm, evCorpus, evOutput,
                      evFlags);
    if (*gen) return cmd_gen_corpus(gcSeed, gcDocs, gcMin, gcMax, gcLexicon, gcAlphabet, gcOut);
    return 2;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const alm::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

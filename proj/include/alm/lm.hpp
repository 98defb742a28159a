#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "alm/tokenizer.hpp"
#include "alm/types.hpp"

namespace alm {

/// Autoregressive next-token log-probability source over a tokenizer's
/// vocabulary. Models are immutable during evaluation; evaluation is pure and
/// safe for concurrent use.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual const Tokenizer& tokenizer() const = 0;
  virtual std::string kind() const = 0;
  virtual bool trainable() const { return false; }
  virtual bool has_hidden() const { return false; }

  /// Normalized log distribution over the full vocabulary (logsumexp = 0
  /// within 1e-9). Deterministic.
  virtual std::vector<double> next_logprobs(std::span<const TokenId> prefix) const = 0;

  virtual std::size_t hidden_dim() const { return 0; }
  /// Rows 0..ids.size(): row p is the hidden state after consuming ids[:p].
  /// Only models with has_hidden() provide these.
  virtual std::vector<std::vector<double>> hidden_states(std::span<const TokenId> ids) const;
};

/// Trainable model: flat parameter vector plus analytic gradient accumulation
/// for the quantities the distillation losses are built from.
class TrainableLM : public LanguageModel {
 public:
  bool trainable() const override { return true; }

  virtual std::vector<double>& params() = 0;
  virtual const std::vector<double>& params() const = 0;

  /// [offset, length) of the designated last-layer parameters within params().
  virtual std::pair<std::size_t, std::size_t> output_block() const = 0;
  /// [offset, length) of the embedding parameters; {0, 0} if the model has none.
  virtual std::pair<std::size_t, std::size_t> embedding_block() const { return {0, 0}; }

  /// grad += weight * d log p(target | prefix) / d params
  virtual void accum_logprob_grad(std::span<const TokenId> prefix, TokenId target, double weight,
                                  std::vector<double>& grad) const = 0;
  /// grad += weight * d log(sum of p(e | prefix) over e in boundaryIds) / d params
  virtual void accum_boundary_grad(std::span<const TokenId> prefix,
                                   const std::vector<TokenId>& boundaryIds, double weight,
                                   std::vector<double>& grad) const = 0;

  /// grad += weight * (dHidden . d hidden_state(ids[:pos]) / d params)
  virtual void accum_hidden_grad(std::span<const TokenId> ids, std::size_t pos,
                                 std::span<const double> dHidden, double weight,
                                 std::vector<double>& grad) const;
};

/// Analytic fixture: every next-token probability is 1/|V|.
class UniformLM final : public LanguageModel {
 public:
  explicit UniformLM(std::shared_ptr<const Tokenizer> tok) : tok_(std::move(tok)) {}
  const Tokenizer& tokenizer() const override { return *tok_; }
  std::string kind() const override { return "uniform"; }
  std::vector<double> next_logprobs(std::span<const TokenId> prefix) const override;

 private:
  std::shared_ptr<const Tokenizer> tok_;
};

/// Order-n table model: one logit row per context of the last n token ids,
/// BOS-padded at the sequence start. The context alphabet is |V| + 1 (the
/// vocabulary plus the BOS sentinel), so the table has (|V| + 1)^n rows.
class TableLM final : public TrainableLM {
 public:
  TableLM(std::shared_ptr<const Tokenizer> tok, std::size_t order);

  const Tokenizer& tokenizer() const override { return *tok_; }
  std::string kind() const override { return "table"; }
  std::vector<double> next_logprobs(std::span<const TokenId> prefix) const override;

  std::vector<double>& params() override { return logits_; }
  const std::vector<double>& params() const override { return logits_; }
  std::pair<std::size_t, std::size_t> output_block() const override { return {0, logits_.size()}; }
  void accum_logprob_grad(std::span<const TokenId> prefix, TokenId target, double weight,
                          std::vector<double>& grad) const override;
  void accum_boundary_grad(std::span<const TokenId> prefix, const std::vector<TokenId>& boundaryIds,
                           double weight, std::vector<double>& grad) const override;

  std::size_t order() const { return order_; }
  std::size_t rows() const { return rows_; }
  TokenId bos_id() const { return static_cast<TokenId>(tok_->vocab_size()); }
  std::size_t context_row(std::span<const TokenId> prefix) const;
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

 private:
  std::shared_ptr<const Tokenizer> tok_;
  std::size_t order_ = 1;
  std::size_t rows_ = 0;
  std::vector<double> logits_;  // rows_ x |V|, row-major
};

/// Window-mean embedding model: hidden(prefix) = mean of the last `window`
/// token embeddings (BOS-padded), logits = hidden . outputWeights. The one
/// desk-scale model with a genuine hidden state.
class LinearLM final : public TrainableLM {
 public:
  LinearLM(std::shared_ptr<const Tokenizer> tok, std::size_t embedDim, std::size_t window,
           std::uint64_t seed);

  const Tokenizer& tokenizer() const override { return *tok_; }
  std::string kind() const override { return "linear"; }
  bool has_hidden() const override { return true; }
  std::vector<double> next_logprobs(std::span<const TokenId> prefix) const override;

  std::vector<double>& params() override { return params_; }
  const std::vector<double>& params() const override { return params_; }
  std::pair<std::size_t, std::size_t> output_block() const override;
  std::pair<std::size_t, std::size_t> embedding_block() const override;
  void accum_logprob_grad(std::span<const TokenId> prefix, TokenId target, double weight,
                          std::vector<double>& grad) const override;
  void accum_boundary_grad(std::span<const TokenId> prefix, const std::vector<TokenId>& boundaryIds,
                           double weight, std::vector<double>& grad) const override;

  std::size_t hidden_dim() const override { return embedDim_; }
  std::vector<std::vector<double>> hidden_states(std::span<const TokenId> ids) const override;
  void accum_hidden_grad(std::span<const TokenId> ids, std::size_t pos,
                         std::span<const double> dHidden, double weight,
                         std::vector<double>& grad) const override;

  std::size_t embed_dim() const { return embedDim_; }
  std::size_t window() const { return window_; }
  std::vector<double> hidden(std::span<const TokenId> prefix) const;

 private:
  void dlogits_backprop(std::span<const TokenId> prefix, std::span<const double> dlogits,
                        std::vector<double>& grad) const;

  std::shared_ptr<const Tokenizer> tok_;
  std::size_t embedDim_ = 0;
  std::size_t window_ = 0;
  // layout: embeddings (|V| + 1) x d (BOS row last), then output weights d x |V|
  std::vector<double> params_;
};

// ---- sequence / chunk probabilities ----

/// Entry t = log p(ids[t] | ids[:t]); the sum is the sequence log-likelihood.
std::vector<double> sequence_logprobs(const LanguageModel& lm, std::span<const TokenId> ids);

/// Sum of entries [begin, end) of a sequence_logprobs vector.
double chunk_logprob(std::span<const double> seqLogprobs, std::size_t begin, std::size_t end);

/// Vocabulary ids whose token's first symbol is in the boundary set.
std::vector<TokenId> boundary_token_ids(const Tokenizer& tok, const PretokenBoundarySet& boundary);

/// Probability mass of boundary-starting next tokens after `prefix`.
double boundary_mass(const LanguageModel& lm, std::span<const TokenId> prefix,
                     const PretokenBoundarySet& boundary);
double boundary_mass_from_logprobs(std::span<const double> logprobs,
                                   const std::vector<TokenId>& boundaryIds);

/// chunkLogprob + log(boundaryMass); -inf when the mass is zero (such chunks
/// are meant to be removed by the gamma constraint).
double debiased_chunk_logprob(double chunkLogprob, double boundaryMass);

/// Autoregressive sampling, deterministic given the seed.
std::vector<TokenId> generate(const LanguageModel& lm, std::span<const TokenId> prefix,
                              std::size_t count, std::uint64_t seed);

enum class EnsembleMode { P, LogP };

/// P: log of the elementwise mean probability; LogP: elementwise mean of the
/// log-probabilities, renormalized. All models must share one tokenizer model.
std::vector<double> ensemble_next(const std::vector<const LanguageModel*>& models,
                                  std::span<const TokenId> prefix, EnsembleMode mode);

/// Add-K smoothed n-gram conditional frequencies over the corpus.
TableLM fit_table_lm(std::shared_ptr<const Tokenizer> tok,
                     const std::vector<std::vector<TokenId>>& corpusIds, std::size_t order,
                     double addK);

// ---- external interfaces ----

/// One document per line; empty lines are dropped.
std::vector<std::string> load_corpus(const std::string& path);

void save_model(const LanguageModel& lm, const std::string& path);
std::unique_ptr<LanguageModel> load_model(const std::string& path,
                                          std::shared_ptr<const Tokenizer> tok);

}  // namespace alm

#include "alm/lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "alm/util.hpp"

namespace alm {

namespace {

std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  double norm = logsumexp(out);
  for (double& x : out) x -= norm;
  return out;
}

void check_prefix(const Tokenizer& tok, std::span<const TokenId> prefix) {
  for (TokenId id : prefix)
    if (id >= tok.vocab_size())
      throw std::out_of_range("lm: token id " + std::to_string(id) + " out of range");
}

}  // namespace

// ---- LanguageModel / TrainableLM defaults ----

std::vector<std::vector<double>> LanguageModel::hidden_states(std::span<const TokenId>) const {
  throw std::logic_error("lm: model \"" + kind() + "\" has no hidden states");
}

void TrainableLM::accum_hidden_grad(std::span<const TokenId>, std::size_t, std::span<const double>,
                                    double, std::vector<double>&) const {
  throw std::logic_error("lm: model \"" + kind() + "\" has no hidden states");
}

// ---- UniformLM ----

std::vector<double> UniformLM::next_logprobs(std::span<const TokenId> prefix) const {
  check_prefix(*tok_, prefix);
  return std::vector<double>(tok_->vocab_size(), -std::log(static_cast<double>(tok_->vocab_size())));
}

// ---- TableLM ----

TableLM::TableLM(std::shared_ptr<const Tokenizer> tok, std::size_t order)
    : tok_(std::move(tok)), order_(order) {
  if (order_ < 1) throw ConfigError("table lm: order must be >= 1");
  const std::size_t base = tok_->vocab_size() + 1;  // + BOS sentinel
  std::size_t rows = 1;
  for (std::size_t i = 0; i < order_; ++i) {
    if (rows > (std::size_t{1} << 25) / base)
      throw ConfigError("table lm: context table too large for order " + std::to_string(order_));
    rows *= base;
  }
  rows_ = rows;
  if (rows_ * tok_->vocab_size() > (std::size_t{1} << 25))
    throw ConfigError("table lm: logit table too large");
  logits_.assign(rows_ * tok_->vocab_size(), 0.0);
}

std::size_t TableLM::context_row(std::span<const TokenId> prefix) const {
  const std::size_t base = tok_->vocab_size() + 1;
  const TokenId bos = bos_id();
  std::size_t row = 0;
  for (std::size_t slot = 0; slot < order_; ++slot) {
    // oldest window slot first
    std::size_t back = order_ - slot;
    TokenId id = back > prefix.size() ? bos : prefix[prefix.size() - back];
    row = row * base + id;
  }
  return row;
}

std::span<double> TableLM::row(std::size_t r) {
  return std::span<double>(logits_).subspan(r * tok_->vocab_size(), tok_->vocab_size());
}

std::span<const double> TableLM::row(std::size_t r) const {
  return std::span<const double>(logits_).subspan(r * tok_->vocab_size(), tok_->vocab_size());
}

std::vector<double> TableLM::next_logprobs(std::span<const TokenId> prefix) const {
  check_prefix(*tok_, prefix);
  return log_softmax(row(context_row(prefix)));
}

void TableLM::accum_logprob_grad(std::span<const TokenId> prefix, TokenId target, double weight,
                                 std::vector<double>& grad) const {
  const std::size_t v = tok_->vocab_size();
  std::size_t r = context_row(prefix);
  std::vector<double> lp = log_softmax(row(r));
  double* g = grad.data() + r * v;
  for (std::size_t u = 0; u < v; ++u) g[u] -= weight * std::exp(lp[u]);
  g[target] += weight;
}

void TableLM::accum_boundary_grad(std::span<const TokenId> prefix,
                                  const std::vector<TokenId>& boundaryIds, double weight,
                                  std::vector<double>& grad) const {
  const std::size_t v = tok_->vocab_size();
  std::size_t r = context_row(prefix);
  std::vector<double> lp = log_softmax(row(r));
  double mass = 0.0;
  for (TokenId e : boundaryIds) mass += std::exp(lp[e]);
  if (mass <= 0.0) throw std::runtime_error("lm: boundary gradient at zero boundary mass");
  double* g = grad.data() + r * v;
  for (std::size_t u = 0; u < v; ++u) g[u] -= weight * std::exp(lp[u]);
  for (TokenId e : boundaryIds) g[e] += weight * std::exp(lp[e]) / mass;
}

// ---- LinearLM ----

LinearLM::LinearLM(std::shared_ptr<const Tokenizer> tok, std::size_t embedDim, std::size_t window,
                   std::uint64_t seed)
    : tok_(std::move(tok)), embedDim_(embedDim), window_(window) {
  if (embedDim_ < 1 || window_ < 1) throw ConfigError("linear lm: embedDim and window must be >= 1");
  const std::size_t v = tok_->vocab_size();
  params_.assign((v + 1) * embedDim_ + embedDim_ * v, 0.0);
  std::mt19937_64 rng(seed);
  // Box-Muller; std::normal_distribution is implementation-defined
  for (std::size_t i = 0; i < params_.size(); i += 2) {
    double u1 = std::max(uniform01(rng), 1e-300);
    double u2 = uniform01(rng);
    double r = std::sqrt(-2.0 * std::log(u1));
    params_[i] = 0.1 * r * std::cos(2.0 * M_PI * u2);
    if (i + 1 < params_.size()) params_[i + 1] = 0.1 * r * std::sin(2.0 * M_PI * u2);
  }
}

std::pair<std::size_t, std::size_t> LinearLM::output_block() const {
  const std::size_t v = tok_->vocab_size();
  return {(v + 1) * embedDim_, embedDim_ * v};
}

std::pair<std::size_t, std::size_t> LinearLM::embedding_block() const {
  const std::size_t v = tok_->vocab_size();
  return {0, (v + 1) * embedDim_};
}

std::vector<double> LinearLM::hidden(std::span<const TokenId> prefix) const {
  const TokenId bos = static_cast<TokenId>(tok_->vocab_size());
  std::vector<double> h(embedDim_, 0.0);
  for (std::size_t slot = 0; slot < window_; ++slot) {
    std::size_t back = window_ - slot;
    TokenId id = back > prefix.size() ? bos : prefix[prefix.size() - back];
    const double* e = params_.data() + static_cast<std::size_t>(id) * embedDim_;
    for (std::size_t d = 0; d < embedDim_; ++d) h[d] += e[d];
  }
  for (double& x : h) x /= static_cast<double>(window_);
  return h;
}

std::vector<double> LinearLM::next_logprobs(std::span<const TokenId> prefix) const {
  check_prefix(*tok_, prefix);
  const std::size_t v = tok_->vocab_size();
  std::vector<double> h = hidden(prefix);
  const double* w = params_.data() + output_block().first;
  std::vector<double> logits(v, 0.0);
  for (std::size_t d = 0; d < embedDim_; ++d) {
    const double* wrow = w + d * v;
    double hd = h[d];
    for (std::size_t u = 0; u < v; ++u) logits[u] += hd * wrow[u];
  }
  return log_softmax(logits);
}

void LinearLM::dlogits_backprop(std::span<const TokenId> prefix, std::span<const double> dlogits,
                                std::vector<double>& grad) const {
  const std::size_t v = tok_->vocab_size();
  std::vector<double> h = hidden(prefix);
  const double* w = params_.data() + output_block().first;
  double* gw = grad.data() + output_block().first;
  std::vector<double> dh(embedDim_, 0.0);
  for (std::size_t d = 0; d < embedDim_; ++d) {
    const double* wrow = w + d * v;
    double* gwrow = gw + d * v;
    double hd = h[d];
    double acc = 0.0;
    for (std::size_t u = 0; u < v; ++u) {
      gwrow[u] += hd * dlogits[u];
      acc += wrow[u] * dlogits[u];
    }
    dh[d] = acc;
  }
  const TokenId bos = static_cast<TokenId>(v);
  for (std::size_t slot = 0; slot < window_; ++slot) {
    std::size_t back = window_ - slot;
    TokenId id = back > prefix.size() ? bos : prefix[prefix.size() - back];
    double* ge = grad.data() + static_cast<std::size_t>(id) * embedDim_;
    for (std::size_t d = 0; d < embedDim_; ++d) ge[d] += dh[d] / static_cast<double>(window_);
  }
}

void LinearLM::accum_logprob_grad(std::span<const TokenId> prefix, TokenId target, double weight,
                                  std::vector<double>& grad) const {
  std::vector<double> lp = next_logprobs(prefix);
  std::vector<double> dlogits(lp.size());
  for (std::size_t u = 0; u < lp.size(); ++u) dlogits[u] = -weight * std::exp(lp[u]);
  dlogits[target] += weight;
  dlogits_backprop(prefix, dlogits, grad);
}

void LinearLM::accum_boundary_grad(std::span<const TokenId> prefix,
                                   const std::vector<TokenId>& boundaryIds, double weight,
                                   std::vector<double>& grad) const {
  std::vector<double> lp = next_logprobs(prefix);
  double mass = 0.0;
  for (TokenId e : boundaryIds) mass += std::exp(lp[e]);
  if (mass <= 0.0) throw std::runtime_error("lm: boundary gradient at zero boundary mass");
  std::vector<double> dlogits(lp.size());
  for (std::size_t u = 0; u < lp.size(); ++u) dlogits[u] = -weight * std::exp(lp[u]);
  for (TokenId e : boundaryIds) dlogits[e] += weight * std::exp(lp[e]) / mass;
  dlogits_backprop(prefix, dlogits, grad);
}

std::vector<std::vector<double>> LinearLM::hidden_states(std::span<const TokenId> ids) const {
  std::vector<std::vector<double>> rows;
  rows.reserve(ids.size() + 1);
  for (std::size_t p = 0; p <= ids.size(); ++p) rows.push_back(hidden(ids.first(p)));
  return rows;
}

void LinearLM::accum_hidden_grad(std::span<const TokenId> ids, std::size_t pos,
                                 std::span<const double> dHidden, double weight,
                                 std::vector<double>& grad) const {
  if (dHidden.size() != embedDim_)
    throw std::invalid_argument("lm: hidden gradient dimension mismatch");
  std::span<const TokenId> prefix = ids.first(pos);
  const TokenId bos = static_cast<TokenId>(tok_->vocab_size());
  for (std::size_t slot = 0; slot < window_; ++slot) {
    std::size_t back = window_ - slot;
    TokenId id = back > prefix.size() ? bos : prefix[prefix.size() - back];
    double* ge = grad.data() + static_cast<std::size_t>(id) * embedDim_;
    for (std::size_t d = 0; d < embedDim_; ++d)
      ge[d] += weight * dHidden[d] / static_cast<double>(window_);
  }
}

// ---- sequence / chunk probabilities ----

std::vector<double> sequence_logprobs(const LanguageModel& lm, std::span<const TokenId> ids) {
  if (ids.empty()) throw std::invalid_argument("sequence_logprobs: empty id sequence");
  std::vector<double> out;
  out.reserve(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    std::vector<double> lp = lm.next_logprobs(ids.first(t));
    out.push_back(lp[ids[t]]);
  }
  return out;
}

double chunk_logprob(std::span<const double> seqLogprobs, std::size_t begin, std::size_t end) {
  if (begin >= end || end > seqLogprobs.size())
    throw std::invalid_argument("chunk_logprob: bad span [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") over " +
                                std::to_string(seqLogprobs.size()) + " positions");
  double sum = 0.0;
  for (std::size_t t = begin; t < end; ++t) sum += seqLogprobs[t];
  return sum;
}

std::vector<TokenId> boundary_token_ids(const Tokenizer& tok, const PretokenBoundarySet& boundary) {
  std::vector<TokenId> out;
  for (TokenId id = 0; id < tok.vocab_size(); ++id)
    if (boundary.contains(tok.token(id)[0])) out.push_back(id);
  return out;
}

double boundary_mass_from_logprobs(std::span<const double> logprobs,
                                   const std::vector<TokenId>& boundaryIds) {
  double mass = 0.0;
  for (TokenId e : boundaryIds) mass += std::exp(logprobs[e]);
  return std::min(mass, 1.0);
}

double boundary_mass(const LanguageModel& lm, std::span<const TokenId> prefix,
                     const PretokenBoundarySet& boundary) {
  std::vector<double> lp = lm.next_logprobs(prefix);
  return boundary_mass_from_logprobs(lp, boundary_token_ids(lm.tokenizer(), boundary));
}

double debiased_chunk_logprob(double chunkLogprob, double boundaryMass) {
  if (boundaryMass < 0.0 || boundaryMass > 1.0)
    throw std::invalid_argument("debiased_chunk_logprob: boundary mass outside [0, 1]");
  if (boundaryMass == 0.0) return -std::numeric_limits<double>::infinity();
  return chunkLogprob + std::log(boundaryMass);
}

std::vector<TokenId> generate(const LanguageModel& lm, std::span<const TokenId> prefix,
                              std::size_t count, std::uint64_t seed) {
  std::vector<TokenId> out(prefix.begin(), prefix.end());
  std::mt19937_64 rng(seed);
  for (std::size_t step = 0; step < count; ++step) {
    std::vector<double> lp = lm.next_logprobs(out);
    double u = uniform01(rng);
    double cdf = 0.0;
    TokenId picked = static_cast<TokenId>(lp.size() - 1);
    for (std::size_t v = 0; v < lp.size(); ++v) {
      cdf += std::exp(lp[v]);
      if (u < cdf) {
        picked = static_cast<TokenId>(v);
        break;
      }
    }
    out.push_back(picked);
  }
  return out;
}

std::vector<double> ensemble_next(const std::vector<const LanguageModel*>& models,
                                  std::span<const TokenId> prefix, EnsembleMode mode) {
  if (models.empty()) throw std::invalid_argument("ensemble_next: no models");
  for (const LanguageModel* m : models)
    if (!same_tokenizer(m->tokenizer(), models[0]->tokenizer()))
      throw std::invalid_argument("ensemble_next: models use different tokenizers");

  const std::size_t v = models[0]->tokenizer().vocab_size();
  std::vector<std::vector<double>> lps;
  lps.reserve(models.size());
  for (const LanguageModel* m : models) lps.push_back(m->next_logprobs(prefix));

  std::vector<double> out(v, 0.0);
  if (mode == EnsembleMode::P) {
    std::vector<double> stack(models.size());
    for (std::size_t u = 0; u < v; ++u) {
      for (std::size_t m = 0; m < models.size(); ++m) stack[m] = lps[m][u];
      out[u] = logsumexp(stack) - std::log(static_cast<double>(models.size()));
    }
  } else {
    for (std::size_t u = 0; u < v; ++u) {
      double s = 0.0;
      for (std::size_t m = 0; m < models.size(); ++m) s += lps[m][u];
      out[u] = s / static_cast<double>(models.size());
    }
  }
  double norm = logsumexp(out);
  for (double& x : out) x -= norm;
  return out;
}

TableLM fit_table_lm(std::shared_ptr<const Tokenizer> tok,
                     const std::vector<std::vector<TokenId>>& corpusIds, std::size_t order,
                     double addK) {
  if (corpusIds.empty()) throw ConfigError("fit_table_lm: empty corpus");
  if (addK <= 0.0) throw ConfigError("fit_table_lm: addK must be > 0");
  TableLM lm(tok, order);
  const std::size_t v = tok->vocab_size();
  std::vector<double> counts(lm.rows() * v, 0.0);
  for (const std::vector<TokenId>& ids : corpusIds) {
    for (std::size_t t = 0; t < ids.size(); ++t) {
      std::size_t r = lm.context_row(std::span<const TokenId>(ids).first(t));
      counts[r * v + ids[t]] += 1.0;
    }
  }
  for (std::size_t r = 0; r < lm.rows(); ++r) {
    double total = 0.0;
    for (std::size_t u = 0; u < v; ++u) total += counts[r * v + u];
    double denom = std::log(total + addK * static_cast<double>(v));
    std::span<double> row = lm.row(r);
    for (std::size_t u = 0; u < v; ++u) row[u] = std::log(counts[r * v + u] + addK) - denom;
  }
  return lm;
}

// ---- external interfaces ----

std::vector<std::string> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus: " + path);
  std::vector<std::string> docs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) docs.push_back(line);
  }
  return docs;
}

void save_model(const LanguageModel& lm, const std::string& path) {
  nlohmann::json doc;
  doc["kind"] = lm.kind();
  doc["tokenizer"] = lm.tokenizer().name();
  doc["vocab_size"] = lm.tokenizer().vocab_size();
  if (const auto* table = dynamic_cast<const TableLM*>(&lm)) {
    doc["order"] = table->order();
    doc["params"] = table->params();
  } else if (const auto* linear = dynamic_cast<const LinearLM*>(&lm)) {
    doc["embed_dim"] = linear->embed_dim();
    doc["window"] = linear->window();
    doc["params"] = linear->params();
  } else if (lm.kind() != "uniform") {
    throw ConfigError("save_model: unsupported model kind \"" + lm.kind() + "\"");
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out << doc.dump() << '\n';
}

std::unique_ptr<LanguageModel> load_model(const std::string& path,
                                          std::shared_ptr<const Tokenizer> tok) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed checkpoint " + path + ": " + e.what());
  }
  std::string kind = doc.value("kind", std::string{});
  std::string tokName = doc.value("tokenizer", std::string{});
  if (tokName != tok->name())
    throw ConfigError("checkpoint " + path + " was built for tokenizer \"" + tokName +
                      "\", got \"" + tok->name() + "\"");
  if (doc.value("vocab_size", std::size_t{0}) != tok->vocab_size())
    throw ConfigError("checkpoint " + path + ": vocabulary size mismatch");

  auto load_params = [&](std::vector<double>& dst) {
    std::vector<double> params = doc.at("params").get<std::vector<double>>();
    if (params.size() != dst.size())
      throw ConfigError("checkpoint " + path + ": expected " + std::to_string(dst.size()) +
                        " parameters, got " + std::to_string(params.size()));
    dst = std::move(params);
  };

  if (kind == "uniform") return std::make_unique<UniformLM>(std::move(tok));
  if (kind == "table") {
    auto lm = std::make_unique<TableLM>(std::move(tok), doc.at("order").get<std::size_t>());
    load_params(lm->params());
    return lm;
  }
  if (kind == "linear") {
    auto lm = std::make_unique<LinearLM>(std::move(tok), doc.at("embed_dim").get<std::size_t>(),
                                         doc.at("window").get<std::size_t>(), /*seed=*/0);
    load_params(lm->params());
    return lm;
  }
  throw ConfigError("checkpoint " + path + ": unknown model kind \"" + kind + "\"");
}

}  // namespace alm

#include "alm/bias.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>

#include <nlohmann/json.hpp>

#include "alm/util.hpp"

namespace alm {

namespace {

bool token_is_special(const Tokenizer& tok, TokenId id) {
  const TokenString& t = tok.token(id);
  return t.size() == 1 && !is_byte_symbol(t[0]);
}

bool starts_with(const TokenString& token, std::span<const Symbol> prefix) {
  if (token.size() < prefix.size()) return false;
  return std::equal(prefix.begin(), prefix.end(), token.begin());
}

bool is_suffix(const TokenString& shorter, const TokenString& longer) {
  if (shorter.size() > longer.size()) return false;
  return std::equal(shorter.rbegin(), shorter.rend(), longer.rbegin());
}

}  // namespace

CoverEncodingSet cover_encodings(const Tokenizer& tok, TokenId tokenId) {
  const TokenString& x = tok.token(tokenId);
  if (x.size() == 1 && !is_byte_symbol(x[0]))
    throw std::invalid_argument("cover_encodings: special token " + std::to_string(tokenId) +
                                " has no byte content");

  CoverEncodingSet out;
  out.tokenId = tokenId;
  out.covers.push_back({tokenId});

  for (std::size_t p = 0; p < x.size(); ++p) {
    std::span<const Symbol> tail(x.data() + p, x.size() - p);
    std::vector<TokenId> prefixIds =
        p == 0 ? std::vector<TokenId>{} : tok.tokenize(std::span<const Symbol>(x.data(), p));
    for (TokenId v = 0; v < tok.vocab_size(); ++v) {
      const TokenString& cand = tok.token(v);
      if (cand.size() <= tail.size()) continue;  // must extend strictly past the end
      if (!starts_with(cand, tail)) continue;
      std::vector<TokenId> u = prefixIds;
      u.push_back(v);
      if (tok.tokenize(tok.detokenize(u)) == u) out.covers.push_back(std::move(u));
    }
  }
  return out;
}

ImpliedExclusions implied_exclusions(const Tokenizer& tok, TokenId tokenId) {
  CoverEncodingSet covers = cover_encodings(tok, tokenId);
  ImpliedExclusions out;
  out.tokenId = tokenId;
  for (const std::vector<TokenId>& u : covers.covers) {
    if (u.size() == 1 && u[0] == tokenId) continue;
    out.excluded.push_back(tok.detokenize(u));
  }
  std::sort(out.excluded.begin(), out.excluded.end());
  return out;
}

std::map<SymbolString, TokenId> exclusion_extensions(const Tokenizer& tok, TokenId tokenId) {
  std::map<SymbolString, TokenId> out;
  if (token_is_special(tok, tokenId)) return out;
  const std::size_t tokenLen = tok.token(tokenId).size();
  CoverEncodingSet covers = cover_encodings(tok, tokenId);
  for (const std::vector<TokenId>& u : covers.covers) {
    if (u.size() == 1 && u[0] == tokenId) continue;
    SymbolString decoded = tok.detokenize(u);
    out.emplace(SymbolString(decoded.begin() + tokenLen, decoded.end()), u.back());
  }
  return out;
}

BiasDifference bias_difference(TokenId lastTokStudent, TokenId lastTokTeacher,
                               const Tokenizer& tokStudent, const Tokenizer& tokTeacher,
                               const UnigramTable& unigramStudent,
                               const UnigramTable& unigramTeacher) {
  std::map<SymbolString, TokenId> exS = exclusion_extensions(tokStudent, lastTokStudent);
  std::map<SymbolString, TokenId> exT = exclusion_extensions(tokTeacher, lastTokTeacher);
  if (unigramStudent.prob.size() != tokStudent.vocab_size() ||
      unigramTeacher.prob.size() != tokTeacher.vocab_size())
    throw std::invalid_argument("bias_difference: unigram table does not match the vocabulary");

  BiasDifference out;
  for (const auto& [ext, last] : exT)
    if (!exS.count(ext)) out.studentGivenTeacher += unigramTeacher.prob[last];
  for (const auto& [ext, last] : exS)
    if (!exT.count(ext)) out.teacherGivenStudent += unigramStudent.prob[last];
  out.symmetrized = std::max(out.studentGivenTeacher, out.teacherGivenStudent);
  return out;
}

BiasMatrix build_bias_matrix(const Tokenizer& tokStudent, const Tokenizer& tokTeacher,
                             const UnigramTable& unigramStudent,
                             const UnigramTable& unigramTeacher, unsigned threads) {
  BiasMatrix out;
  out.studentTokenizer = tokStudent.name();
  out.teacherTokenizer = tokTeacher.name();

  // precomputed once per vocabulary token
  std::vector<std::map<SymbolString, TokenId>> exS(tokStudent.vocab_size());
  std::vector<std::map<SymbolString, TokenId>> exT(tokTeacher.vocab_size());
  parallel_for(tokStudent.vocab_size(), threads,
               [&](std::size_t s) { exS[s] = exclusion_extensions(tokStudent, static_cast<TokenId>(s)); });
  parallel_for(tokTeacher.vocab_size(), threads,
               [&](std::size_t t) { exT[t] = exclusion_extensions(tokTeacher, static_cast<TokenId>(t)); });

  std::vector<std::vector<std::pair<std::uint64_t, double>>> perStudent(tokStudent.vocab_size());
  parallel_for(tokStudent.vocab_size(), threads, [&](std::size_t s) {
    TokenId sId = static_cast<TokenId>(s);
    if (token_is_special(tokStudent, sId)) return;
    const TokenString& xS = tokStudent.token(sId);
    for (TokenId tId = 0; tId < tokTeacher.vocab_size(); ++tId) {
      if (token_is_special(tokTeacher, tId)) continue;
      const TokenString& xT = tokTeacher.token(tId);
      if (exS[sId].empty() && exT[tId].empty()) continue;

      // The pair can only co-occur as last tokens at a shared text position if
      // the shorter token's bytes are the suffix of the longer's, and the
      // canonical tokenizations of that longer string end in the pair.
      const TokenString& longer = xS.size() >= xT.size() ? xS : xT;
      if (!is_suffix(xS.size() >= xT.size() ? xT : xS, longer)) continue;
      std::vector<TokenId> witnessS = tokStudent.tokenize(longer);
      std::vector<TokenId> witnessT = tokTeacher.tokenize(longer);
      if (witnessS.empty() || witnessS.back() != sId) continue;
      if (witnessT.empty() || witnessT.back() != tId) continue;

      double sGivenT = 0.0, tGivenS = 0.0;
      for (const auto& [ext, last] : exT[tId])
        if (!exS[sId].count(ext)) sGivenT += unigramTeacher.prob[last];
      for (const auto& [ext, last] : exS[sId])
        if (!exT[tId].count(ext)) tGivenS += unigramStudent.prob[last];
      double symmetrized = std::max(sGivenT, tGivenS);
      if (symmetrized > 0.0) perStudent[s].emplace_back(BiasMatrix::key(sId, tId), symmetrized);
    }
  });

  for (const auto& rows : perStudent)
    for (const auto& [key, value] : rows) out.entries.emplace(key, value);
  return out;
}

UnigramTable unigram_from_corpus(const Tokenizer& tok, const std::vector<std::string>& corpus) {
  if (corpus.empty()) throw ConfigError("unigram_from_corpus: empty corpus");
  UnigramTable out;
  out.counts.assign(tok.vocab_size(), 0);
  for (const std::string& doc : corpus) {
    for (TokenId id : tok.tokenize_bytes(doc)) {
      ++out.counts[id];
      ++out.totalCount;
    }
  }
  out.prob.resize(tok.vocab_size());
  double denom = static_cast<double>(out.totalCount) + static_cast<double>(tok.vocab_size());
  for (std::size_t id = 0; id < tok.vocab_size(); ++id)
    out.prob[id] = (static_cast<double>(out.counts[id]) + 1.0) / denom;
  return out;
}

ConstraintContext bias_constraint_context(const ChunkAlignment& alignment,
                                          std::span<const TokenId> teacherIds,
                                          std::span<const TokenId> studentIds,
                                          const BiasMatrix& matrix) {
  ConstraintContext ctx;
  ctx.biasScore.reserve(alignment.quads.size());
  for (const ChunkQuadruple& quad : alignment.quads) {
    double prefixBias =
        quad.i == 0 ? 0.0 : matrix.lookup(studentIds[quad.k - 1], teacherIds[quad.i - 1]);
    double chunkBias = matrix.lookup(studentIds[quad.l - 1], teacherIds[quad.j - 1]);
    ctx.biasScore.push_back(std::max(prefixBias, chunkBias));
  }
  return ctx;
}

void save_bias_matrix(const BiasMatrix& matrix, const std::string& path) {
  nlohmann::json doc;
  doc["student_tokenizer"] = matrix.studentTokenizer;
  doc["teacher_tokenizer"] = matrix.teacherTokenizer;
  std::vector<std::tuple<TokenId, TokenId, double>> entries;
  entries.reserve(matrix.entries.size());
  for (const auto& [key, value] : matrix.entries)
    entries.emplace_back(static_cast<TokenId>(key >> 32), static_cast<TokenId>(key & 0xffffffffu),
                         value);
  std::sort(entries.begin(), entries.end());
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [s, t, v] : entries) rows.push_back({s, t, v});
  doc["entries"] = std::move(rows);
  std::ofstream outFile(path);
  if (!outFile) throw ConfigError("cannot write bias matrix: " + path);
  outFile << doc.dump() << '\n';
}

BiasMatrix load_bias_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open bias matrix: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed bias matrix " + path + ": " + e.what());
  }
  BiasMatrix out;
  out.studentTokenizer = doc.value("student_tokenizer", std::string{});
  out.teacherTokenizer = doc.value("teacher_tokenizer", std::string{});
  for (const auto& row : doc.at("entries")) {
    if (!row.is_array() || row.size() != 3)
      throw ConfigError("bias matrix " + path + ": entries must be [sId, tId, value]");
    out.entries.emplace(BiasMatrix::key(row[0].get<TokenId>(), row[1].get<TokenId>()),
                        row[2].get<double>());
  }
  return out;
}

}  // namespace alm

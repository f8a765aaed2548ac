#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sarcnet/data.hpp"
#include "sarcnet/errors.hpp"
#include "sarcnet/random.hpp"
#include "sarcnet/tensor.hpp"

namespace sarcnet {

struct PretrainedVectors {
  std::size_t dimension = 0;
  std::unordered_map<std::string, std::vector<float>> vectors;

  bool contains(const std::string& word) const { return vectors.count(word) != 0; }
};

/// Parses the word2vec text format: a "count dim" header, then one
/// "word v1 ... vD" line per word. With restrict_to set, words outside that
/// vocabulary are skipped (their values are still validated). A repeated
/// word keeps its last occurrence and logs a warning.
inline PretrainedVectors parse_vectors_text(std::istream& in, const Vocabulary* restrict_to = nullptr,
                                            std::ostream* warnings = &std::cerr) {
  PretrainedVectors pv;
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError("missing header", lineno);
  {
    std::istringstream hs(line);
    std::size_t count = 0;
    if (!(hs >> count >> pv.dimension) || pv.dimension == 0) throw ParseError("header must be '<count> <dim>'", lineno);
  }
  std::vector<float> values;
  values.reserve(pv.dimension);
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    values.clear();
    std::string field;
    while (ls >> field) {
      char* end = nullptr;
      const float v = std::strtof(field.c_str(), &end);
      if (end != field.c_str() + field.size() || !std::isfinite(v))
        throw ParseError("invalid value '" + field + "' for '" + word + "'", lineno);
      values.push_back(v);
    }
    if (values.size() != pv.dimension)
      throw ParseError("expected " + std::to_string(pv.dimension) + " values for '" + word + "', found " +
                           std::to_string(values.size()),
                       lineno);
    if (restrict_to && !restrict_to->contains(word)) continue;
    auto [it, inserted] = pv.vectors.try_emplace(word, values);
    if (!inserted) {
      if (warnings) *warnings << "warning: duplicate vector for '" << word << "' on line " << lineno << "; keeping last\n";
      it->second = values;
    }
  }
  return pv;
}

inline PretrainedVectors load_vectors_text(const std::filesystem::path& path, const Vocabulary* restrict_to = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vectors file " + path.string());
  return parse_vectors_text(in, restrict_to);
}

template <class Scalar>
struct EmbeddingMatrix {
  Tensor<Scalar> table;               // [V x D]
  std::vector<std::string> missing;   // vocabulary tokens without a pretrained vector
};

/// One row per vocabulary id. Pretrained rows are copied verbatim; the rest
/// are i.i.d. uniform in [-oov_range, oov_range]; the padding row is zero.
/// Without pretrained vectors every row is random at the given dimension.
template <class Scalar>
EmbeddingMatrix<Scalar> build_embedding_matrix(const Vocabulary& vocab, const PretrainedVectors* pre,
                                               std::size_t dimension, double oov_range, std::uint64_t seed) {
  if (!(oov_range > 0)) throw ConfigError("oov_range must be positive");
  const std::size_t d = pre ? pre->dimension : dimension;
  if (d == 0) throw ConfigError("embedding dimension must be positive");
  EmbeddingMatrix<Scalar> m{Tensor<Scalar>({vocab.size(), d}), {}};
  Rng rng(seed);
  for (std::size_t id = 1; id < vocab.size(); ++id) {
    auto row = m.table.row(id);
    const std::string& tok = vocab.tokens()[id];
    const std::vector<float>* vec = nullptr;
    if (pre)
      if (const auto it = pre->vectors.find(tok); it != pre->vectors.end()) vec = &it->second;
    if (vec) {
      for (std::size_t k = 0; k < d; ++k) row[k] = static_cast<Scalar>((*vec)[k]);
    } else {
      for (auto& v : row) v = static_cast<Scalar>(rng.uniform(-oov_range, oov_range));
      if (id >= 2) m.missing.push_back(tok);
    }
  }
  return m;
}

/// 100 * |vocabulary tokens without a vector| / |non-reserved tokens|.
inline double coverage(const Vocabulary& vocab, const PretrainedVectors& pre) {
  return missing_percentage(vocab, [&](const std::string& t) { return pre.contains(t); });
}

/// Key-value coverage block used by the stats command.
inline void write_coverage_report(std::ostream& out, const Vocabulary& vocab, const PretrainedVectors& pre) {
  std::size_t covered = 0;
  for (std::size_t id = 2; id < vocab.size(); ++id) covered += pre.contains(vocab.tokens()[id]);
  out << "embedding_dim\t" << pre.dimension << '\n'
      << "vocab_tokens\t" << vocab.size() - 2 << '\n'
      << "covered_tokens\t" << covered << '\n'
      << "missing_pct\t" << coverage(vocab, pre) << '\n';
}

}  // namespace sarcnet

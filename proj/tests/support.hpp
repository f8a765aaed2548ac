#pragma once

#include <string>
#include <vector>

#include "sarcnet/sarcnet.hpp"

namespace testing_support {

inline const std::string kFixtures = SARCNET_FIXTURES;

/// Small hybrid config that trains in well under a second on the toy corpus.
inline sarcnet::ModelConfig small_config(sarcnet::Variant variant = sarcnet::Variant::hybrid) {
  sarcnet::ModelConfig c;
  c.variant = variant;
  c.embedding_dim = 8;
  c.channels = 6;
  c.filter_width = 3;
  c.hidden_units = 5;
  c.attention_size = 4;
  c.mlp_hidden = 6;
  c.dropout = 0.0;
  c.l2 = 0.0;
  c.max_len = 12;
  c.batch_size = 8;
  c.epochs = 5;
  c.seed = 3;
  return c;
}

struct ToyData {
  std::vector<sarcnet::HeadlineRecord> records;
  sarcnet::Vocabulary vocab;
};

inline ToyData toy_data() {
  ToyData d;
  d.records = sarcnet::load_dataset(kFixtures + "/toy_headlines.jsonl");
  std::vector<std::vector<std::string>> corpus;
  for (const auto& r : d.records) corpus.push_back(sarcnet::tokenize(r.headline));
  d.vocab = sarcnet::build_vocabulary(corpus, 1);
  return d;
}

inline std::vector<std::size_t> iota(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> v;
  for (std::size_t i = lo; i < hi; ++i) v.push_back(i);
  return v;
}

template <class Scalar>
sarcnet::Model<Scalar> toy_model(const sarcnet::ModelConfig& cfg, const sarcnet::Vocabulary& vocab) {
  auto emb = sarcnet::build_embedding_matrix<Scalar>(vocab, nullptr, cfg.embedding_dim, cfg.oov_range, cfg.seed);
  return sarcnet::Model<Scalar>::initialize(cfg, std::move(emb.table));
}

}  // namespace testing_support

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sarcnet/checkpoint.hpp"
#include "sarcnet/data.hpp"
#include "sarcnet/errors.hpp"
#include "sarcnet/model.hpp"

namespace sarcnet {

struct EncodedText {
  std::vector<std::string> tokens;  // kept tokens, at most max_len
  PaddedIds padded;
};

inline EncodedText encode_text(const std::string& text, const Vocabulary& vocab, std::size_t max_len) {
  EncodedText e;
  e.tokens = tokenize(text);
  if (e.tokens.empty()) throw ValidationError("input has no tokens: '" + text + "'");
  if (e.tokens.size() > max_len) e.tokens.resize(max_len);
  e.padded = pad_or_truncate(vocab.encode(e.tokens), max_len);
  return e;
}

/// Tokenize, map to ids and run the model in eval mode.
inline Prediction<float> predict(const std::string& text, const Artifacts& artifacts) {
  const auto e = encode_text(text, artifacts.vocab, artifacts.model.config().max_len);
  return artifacts.model.predict_ids(e.padded.ids, e.padded.length);
}

/// Attention weight per real token; hybrid models only.
inline std::vector<std::pair<std::string, float>> explain(const std::string& text, const Artifacts& artifacts) {
  if (artifacts.model.variant() != Variant::hybrid)
    throw UnsupportedVariant("attention explanations need a hybrid model; this checkpoint is a baseline");
  const auto e = encode_text(text, artifacts.vocab, artifacts.model.config().max_len);
  const auto pred = artifacts.model.predict_ids(e.padded.ids, e.padded.length);
  std::vector<std::pair<std::string, float>> out;
  for (std::size_t i = 0; i < e.tokens.size(); ++i) out.emplace_back(e.tokens[i], (*pred.attention)[i]);
  return out;
}

}  // namespace sarcnet

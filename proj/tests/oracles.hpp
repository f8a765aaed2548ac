#pragma once

// Plain scalar-loop reference implementations, written from the textbook
// definitions and kept free of the library's own kernels.

#include <cmath>
#include <utility>
#include <vector>

#include "sarcnet/layers.hpp"

namespace oracles {

using Matrix = std::vector<std::vector<double>>;

/// out[t][f] = b[f] + sum_j sum_d seq[t+j][d] * filters[f][j][d]
inline Matrix conv1d_valid(const sarcnet::Tensor<double>& seq, const sarcnet::Tensor<double>& filters,
                           const sarcnet::Tensor<double>& bias) {
  const std::size_t len = seq.dim(0), depth = seq.dim(1), nf = filters.dim(0), w = filters.dim(1);
  Matrix out(len - w + 1, std::vector<double>(nf));
  for (std::size_t t = 0; t + w <= len; ++t)
    for (std::size_t f = 0; f < nf; ++f) {
      double acc = bias[f];
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t d = 0; d < depth; ++d) acc += seq[(t + j) * depth + d] * filters[(f * w + j) * depth + d];
      out[t][f] = acc;
    }
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// One LSTM transition, gate by gate (order i, f, g, o). Returns (h, c).
inline std::pair<std::vector<double>, std::vector<double>> lstm_step(const std::vector<double>& x,
                                                                     const std::vector<double>& h,
                                                                     const std::vector<double>& c,
                                                                     const sarcnet::LstmCellParams<double>& p) {
  const std::size_t H = h.size(), D = x.size();
  const auto pre = [&](std::size_t gate, std::size_t k) {
    const std::size_t row = gate * H + k;
    double z = p.bias[row];
    for (std::size_t d = 0; d < D; ++d) z += p.input_w[row * D + d] * x[d];
    for (std::size_t j = 0; j < H; ++j) z += p.recurrent_w[row * H + j] * h[j];
    return z;
  };
  std::vector<double> h_new(H), c_new(H);
  for (std::size_t k = 0; k < H; ++k) {
    const double i = sigmoid(pre(0, k)), f = sigmoid(pre(1, k)), g = std::tanh(pre(2, k)), o = sigmoid(pre(3, k));
    c_new[k] = f * c[k] + i * g;
    h_new[k] = o * std::tanh(c_new[k]);
  }
  return {h_new, c_new};
}

}  // namespace oracles

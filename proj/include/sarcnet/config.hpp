#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sarcnet/errors.hpp"

namespace sarcnet {

enum class Variant { baseline, hybrid };

inline std::string to_string(Variant v) { return v == Variant::hybrid ? "hybrid" : "baseline"; }

inline Variant parse_variant(const std::string& s) {
  if (s == "hybrid") return Variant::hybrid;
  if (s == "baseline") return Variant::baseline;
  throw ConfigError("variant must be 'hybrid' or 'baseline', got '" + s + "'");
}

/// Every architecture and training knob. One flat key=value file drives both
/// variants; unspecified keys keep these defaults.
struct ModelConfig {
  Variant variant = Variant::hybrid;
  std::size_t embedding_dim = 50;
  std::size_t filter_width = 3;
  std::size_t channels = 64;
  std::size_t hidden_units = 64;
  std::size_t attention_size = 64;
  std::size_t mlp_hidden = 64;
  double dropout = 0.5;
  double l2 = 1e-5;
  double learning_rate = 1.0;  // AdaDelta update scale
  double rho = 0.95;
  double epsilon = 1e-6;
  std::size_t max_len = 32;
  std::size_t min_count = 1;
  double oov_range = 0.25;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::size_t patience = 5;
  std::uint64_t seed = 42;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

namespace detail {

template <class Fn>
void for_each_config_field(ModelConfig& c, Fn&& fn) {
  fn("variant", c.variant);
  fn("embedding_dim", c.embedding_dim);
  fn("filter_width", c.filter_width);
  fn("channels", c.channels);
  fn("hidden_units", c.hidden_units);
  fn("attention_size", c.attention_size);
  fn("mlp_hidden", c.mlp_hidden);
  fn("dropout", c.dropout);
  fn("l2", c.l2);
  fn("learning_rate", c.learning_rate);
  fn("rho", c.rho);
  fn("epsilon", c.epsilon);
  fn("max_len", c.max_len);
  fn("min_count", c.min_count);
  fn("oov_range", c.oov_range);
  fn("batch_size", c.batch_size);
  fn("epochs", c.epochs);
  fn("patience", c.patience);
  fn("seed", c.seed);
}

inline std::string format_value(Variant v) { return to_string(v); }
// Shortest text that reads back to the same double.
inline std::string format_value(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
template <class Int>
std::string format_value(Int v) {
  return std::to_string(v);
}

inline void parse_value(const std::string& text, Variant& out) { out = parse_variant(text); }
inline void parse_value(const std::string& text, double& out) {
  std::size_t used = 0;
  out = std::stod(text, &used);
  if (used != text.size()) throw std::invalid_argument(text);
}
template <class Int>
void parse_value(const std::string& text, Int& out) {
  if (text.empty() || text[0] == '-') throw std::invalid_argument(text);
  std::size_t used = 0;
  out = static_cast<Int>(std::stoull(text, &used));
  if (used != text.size()) throw std::invalid_argument(text);
}

inline std::string trim_copy(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace detail

/// All violated constraints, empty when valid.
inline std::vector<std::string> config_problems(const ModelConfig& c) {
  std::vector<std::string> p;
  const auto need = [&](bool ok, const char* msg) {
    if (!ok) p.emplace_back(msg);
  };
  need(c.embedding_dim >= 1, "embedding_dim must be >= 1");
  need(c.filter_width >= 1, "filter_width must be >= 1");
  need(c.channels >= 1, "channels must be >= 1");
  need(c.hidden_units >= 1, "hidden_units must be >= 1");
  need(c.attention_size >= 1, "attention_size must be >= 1");
  need(c.mlp_hidden >= 1, "mlp_hidden must be >= 1");
  need(c.dropout >= 0 && c.dropout < 1, "dropout must lie in [0, 1)");
  need(c.l2 >= 0, "l2 must be >= 0");
  need(c.learning_rate > 0, "learning_rate must be > 0");
  need(c.rho > 0 && c.rho < 1, "rho must lie in (0, 1)");
  need(c.epsilon > 0, "epsilon must be > 0");
  need(c.max_len >= 1, "max_len must be >= 1");
  need(c.min_count >= 1, "min_count must be >= 1");
  need(c.oov_range > 0, "oov_range must be > 0");
  need(c.batch_size >= 1, "batch_size must be >= 1");
  need(c.epochs >= 1, "epochs must be >= 1");
  return p;
}

inline void validate(const ModelConfig& c) {
  const auto problems = config_problems(c);
  if (problems.empty()) return;
  std::string msg = "invalid config:";
  for (const auto& s : problems) msg += "\n  " + s;
  throw ConfigError(msg);
}

/// Parses "key = value" lines ('#' starts a comment). Unknown keys, bad
/// values and range violations are collected and reported together.
inline ModelConfig parse_config(std::istream& in, ModelConfig base = {}) {
  std::vector<std::string> problems;
  std::map<std::string, std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim_copy(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    seen[detail::trim_copy(line.substr(0, eq))] = detail::trim_copy(line.substr(eq + 1));
  }
  for (const auto& [key, value] : seen) {
    bool known = false;
    detail::for_each_config_field(base, [&](const char* name, auto& field) {
      if (key != name) return;
      known = true;
      try {
        detail::parse_value(value, field);
      } catch (const ConfigError& e) {
        problems.push_back(key + ": " + e.what());
      } catch (const std::exception&) {
        problems.push_back(key + ": cannot parse '" + value + "'");
      }
    });
    if (!known) problems.push_back("unknown key '" + key + "'");
  }
  for (auto& p : config_problems(base)) problems.push_back(std::move(p));
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& s : problems) msg += "\n  " + s;
    throw ConfigError(msg);
  }
  return base;
}

inline ModelConfig parse_config(const std::string& text, ModelConfig base = {}) {
  std::istringstream in(text);
  return parse_config(in, std::move(base));
}

inline ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  return parse_config(in);
}

inline void write_config(std::ostream& out, ModelConfig c) {
  detail::for_each_config_field(c, [&](const char* name, auto& field) {
    out << name << " = " << detail::format_value(field) << '\n';
  });
}

inline std::string config_to_string(const ModelConfig& c) {
  std::ostringstream os;
  write_config(os, c);
  return os.str();
}

}  // namespace sarcnet

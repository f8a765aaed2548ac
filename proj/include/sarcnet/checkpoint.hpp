#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sarcnet/config.hpp"
#include "sarcnet/data.hpp"
#include "sarcnet/errors.hpp"
#include "sarcnet/model.hpp"

namespace sarcnet {

// Container layout (all integers little-endian):
//   "SARC" | u16 major | u16 minor
//   u32 n + n bytes   config text (key = value lines)
//   u32 count, then count x (u32 n + n bytes)   vocabulary tokens in id order
//   u32 count, then per tensor:
//     u16 n + n bytes name | u8 rank | rank x u32 extents | f32 values
//   "END!"
inline constexpr std::array<char, 4> kCheckpointMagic = {'S', 'A', 'R', 'C'};
inline constexpr std::uint16_t kCheckpointMajor = 1;
inline constexpr std::uint16_t kCheckpointMinor = 0;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class IntegrityError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Vocabulary, configuration and float weights; everything inference needs.
struct Artifacts {
  Vocabulary vocab;
  Model<float> model;
};

namespace detail {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <class T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void bytes(const std::string& s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }
  void string32(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  std::string string32() { return bytes(pod<std::uint32_t>()); }

 private:
  void check() {
    if (!in_) throw IntegrityError("checkpoint truncated");
  }
  std::istream& in_;
};

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Model<float>& model, const Vocabulary& vocab) {
  detail::Writer w(out);
  w.bytes(std::string(kCheckpointMagic.begin(), kCheckpointMagic.end()));
  w.pod(kCheckpointMajor);
  w.pod(kCheckpointMinor);
  w.string32(config_to_string(model.config()));
  w.pod(static_cast<std::uint32_t>(vocab.size()));
  for (const auto& t : vocab.tokens()) w.string32(t);
  const auto entries = model.weights().entries(model.variant());
  w.pod(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.pod(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name);
    w.pod(static_cast<std::uint8_t>(e.tensor->rank()));
    for (auto extent : e.tensor->shape()) w.pod(static_cast<std::uint32_t>(extent));
    out.write(reinterpret_cast<const char*>(e.tensor->data().data()),
              static_cast<std::streamsize>(e.tensor->size() * sizeof(float)));
  }
  w.bytes("END!");
  if (!out) throw IoError("failed writing checkpoint");
}

/// Reads a checkpoint. A newer minor version is accepted with a warning; a
/// different major version is rejected.
inline Artifacts read_checkpoint(std::istream& in, std::ostream* warnings = &std::cerr) {
  detail::Reader r(in);
  std::string magic;
  try {
    magic = r.bytes(4);
  } catch (const IntegrityError&) {
    throw FormatError("not a checkpoint: missing magic bytes");
  }
  if (magic != std::string(kCheckpointMagic.begin(), kCheckpointMagic.end()))
    throw FormatError("not a checkpoint: bad magic bytes");
  const auto major = r.pod<std::uint16_t>();
  const auto minor = r.pod<std::uint16_t>();
  if (major != kCheckpointMajor)
    throw FormatError("checkpoint format version " + std::to_string(major) + "." + std::to_string(minor) +
                      " is incompatible with " + std::to_string(kCheckpointMajor) + "." +
                      std::to_string(kCheckpointMinor));
  if (minor > kCheckpointMinor && warnings)
    *warnings << "warning: checkpoint minor version " << minor << " is newer than " << kCheckpointMinor << '\n';

  const ModelConfig config = parse_config(r.string32());
  const auto vocab_size = r.pod<std::uint32_t>();
  std::vector<std::string> tokens;
  tokens.reserve(vocab_size);
  for (std::uint32_t i = 0; i < vocab_size; ++i) tokens.push_back(r.string32());
  Vocabulary vocab = Vocabulary::from_tokens(std::move(tokens));

  ModelWeights<float> weights;
  auto entries = weights.entries(config.variant);
  const auto count = r.pod<std::uint32_t>();
  if (count != entries.size())
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                      std::to_string(entries.size()));
  for (auto& e : entries) {
    const std::string name = r.bytes(r.pod<std::uint16_t>());
    if (name != e.name) throw FormatError("expected tensor '" + e.name + "', found '" + name + "'");
    const auto rank = r.pod<std::uint8_t>();
    Shape shape(rank);
    for (auto& extent : shape) extent = r.pod<std::uint32_t>();
    Tensor<float> t(shape);
    in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw IntegrityError("checkpoint truncated inside tensor '" + name + "'");
    *e.tensor = std::move(t);
  }
  if (r.bytes(4) != "END!") throw IntegrityError("checkpoint trailer missing");
  if (weights.embedding.dim(0) != vocab.size())
    throw FormatError("embedding rows do not match vocabulary size");
  return {std::move(vocab), Model<float>(config, std::move(weights))};
}

inline void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  write_checkpoint(out, model, vocab);
}

inline Artifacts load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace sarcnet

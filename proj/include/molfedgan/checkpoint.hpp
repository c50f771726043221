//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

// Binary model checkpoints.
//
//   GGFCKPT v1\n
//   name \t rank \t dim_0 \t ... \t <row-major little-endian float32 values>
//   ...
//   <CRC32 of everything between the header line and the CRC, little-endian>
//
// Generator parameters are stored under "generator.", discriminator
// parameters under "discriminator.".

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "molfedgan/errors.hpp"
#include "molfedgan/gan.hpp"
#include "molfedgan/io.hpp"
#include "molfedgan/optim.hpp"

namespace molfedgan {

inline constexpr std::string_view kCheckpointHeader = "GGFCKPT v1\n";

struct Checkpoint {
  ParameterList<float> generator;
  ParameterList<float> discriminator;
};

namespace detail {

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef *>(bytes.data()),
                static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

inline void put_u32_le(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
}

inline std::uint32_t get_u32_le(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

template <typename T>
void put_record(std::string &out, const std::string &name, const Tensor<T> &t) {
  if (name.find_first_of("\t\n") != std::string::npos) {
    throw Error("checkpoint: parameter name contains a separator: " + name);
  }
  out += name;
  out += '\t';
  out += std::to_string(t.rank());
  out += '\t';
  for (std::size_t d : t.shape()) {
    out += std::to_string(d);
    out += '\t';
  }
  for (T v : t.values()) put_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

class RecordReader {
 public:
  RecordReader(std::string_view body) : body_(body) { }

  bool done() const { return pos_ == body_.size(); }

  std::string field() {
    const auto tab = body_.find('\t', pos_);
    if (tab == std::string_view::npos) throw CorruptCheckpoint("checkpoint: truncated record");
    std::string s(body_.substr(pos_, tab - pos_));
    pos_ = tab + 1;
    return s;
  }

  std::size_t number() {
    const std::string s = field();
    if (s.empty() || s.size() > 12 || s.find_first_not_of("0123456789") != std::string::npos) {
      throw CorruptCheckpoint("checkpoint: bad number '" + s + "'");
    }
    return static_cast<std::size_t>(std::stoull(s));
  }

  Tensor<float> values(Shape shape) {
    const std::size_t n = shape_size(shape);
    if (n > (body_.size() - pos_) / 4) throw CorruptCheckpoint("checkpoint: truncated values");
    Tensor<float> t(std::move(shape));
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = std::bit_cast<float>(get_u32_le(body_, pos_));
      pos_ += 4;
    }
    return t;
  }

 private:
  std::string_view body_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <typename T>
std::string serialize_checkpoint(const ParameterList<T> &generator,
                                 const ParameterList<T> &discriminator) {
  std::string body;
  for (const auto &p : generator) detail::put_record(body, "generator." + p.name, p.value);
  for (const auto &p : discriminator) detail::put_record(body, "discriminator." + p.name, p.value);
  std::string out(kCheckpointHeader);
  out += body;
  detail::put_u32_le(out, detail::crc32_of(body));
  return out;
}

inline Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kCheckpointHeader.size()) != kCheckpointHeader) {
    throw CorruptCheckpoint("checkpoint: missing GGFCKPT v1 header");
  }
  if (bytes.size() < kCheckpointHeader.size() + 4) {
    throw CorruptCheckpoint("checkpoint: truncated");
  }
  const std::string_view body =
      bytes.substr(kCheckpointHeader.size(), bytes.size() - kCheckpointHeader.size() - 4);
  if (detail::crc32_of(body) != detail::get_u32_le(bytes, bytes.size() - 4)) {
    throw CorruptCheckpoint("checkpoint: CRC mismatch");
  }
  Checkpoint ck;
  detail::RecordReader reader(body);
  while (!reader.done()) {
    const std::string name = reader.field();
    const std::size_t rank = reader.number();
    if (rank > Shape::kMaxRank) throw CorruptCheckpoint("checkpoint: rank too large in " + name);
    Shape shape;
    for (std::size_t d = 0; d < rank; ++d) shape.push_back(reader.number());
    Tensor<float> value = reader.values(shape);
    constexpr std::string_view gp = "generator.", dp = "discriminator.";
    if (name.starts_with(gp)) {
      ck.generator.push_back({name.substr(gp.size()), std::move(value)});
    } else if (name.starts_with(dp)) {
      ck.discriminator.push_back({name.substr(dp.size()), std::move(value)});
    } else {
      throw CorruptCheckpoint("checkpoint: unknown parameter group in " + name);
    }
  }
  return ck;
}

template <typename T>
void save_checkpoint(const std::filesystem::path &path, const Generator<T> &gen,
                     const Discriminator<T> &disc) {
  write_file_atomic(path, serialize_checkpoint(gen.params, disc.params));
}

inline Checkpoint load_checkpoint(const std::filesystem::path &path) {
  return parse_checkpoint(read_file(path));
}

/// Rebuilds both models from a checkpoint; the architecture comes from the
/// stored shapes.
template <typename T>
std::pair<Generator<T>, Discriminator<T>> models_from_checkpoint(const Checkpoint &ck) {
  return {Generator<T>::from_parameters(cast_parameters<T>(ck.generator)),
          Discriminator<T>::from_parameters(cast_parameters<T>(ck.discriminator))};
}

}  // namespace molfedgan

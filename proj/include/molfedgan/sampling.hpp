//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>

#include "molfedgan/autodiff.hpp"
#include "molfedgan/errors.hpp"
#include "molfedgan/tensor.hpp"

namespace molfedgan {

using Rng = std::mt19937_64;

/// Independent stream for (seed, a, b); used to give every client, round and
/// evaluation its own reproducible generator.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t a = 0,
                      std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a),
                    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

template <typename T>
Tensor<T> normal_tensor(Shape shape, Rng &rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor<T> out(std::move(shape));
  for (auto &v : out.values()) v = static_cast<T>(dist(rng));
  return out;
}

/// Glorot/Xavier uniform initialization for a [fan_in, fan_out] weight.
template <typename T>
Tensor<T> glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng &rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor<T> out(Shape{fan_in, fan_out});
  for (auto &v : out.values()) v = static_cast<T>(dist(rng));
  return out;
}

/// Standard Gumbel(0, 1) noise: -log(-log(u)).
template <typename T>
Tensor<T> gumbel_noise(Shape shape, Rng &rng) {
  std::uniform_real_distribution<double> dist(
      std::numeric_limits<double>::min(), 1.0);
  Tensor<T> out(std::move(shape));
  for (auto &v : out.values()) {
    double u = dist(rng);
    if (u >= 1.0) u = std::nextafter(1.0, 0.0);
    v = static_cast<T>(-std::log(-std::log(u)));
  }
  return out;
}

/// Inverted-dropout keep mask: entries are 0 with probability `ratio`,
/// otherwise 1/(1-ratio).
template <typename T>
Tensor<T> dropout_mask(Shape shape, double ratio, Rng &rng) {
  if (ratio < 0.0 || ratio >= 1.0) {
    throw Error("dropout ratio must lie in [0, 1), got "
                + std::to_string(ratio));
  }
  Tensor<T> out(std::move(shape), T(1));
  if (ratio == 0.0) return out;
  std::bernoulli_distribution drop(ratio);
  const T keep = static_cast<T>(1.0 / (1.0 - ratio));
  for (auto &v : out.values()) v = drop(rng) ? T(0) : keep;
  return out;
}

/// One-hot of the row-wise argmax over the last axis (first index on ties).
template <typename T>
Tensor<T> one_hot_argmax(const Tensor<T> &x) {
  const std::size_t cols = x.dim(x.rank() - 1);
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < x.size() / cols; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (x[r * cols + c] > x[r * cols + best]) best = c;
    }
    out[r * cols + best] = T(1);
  }
  return out;
}

/// Gumbel-softmax with caller-supplied noise (same shape as logits).
/// soft = softmax((logits + noise) / temperature). When hard, the forward value
/// is the one-hot argmax of soft while gradients flow through soft.
template <typename T>
ad::Var<T> gumbel_softmax(const ad::Var<T> &logits, const Tensor<T> &noise,
                          double temperature, bool hard) {
  if (!(temperature > 0.0)) {
    throw NonPositiveTemperature("gumbel-softmax temperature must be > 0, got "
                                 + std::to_string(temperature));
  }
  require_same_shape(logits.value(), noise, "gumbel_softmax noise");
  auto &tape = logits.tape();
  auto soft = ad::softmax(ad::scale(ad::add(logits, tape.constant(noise)),
                                    static_cast<T>(1.0 / temperature)));
  if (!hard) return soft;
  auto one_hot = tape.constant(one_hot_argmax(soft.value()));
  return ad::add(one_hot, ad::sub(soft, ad::detach(soft)));
}

template <typename T>
ad::Var<T> gumbel_softmax_sample(const ad::Var<T> &logits, double temperature,
                                 bool hard, Rng &rng) {
  if (!(temperature > 0.0)) {
    throw NonPositiveTemperature("gumbel-softmax temperature must be > 0, got "
                                 + std::to_string(temperature));
  }
  return gumbel_softmax(logits, gumbel_noise<T>(logits.shape(), rng),
                        temperature, hard);
}

/// Draws one category per row (last axis) of a probability tensor and
/// returns the one-hot encoding.
template <typename T>
Tensor<T> categorical_sample(const Tensor<T> &probabilities, Rng &rng) {
  if (probabilities.rank() == 0) {
    throw NotADistribution("categorical_sample of a rank-0 tensor");
  }
  const std::size_t cols = probabilities.dim(probabilities.rank() - 1);
  const std::size_t rows = cols == 0 ? 0 : probabilities.size() / cols;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tensor<T> out(probabilities.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = static_cast<double>(probabilities[r * cols + c]);
      if (p < 0.0 || !std::isfinite(p)) {
        throw NotADistribution("row " + std::to_string(r)
                               + " has a negative or non-finite entry");
      }
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-5) {
      throw NotADistribution("row " + std::to_string(r) + " sums to "
                             + std::to_string(total));
    }
    const double u = unit(rng) * total;
    double acc = 0.0;
    std::size_t pick = cols - 1;
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = static_cast<double>(probabilities[r * cols + c]);
      acc += p;
      if (u < acc && p > 0.0) {
        pick = c;
        break;
      }
    }
    // Never land on a zero-probability trailing entry through rounding.
    while (pick > 0 && probabilities[r * cols + pick] == T(0)) --pick;
    out[r * cols + pick] = T(1);
  }
  return out;
}

}  // namespace molfedgan

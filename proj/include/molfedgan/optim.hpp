//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "molfedgan/errors.hpp"
#include "molfedgan/tensor.hpp"

namespace molfedgan {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;

  friend bool operator==(const Parameter &, const Parameter &) = default;
};

template <typename T>
using ParameterList = std::vector<Parameter<T>>;

template <typename U, typename T>
ParameterList<U> cast_parameters(const ParameterList<T> &params) {
  ParameterList<U> out;
  out.reserve(params.size());
  for (const auto &p : params) out.push_back({p.name, p.value.template cast<U>()});
  return out;
}

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  // The learning rate is divided by lr_decay_factor once every
  // lr_decay_interval completed epochs; an interval of 0 disables decay.
  std::size_t lr_decay_interval = 1000;
  double lr_decay_factor = 100.0;
};

/// Adam with bias correction. Moment buffers are kept in double precision.
template <typename T>
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamConfig config) : config_(config) { }

  const AdamConfig &config() const noexcept { return config_; }
  std::size_t steps() const noexcept { return steps_; }
  std::size_t epochs() const noexcept { return epochs_; }

  double current_lr() const {
    if (config_.lr_decay_interval == 0) return config_.lr;
    const auto decays = epochs_ / config_.lr_decay_interval;
    return config_.lr / std::pow(config_.lr_decay_factor,
                                 static_cast<double>(decays));
  }

  void end_epoch() noexcept { ++epochs_; }

  /// Applies one update in place.
  void step(ParameterList<T> &params, std::span<const Tensor<T>> grads) {
    if (params.size() != grads.size()) {
      throw ShapeMismatch("adam_step: " + std::to_string(params.size())
                          + " parameters but " + std::to_string(grads.size())
                          + " gradients");
    }
    if (m_.empty()) {
      for (const auto &p : params) {
        m_.emplace_back(p.value.size(), 0.0);
        v_.emplace_back(p.value.size(), 0.0);
      }
    }
    if (m_.size() != params.size()) {
      throw ShapeMismatch("adam_step: optimizer state tracks "
                          + std::to_string(m_.size()) + " parameters, given "
                          + std::to_string(params.size()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      require_same_shape(params[k].value, grads[k], "adam_step");
      if (m_[k].size() != grads[k].size()) {
        throw ShapeMismatch("adam_step: moment buffer size mismatch for "
                            + params[k].name);
      }
    }

    ++steps_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    const double lr = current_lr();
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto values = params[k].value.values();
      const auto g = grads[k].values();
      auto &m = m_[k];
      auto &v = v_[k];
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = b1 * m[i] + (1.0 - b1) * gi;
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        values[i] = static_cast<T>(static_cast<double>(values[i])
                                   - lr * mhat / (std::sqrt(vhat) + config_.eps));
      }
    }
  }

 private:
  AdamConfig config_;
  std::size_t steps_ = 0;
  std::size_t epochs_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace molfedgan

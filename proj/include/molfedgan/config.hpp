//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

// Experiment configuration: a flat `key = value` text format with `#`
// comments. `config_version = 1` is required and unknown keys are errors.
// A `preset` line (esol, qm8, qm9) loads dataset defaults before the other
// keys are applied, wherever it appears in the file.

#pragma once

#include <charconv>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "molfedgan/errors.hpp"
#include "molfedgan/federation.hpp"
#include "molfedgan/gan.hpp"
#include "molfedgan/io.hpp"

namespace molfedgan {

inline constexpr int kConfigVersion = 1;

enum class SweepAxis { None, DiscriminatorDims, Clients, Dropout };

struct ExperimentConfig {
  std::string preset;
  std::string dataset_name = "dataset";
  std::filesystem::path dataset_path;
  std::string dataset_column;  // empty: auto-detect
  std::filesystem::path output_dir;  // empty: derived from the output root
  std::size_t checkpoint_interval = 0;  // 0: final checkpoint only
  FederationConfig fed;

  std::vector<DiscriminatorDims> sweep_discriminator_dims;
  std::vector<std::size_t> sweep_clients;
  std::vector<double> sweep_dropout;
};

// ---------------------------------------------------------------------------
// Value codecs
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto at = s.find(sep, start);
    out.push_back(trim(s.substr(start, at == std::string_view::npos ? s.npos : at - start)));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return out;
}

inline double parse_double(const std::string &s) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("expected a number, got '" + s + "'");
  }
  return v;
}

inline std::uint64_t parse_uint(const std::string &s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

inline bool parse_bool(const std::string &s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T, typename F>
std::string join(const std::vector<T> &v, std::string_view sep, F &&fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += fmt(v[i]);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

inline void apply_preset(ExperimentConfig &cfg, std::string_view name) {
  auto &f = cfg.fed;
  auto &m = f.model;
  f.batch_size = 16;
  f.epochs_per_round = 1000;
  f.train.penalty.gamma = 10.0;
  f.adam = AdamConfig{};
  m.noise_dim = kDefaultNoiseDim;
  if (name == "esol") {
    cfg.dataset_name = "esol";
    m.generator_dims = {32, 128};
    m.discriminator_dims = {{32, 64}, 32, 64};
    f.resample_epochs = 1000;
  } else if (name == "qm8") {
    cfg.dataset_name = "qm8";
    m.generator_dims = {32, 64, 128};
    m.discriminator_dims = {{64, 128}, 64, 128};
    f.resample_epochs = 1000;
  } else if (name == "qm9") {
    cfg.dataset_name = "qm9";
    m.generator_dims = {64, 128, 256};
    m.discriminator_dims = {{256, 512}, 256, 512};
    f.resample_epochs = 100;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "' (esol, qm8, qm9)");
  }
  cfg.preset = std::string(name);
}

// ---------------------------------------------------------------------------
// Key table
// ---------------------------------------------------------------------------

namespace detail {

struct ConfigKey {
  std::string name;
  std::function<void(ExperimentConfig &, const std::string &)> set;
  std::function<std::string(const ExperimentConfig &)> get;
};

inline std::size_t positive(std::uint64_t v, const char *what) {
  if (v == 0) throw ConfigError(std::string(what) + " must be >= 1");
  return static_cast<std::size_t>(v);
}

inline double dropout_value(const std::string &s) {
  const double d = parse_double(s);
  if (!(d >= 0.0 && d < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  return d;
}

inline const std::vector<ConfigKey> &config_keys() {
  using C = ExperimentConfig;
  using S = const std::string &;
  auto size_key = [](std::string name, std::size_t FederationConfig::*field, bool pos) {
    return ConfigKey{
        name,
        [field, pos, name](C &c, S v) {
          const auto n = parse_uint(v);
          c.fed.*field = pos ? positive(n, name.c_str()) : static_cast<std::size_t>(n);
        },
        [field](const C &c) { return std::to_string(c.fed.*field); }};
  };
  static const std::vector<ConfigKey> keys = {
      {"preset", [](C &, S) {}, [](const C &c) { return c.preset; }},
      {"dataset.name", [](C &c, S v) { c.dataset_name = v; },
       [](const C &c) { return c.dataset_name; }},
      {"dataset.path", [](C &c, S v) { c.dataset_path = v; },
       [](const C &c) { return c.dataset_path.string(); }},
      {"dataset.column", [](C &c, S v) { c.dataset_column = v; },
       [](const C &c) { return c.dataset_column; }},
      {"n_max",
       [](C &c, S v) {
         const auto n = parse_uint(v);
         if (n == 0 || n > 32) throw ConfigError("n_max must lie in [1, 32]");
         c.fed.model.n_max = static_cast<std::size_t>(n);
       },
       [](const C &c) { return std::to_string(c.fed.model.n_max); }},
      {"generator_dims",
       [](C &c, S v) {
         auto d = parse_dims_list(v);
         if (d.empty()) throw ConfigError("generator_dims must not be empty");
         c.fed.model.generator_dims = d;
       },
       [](const C &c) { return format_dims_list(c.fed.model.generator_dims); }},
      {"discriminator_dims",
       [](C &c, S v) { c.fed.model.discriminator_dims = parse_discriminator_dims(v); },
       [](const C &c) { return format_discriminator_dims(c.fed.model.discriminator_dims); }},
      {"noise_dim",
       [](C &c, S v) { c.fed.model.noise_dim = positive(parse_uint(v), "noise_dim"); },
       [](const C &c) { return std::to_string(c.fed.model.noise_dim); }},
      {"dropout_gen", [](C &c, S v) { c.fed.model.dropout_gen = dropout_value(v); },
       [](const C &c) { return format_double(c.fed.model.dropout_gen); }},
      {"dropout_disc", [](C &c, S v) { c.fed.model.dropout_disc = dropout_value(v); },
       [](const C &c) { return format_double(c.fed.model.dropout_disc); }},
      size_key("num_clients", &FederationConfig::num_clients, true),
      {"partition",
       [](C &c, S v) {
         if (v == "iid") c.fed.partition = PartitionMode::Iid;
         else if (v == "noniid") c.fed.partition = PartitionMode::NonIid;
         else throw ConfigError("partition must be iid or noniid");
       },
       [](const C &c) { return std::string(c.fed.partition == PartitionMode::Iid ? "iid" : "noniid"); }},
      {"alpha",
       [](C &c, S v) {
         const double a = parse_double(v);
         if (!(a > 0.0)) throw ConfigError("alpha must be > 0");
         c.fed.alpha = a;
       },
       [](const C &c) { return format_double(c.fed.alpha); }},
      {"weighting",
       [](C &c, S v) {
         if (v == "samples") c.fed.weighting = Weighting::SampleCount;
         else if (v == "uniform") c.fed.weighting = Weighting::Uniform;
         else throw ConfigError("weighting must be samples or uniform");
       },
       [](const C &c) {
         return std::string(c.fed.weighting == Weighting::Uniform ? "uniform" : "samples");
       }},
      size_key("epochs_per_round", &FederationConfig::epochs_per_round, true),
      size_key("batch_size", &FederationConfig::batch_size, true),
      size_key("rounds", &FederationConfig::rounds, false),
      size_key("noise_resample_epochs", &FederationConfig::resample_epochs, false),
      {"split",
       [](C &c, S v) {
         const auto parts = split_on(v, ',');
         if (parts.size() != 3) throw ConfigError("split needs three ratios");
         std::array<double, 3> r{};
         for (int i = 0; i < 3; ++i) {
           r[i] = parse_double(parts[i]);
           if (!(r[i] >= 0.0)) throw ConfigError("split ratios must be >= 0");
         }
         if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
         c.fed.split = r;
       },
       [](const C &c) {
         return format_double(c.fed.split[0]) + "," + format_double(c.fed.split[1]) + ","
                + format_double(c.fed.split[2]);
       }},
      {"gamma",
       [](C &c, S v) {
         const double g = parse_double(v);
         if (!(g >= 0.0)) throw ConfigError("gamma must be >= 0");
         c.fed.train.penalty.gamma = g;
       },
       [](const C &c) { return format_double(c.fed.train.penalty.gamma); }},
      {"epsilon",
       [](C &c, S v) {
         if (v == "uniform") {
           c.fed.train.penalty.fixed_epsilon.reset();
           return;
         }
         const double e = parse_double(v);
         if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("epsilon must be uniform or lie in [0, 1]");
         c.fed.train.penalty.fixed_epsilon = e;
       },
       [](const C &c) {
         const auto &e = c.fed.train.penalty.fixed_epsilon;
         return e ? format_double(*e) : std::string("uniform");
       }},
      {"loss_form",
       [](C &c, S v) {
         if (v == "wgan") c.fed.train.loss_form = LossForm::Wgan;
         else if (v == "log") c.fed.train.loss_form = LossForm::Log;
         else throw ConfigError("loss_form must be wgan or log");
       },
       [](const C &c) { return std::string(c.fed.train.loss_form == LossForm::Wgan ? "wgan" : "log"); }},
      {"train_mode",
       [](C &c, S v) {
         if (v == "hard") c.fed.train.train_mode = OutputMode::Hard;
         else if (v == "soft") c.fed.train.train_mode = OutputMode::Soft;
         else throw ConfigError("train_mode must be hard or soft");
       },
       [](const C &c) {
         return std::string(c.fed.train.train_mode == OutputMode::Hard ? "hard" : "soft");
       }},
      {"temperature",
       [](C &c, S v) {
         const double t = parse_double(v);
         if (!(t > 0.0)) throw ConfigError("temperature must be > 0");
         c.fed.train.temperature = t;
       },
       [](const C &c) { return format_double(c.fed.train.temperature); }},
      {"lr",
       [](C &c, S v) {
         const double x = parse_double(v);
         if (!(x > 0.0)) throw ConfigError("lr must be > 0");
         c.fed.adam.lr = x;
       },
       [](const C &c) { return format_double(c.fed.adam.lr); }},
      {"beta1",
       [](C &c, S v) {
         const double x = parse_double(v);
         if (!(x >= 0.0 && x < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
         c.fed.adam.beta1 = x;
       },
       [](const C &c) { return format_double(c.fed.adam.beta1); }},
      {"beta2",
       [](C &c, S v) {
         const double x = parse_double(v);
         if (!(x >= 0.0 && x < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
         c.fed.adam.beta2 = x;
       },
       [](const C &c) { return format_double(c.fed.adam.beta2); }},
      {"lr_decay_interval",
       [](C &c, S v) { c.fed.adam.lr_decay_interval = static_cast<std::size_t>(parse_uint(v)); },
       [](const C &c) { return std::to_string(c.fed.adam.lr_decay_interval); }},
      {"lr_decay_factor",
       [](C &c, S v) {
         const double x = parse_double(v);
         if (!(x >= 1.0)) throw ConfigError("lr_decay_factor must be >= 1");
         c.fed.adam.lr_decay_factor = x;
       },
       [](const C &c) { return format_double(c.fed.adam.lr_decay_factor); }},
      {"seed", [](C &c, S v) { c.fed.seed = parse_uint(v); },
       [](const C &c) { return std::to_string(c.fed.seed); }},
      {"deterministic", [](C &c, S v) { c.fed.deterministic = parse_bool(v); },
       [](const C &c) { return std::string(c.fed.deterministic ? "true" : "false"); }},
      size_key("eval_interval", &FederationConfig::eval_interval, false),
      size_key("eval_samples", &FederationConfig::eval_samples, false),
      {"snn_sample_size",
       [](C &c, S v) {
         c.fed.metrics.snn_sample_size = positive(parse_uint(v), "snn_sample_size");
       },
       [](const C &c) { return std::to_string(c.fed.metrics.snn_sample_size); }},
      {"fingerprint_bits",
       [](C &c, S v) {
         c.fed.metrics.fingerprint_width = positive(parse_uint(v), "fingerprint_bits");
       },
       [](const C &c) { return std::to_string(c.fed.metrics.fingerprint_width); }},
      {"fingerprint_radius",
       [](C &c, S v) { c.fed.metrics.fingerprint_radius = static_cast<std::size_t>(parse_uint(v)); },
       [](const C &c) { return std::to_string(c.fed.metrics.fingerprint_radius); }},
      {"logp_min", [](C &c, S v) { c.fed.metrics.logp_range.low = parse_double(v); },
       [](const C &c) { return format_double(c.fed.metrics.logp_range.low); }},
      {"logp_max", [](C &c, S v) { c.fed.metrics.logp_range.high = parse_double(v); },
       [](const C &c) { return format_double(c.fed.metrics.logp_range.high); }},
      size_key("plateau_window", &FederationConfig::plateau_window, false),
      {"plateau_delta",
       [](C &c, S v) {
         const double x = parse_double(v);
         if (!(x > 0.0)) throw ConfigError("plateau_delta must be > 0");
         c.fed.plateau_delta = x;
       },
       [](const C &c) { return format_double(c.fed.plateau_delta); }},
      {"checkpoint_interval",
       [](C &c, S v) { c.checkpoint_interval = static_cast<std::size_t>(parse_uint(v)); },
       [](const C &c) { return std::to_string(c.checkpoint_interval); }},
      {"output_dir", [](C &c, S v) { c.output_dir = v; },
       [](const C &c) { return c.output_dir.string(); }},
      {"sweep.discriminator_dims",
       [](C &c, S v) {
         c.sweep_discriminator_dims.clear();
         for (const auto &p : split_on(v, ';')) {
           c.sweep_discriminator_dims.push_back(parse_discriminator_dims(p));
         }
       },
       [](const C &c) {
         return join(c.sweep_discriminator_dims, "; ",
                     [](const DiscriminatorDims &d) { return format_discriminator_dims(d); });
       }},
      {"sweep.clients",
       [](C &c, S v) {
         c.sweep_clients.clear();
         for (const auto &p : split_on(v, ',')) {
           c.sweep_clients.push_back(positive(parse_uint(p), "sweep.clients"));
         }
       },
       [](const C &c) {
         return join(c.sweep_clients, ",", [](std::size_t k) { return std::to_string(k); });
       }},
      {"sweep.dropout",
       [](C &c, S v) {
         c.sweep_dropout.clear();
         for (const auto &p : split_on(v, ',')) c.sweep_dropout.push_back(dropout_value(p));
       },
       [](const C &c) { return join(c.sweep_dropout, ",", format_double); }},
  };
  return keys;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parsing and serialization
// ---------------------------------------------------------------------------

inline ExperimentConfig parse_config(std::string_view text) {
  struct Entry {
    std::size_t line;
    std::string key, value;
  };
  std::vector<Entry> entries;
  std::istringstream in{std::string(text)};
  std::string raw;
  for (std::size_t line = 1; std::getline(in, raw); ++line) {
    const auto hash = raw.find('#');
    const std::string body = detail::trim(std::string_view(raw).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line) + ": expected 'key = value'");
    }
    entries.push_back({line, detail::trim(std::string_view(body).substr(0, eq)),
                       detail::trim(std::string_view(body).substr(eq + 1))});
  }

  ExperimentConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::optional<int> version;
  for (const auto &e : entries) {
    if (!seen.emplace(e.key, e.line).second) {
      throw ConfigError("line " + std::to_string(e.line) + ": duplicate key '" + e.key + "'");
    }
    if (e.key == "preset") apply_preset(cfg, e.value);
  }
  const auto &keys = detail::config_keys();
  for (const auto &e : entries) {
    try {
      if (e.key == "config_version") {
        version = static_cast<int>(detail::parse_uint(e.value));
        continue;
      }
      const auto it = std::find_if(keys.begin(), keys.end(),
                                   [&](const detail::ConfigKey &k) { return k.name == e.key; });
      if (it == keys.end()) throw ConfigError("unknown key '" + e.key + "'");
      it->set(cfg, e.value);
    } catch (const ConfigError &err) {
      throw ConfigError("line " + std::to_string(e.line) + ": " + err.what());
    }
  }
  if (!version) throw ConfigError("missing config_version");
  if (*version != kConfigVersion) {
    throw ConfigError("unsupported config_version " + std::to_string(*version));
  }
  if (cfg.fed.metrics.logp_range.high <= cfg.fed.metrics.logp_range.low) {
    throw ConfigError("logp_max must exceed logp_min");
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path &path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const FileNotFound &) {
    throw ConfigError("cannot read config file " + path.string());
  }
  return parse_config(text);
}

/// Every key with its effective value, in a fixed order. Parsing the result
/// reproduces the same configuration.
inline std::string serialize_config(const ExperimentConfig &cfg) {
  std::string out = "config_version = " + std::to_string(kConfigVersion) + "\n";
  for (const auto &k : detail::config_keys()) {
    if (k.name == "preset") continue;  // values below already include it
    const std::string v = k.get(cfg);
    if (v.empty()) continue;
    out += k.name + " = " + v + "\n";
  }
  return out;
}

/// The single axis with at least two values.
inline SweepAxis sweep_axis(const ExperimentConfig &cfg) {
  std::vector<SweepAxis> axes;
  if (!cfg.sweep_discriminator_dims.empty()) axes.push_back(SweepAxis::DiscriminatorDims);
  if (!cfg.sweep_clients.empty()) axes.push_back(SweepAxis::Clients);
  if (!cfg.sweep_dropout.empty()) axes.push_back(SweepAxis::Dropout);
  if (axes.size() != 1) {
    throw MultipleSweepAxes("a sweep needs exactly one sweep.* axis, found "
                            + std::to_string(axes.size()));
  }
  const std::size_t n = axes[0] == SweepAxis::DiscriminatorDims ? cfg.sweep_discriminator_dims.size()
                        : axes[0] == SweepAxis::Clients         ? cfg.sweep_clients.size()
                                                                : cfg.sweep_dropout.size();
  if (n < 2) throw MultipleSweepAxes("the sweep axis needs at least two values");
  return axes[0];
}

/// One configuration per sweep value, sweep keys cleared.
inline std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig &cfg) {
  const SweepAxis axis = sweep_axis(cfg);
  ExperimentConfig base = cfg;
  base.sweep_discriminator_dims.clear();
  base.sweep_clients.clear();
  base.sweep_dropout.clear();
  std::vector<ExperimentConfig> out;
  if (axis == SweepAxis::DiscriminatorDims) {
    for (const auto &d : cfg.sweep_discriminator_dims) {
      out.push_back(base);
      out.back().fed.model.discriminator_dims = d;
    }
  } else if (axis == SweepAxis::Clients) {
    for (auto k : cfg.sweep_clients) {
      out.push_back(base);
      out.back().fed.num_clients = k;
    }
  } else {
    for (double p : cfg.sweep_dropout) {
      out.push_back(base);
      out.back().fed.model.dropout_gen = p;
      out.back().fed.model.dropout_disc = p;
    }
  }
  return out;
}

}  // namespace molfedgan

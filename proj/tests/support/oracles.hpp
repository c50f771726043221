//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

// Independent reference implementations used by the unit and acceptance
// tests: finite-difference gradients, loop-based critic, random graphs.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "molfedgan/gan.hpp"
#include "molfedgan/molgraph.hpp"
#include "molfedgan/sampling.hpp"

namespace molfedgan::testing {

// ---------------------------------------------------------------------------
// Random molecules
// ---------------------------------------------------------------------------

/// Random connected graph with 1..n_max atoms built by attaching each new atom
/// to an earlier one, plus a few extra ring bonds. Not necessarily valid.
inline MolecularGraph random_graph(std::size_t n_max, Rng &rng, bool allow_pad_gaps = true) {
  std::uniform_int_distribution<std::size_t> count(1, n_max);
  std::uniform_int_distribution<int> element(0, static_cast<int>(kNumAtomTypes) - 2);
  std::uniform_int_distribution<int> bond(1, static_cast<int>(kNumBondTypes) - 1);
  const std::size_t n = count(rng);
  std::vector<std::size_t> slots(n_max);
  std::iota(slots.begin(), slots.end(), 0);
  if (allow_pad_gaps) std::shuffle(slots.begin(), slots.end(), rng);
  MolecularGraph g(n_max);
  for (std::size_t i = 0; i < n; ++i) g.set_atom(slots[i], static_cast<AtomType>(element(rng)));
  for (std::size_t i = 1; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> parent(0, i - 1);
    g.set_bond(slots[i], slots[parent(rng)], static_cast<BondType>(bond(rng)));
  }
  std::bernoulli_distribution extra(0.15);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      if (g.bond(slots[i], slots[j]) == BondType::Zero && extra(rng)) {
        g.set_bond(slots[i], slots[j], static_cast<BondType>(bond(rng)));
      }
    }
  }
  return g;
}

/// Random chemically valid molecule: a single-bonded carbon skeleton with a
/// few hetero atoms and unsaturations, retried until is_valid accepts it.
inline MolecularGraph random_valid_molecule(std::size_t n_max, Rng &rng) {
  const AtomType heavy[] = {AtomType::C, AtomType::C, AtomType::C, AtomType::N,
                            AtomType::O, AtomType::F, AtomType::S, AtomType::Cl,
                            AtomType::P, AtomType::Br, AtomType::I};
  std::uniform_int_distribution<std::size_t> pick(0, std::size(heavy) - 1);
  std::uniform_int_distribution<std::size_t> count(1, n_max);
  std::bernoulli_distribution coin(0.3);
  for (;;) {
    const std::size_t n = count(rng);
    MolecularGraph g(n_max);
    for (std::size_t i = 0; i < n; ++i) g.set_atom(i, heavy[pick(rng)]);
    for (std::size_t i = 1; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> parent(0, i - 1);
      const BondType b = coin(rng) ? BondType::Double : BondType::Single;
      g.set_bond(i, parent(rng), b);
    }
    if (n >= 5 && coin(rng)) {
      for (std::size_t i = 0; i + 2 < n; ++i) {
        if (g.bond(0, n - 1 - i) == BondType::Zero && n - 1 - i > 1) {
          g.set_bond(0, n - 1 - i, BondType::Single);
          break;
        }
      }
    }
    if (is_valid(g)) return g;
  }
}

/// Copy of g with slot i moved to slot perm[i].
inline MolecularGraph permute_slots(const MolecularGraph &g, const std::vector<std::size_t> &perm) {
  MolecularGraph out(g.n_max());
  for (std::size_t i = 0; i < g.n_max(); ++i) out.set_atom(perm[i], g.atom(i));
  for (std::size_t i = 0; i < g.n_max(); ++i) {
    for (std::size_t j = i + 1; j < g.n_max(); ++j) {
      if (g.bond(i, j) != BondType::Zero) out.set_bond(perm[i], perm[j], g.bond(i, j));
    }
  }
  return out;
}

inline MolecularGraph shuffle_slots(const MolecularGraph &g, Rng &rng) {
  std::vector<std::size_t> perm(g.n_max());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return permute_slots(g, perm);
}

namespace naive {

/// Exhaustive search for a type-preserving bijection between the non-PAD
/// atoms of a and b.
inline bool isomorphic(const MolecularGraph &a, const MolecularGraph &b) {
  const MolecularGraph x = strip_padding(a);
  const MolecularGraph y = strip_padding(b);
  const std::size_t n = x.n_max();
  if (y.n_max() != n) return false;
  std::vector<std::size_t> map(n);
  std::vector<bool> used(n, false);
  std::function<bool(std::size_t)> extend = [&](std::size_t i) {
    if (i == n) return true;
    for (std::size_t j = 0; j < n; ++j) {
      if (used[j] || x.atom(i) != y.atom(j)) continue;
      bool ok = true;
      for (std::size_t k = 0; k < i && ok; ++k) ok = x.bond(i, k) == y.bond(j, map[k]);
      if (!ok) continue;
      used[j] = true;
      map[i] = j;
      if (extend(i + 1)) return true;
      used[j] = false;
    }
    return false;
  };
  return extend(0);
}

}  // namespace naive

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Central difference with one Richardson extrapolation step:
/// (4 D(h/2) - D(h)) / 3 where D(h) = (f(x+h) - f(x-h)) / (2h).
inline double richardson_derivative(const std::function<double(double)> &f, double x,
                                    double h) {
  const double d1 = (f(x + h) - f(x - h)) / (2 * h);
  const double d2 = (f(x + h / 2) - f(x - h / 2)) / h;
  return (4 * d2 - d1) / 3;
}

/// Relative error with a floor on the denominator so that near-zero
/// gradients are compared on an absolute scale.
inline double relative_error(double analytic, double reference, double floor = 1e-3) {
  const double denom = std::max({std::abs(analytic), std::abs(reference), floor});
  return std::abs(analytic - reference) / denom;
}

/// Finite-difference gradient of f with respect to every entry of `params`.
inline std::vector<std::vector<double>> fd_gradients(
    ParameterList<double> params,
    const std::function<double(const ParameterList<double> &)> &f, double h = 1e-3) {
  std::vector<std::vector<double>> out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    std::vector<double> g(params[k].value.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x0 = params[k].value[i];
      g[i] = richardson_derivative(
          [&](double x) {
            params[k].value[i] = x;
            return f(params);
          },
          x0, h);
      params[k].value[i] = x0;
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// Largest entry-wise relative error. The denominator floor is
/// `floor * max|reference|`, so entries far below the gradient's scale are
/// judged against that scale rather than against themselves.
template <typename T>
double max_relative_error(const std::vector<Tensor<T>> &analytic,
                          const std::vector<std::vector<double>> &reference,
                          double floor = 1e-3) {
  double scale = 0.0;
  for (const auto &r : reference) {
    for (double v : r) scale = std::max(scale, std::abs(v));
  }
  const double abs_floor = std::max(floor * scale, 1e-12);
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    for (std::size_t i = 0; i < analytic[k].size(); ++i) {
      worst = std::max(worst, relative_error(static_cast<double>(analytic[k][i]),
                                             reference[k][i], abs_floor));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Loss fixtures shared by the gradient checks
// ---------------------------------------------------------------------------

template <typename T>
struct LossFixture {
  Generator<T> gen;
  Discriminator<T> disc;
  GraphBatch<T> real;
  GeneratorNoise<T> noise;
  GradientPenaltyConfig penalty;
  std::uint64_t seed = 0;

  template <typename U>
  LossFixture<U> cast() const {
    LossFixture<U> f;
    f.gen.hidden_dims = gen.hidden_dims;
    f.gen.noise_dim = gen.noise_dim;
    f.gen.n_max = gen.n_max;
    f.gen.dropout = gen.dropout;
    f.gen.params = cast_parameters<U>(gen.params);
    f.disc.dims = disc.dims;
    f.disc.dropout = disc.dropout;
    f.disc.params = cast_parameters<U>(disc.params);
    f.real = {real.V.template cast<U>(), real.A.template cast<U>()};
    f.noise = {noise.z.template cast<U>(), noise.node_gumbel.template cast<U>(),
               noise.edge_gumbel.template cast<U>(), noise.dropout_mask.template cast<U>()};
    f.penalty = penalty;
    f.seed = seed;
    return f;
  }
};

/// Small models with dropout enabled; masks and epsilon are re-drawn from
/// the same seed at every evaluation so the loss is a smooth function.
inline LossFixture<double> make_loss_fixture(std::uint64_t seed, std::size_t n_max = 4,
                                             std::size_t batch = 2) {
  Rng rng = derive_rng(seed, 101);
  LossFixture<double> f;
  f.seed = seed;
  f.gen = Generator<double>::init({6, 8}, 4, n_max, 0.25, rng);
  f.disc = Discriminator<double>::init({{5, 4}, 4, {3}}, 0.25, rng);
  std::vector<MolecularGraph> graphs;
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < batch; ++b) {
    graphs.push_back(random_graph(n_max, rng));
    idx.push_back(b);
  }
  f.real = graphs_to_tensors<double>(graphs, idx, n_max);
  f.noise = draw_generator_noise(f.gen, batch, OutputMode::Soft, true, rng);
  // Perturb biases away from zero so that every parameter is exercised.
  std::normal_distribution<double> small(0.0, 0.1);
  for (auto *params : {&f.gen.params, &f.disc.params}) {
    for (auto &p : *params) {
      if (p.name.ends_with(".bias")) {
        for (auto &v : p.value.values()) v = small(rng);
      }
    }
  }
  return f;
}

/// Critic loss with gradient penalty; the generated batch is a constant.
template <typename T>
T discriminator_objective(const LossFixture<T> &f, const ParameterList<T> &disc_params,
                          std::vector<Tensor<T>> *grads = nullptr) {
  ad::Tape<T> tape;
  Rng rng = derive_rng(f.seed, 202);
  GraphBatch<T> fake;
  {
    typename ad::Tape<T>::NoGradGuard guard(tape);
    const auto gvars = bind_parameters(tape, f.gen.params, false);
    const auto out = generate(f.gen, gvars, f.noise, OutputMode::Soft);
    fake = {out.V.value(), out.A.value()};
  }
  Discriminator<T> disc = f.disc;
  disc.params = disc_params;
  const auto dvars = bind_parameters(tape, disc.params, true);
  auto d_gen = discriminate(disc, dvars, tape.constant(fake.V), tape.constant(fake.A), &rng);
  auto d_exist = discriminate(disc, dvars, tape.constant(f.real.V), tape.constant(f.real.A), &rng);
  auto pen = gradient_penalty(
      tape,
      [&](const ad::Var<T> &v, const ad::Var<T> &a) {
        return discriminate(disc, dvars, v, a, &rng);
      },
      f.real.V, f.real.A, fake.V, fake.A, f.penalty, rng);
  auto loss = discriminator_loss(d_gen, d_exist, pen, f.penalty.gamma);
  if (grads) *grads = tape.gradients(loss, std::span<const ad::Var<T>>(dvars));
  return loss.value().item();
}

/// Generator loss in soft mode (the straight-through estimator of hard mode
/// is not the derivative of its own forward value).
template <typename T>
T generator_objective(const LossFixture<T> &f, const ParameterList<T> &gen_params,
                      std::vector<Tensor<T>> *grads = nullptr) {
  ad::Tape<T> tape;
  Rng rng = derive_rng(f.seed, 303);
  Generator<T> gen = f.gen;
  gen.params = gen_params;
  const auto gvars = bind_parameters(tape, gen.params, true);
  const auto dvars = bind_parameters(tape, f.disc.params, false);
  const auto out = generate(gen, gvars, f.noise, OutputMode::Soft);
  auto loss = generator_loss(discriminate(f.disc, dvars, out.V, out.A, &rng));
  if (grads) *grads = tape.gradients(loss, std::span<const ad::Var<T>>(gvars));
  return loss.value().item();
}

struct GradCheckResult {
  double disc_f32 = 0, disc_f64 = 0, gen_f32 = 0, gen_f64 = 0;
};

inline GradCheckResult check_loss_gradients(std::uint64_t seed) {
  const auto f64 = make_loss_fixture(seed);
  const auto f32 = f64.cast<float>();
  GradCheckResult r;

  const auto disc_fd = fd_gradients(f64.disc.params, [&](const ParameterList<double> &p) {
    return discriminator_objective(f64, p);
  });
  std::vector<Tensor<double>> g64;
  std::vector<Tensor<float>> g32;
  discriminator_objective(f64, f64.disc.params, &g64);
  discriminator_objective(f32, f32.disc.params, &g32);
  r.disc_f64 = max_relative_error(g64, disc_fd);
  r.disc_f32 = max_relative_error(g32, disc_fd);

  const auto gen_fd = fd_gradients(f64.gen.params, [&](const ParameterList<double> &p) {
    return generator_objective(f64, p);
  });
  generator_objective(f64, f64.gen.params, &g64);
  generator_objective(f32, f32.gen.params, &g32);
  r.gen_f64 = max_relative_error(g64, gen_fd);
  r.gen_f32 = max_relative_error(g32, gen_fd);
  return r;
}

// ---------------------------------------------------------------------------
// Random critic inputs
// ---------------------------------------------------------------------------

/// Discriminator with every parameter drawn from N(0, 0.3).
inline Discriminator<double> random_discriminator(const DiscriminatorDims &dims, Rng &rng) {
  auto d = Discriminator<double>::init(dims, 0.0, rng);
  std::normal_distribution<double> dist(0.0, 0.3);
  for (auto &p : d.params) {
    for (auto &v : p.value.values()) v = dist(rng);
  }
  return d;
}

/// Random soft V/A: rows are probability vectors and A is symmetric.
inline GraphBatch<double> random_soft_batch(std::size_t b, std::size_t n, Rng &rng) {
  GraphBatch<double> out{Tensor<double>(Shape{b, n, kNumAtomTypes}),
                         Tensor<double>(Shape{b, n, n, kNumBondTypes})};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto fill_row = [&](Tensor<double> &t, std::size_t offset, std::size_t len) {
    double s = 0.0;
    for (std::size_t c = 0; c < len; ++c) s += (t.values()[offset + c] = u(rng));
    for (std::size_t c = 0; c < len; ++c) t.values()[offset + c] /= s;
  };
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      fill_row(out.V, (s * n + i) * kNumAtomTypes, kNumAtomTypes);
      for (std::size_t j = i; j < n; ++j) {
        const std::size_t ij = ((s * n + i) * n + j) * kNumBondTypes;
        fill_row(out.A, ij, kNumBondTypes);
        const std::size_t ji = ((s * n + j) * n + i) * kNumBondTypes;
        for (std::size_t k = 0; k < kNumBondTypes; ++k) out.A.values()[ji + k] = out.A[ij + k];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loop-based critic
// ---------------------------------------------------------------------------

namespace naive {

using Matrix = std::vector<std::vector<double>>;

/// y = W^T x + b for a [in, out] weight and [1, out] bias.
inline std::vector<double> affine(const Tensor<double> &w, const Tensor<double> &b,
                                  const std::vector<double> &x) {
  const std::size_t in = w.dim(0), out = w.dim(1);
  std::vector<double> y(out);
  for (std::size_t o = 0; o < out; ++o) {
    double s = b[o];
    for (std::size_t i = 0; i < in; ++i) s += w[i * out + o] * x[i];
    y[o] = s;
  }
  return y;
}

inline std::vector<double> join(const std::vector<double> &a, const std::vector<double> &b) {
  std::vector<double> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

/// Graph s of a batch: V rows and A[i][j][k].
struct Graph {
  Matrix v;
  std::vector<Matrix> a;  // a[i][j][k]
};

inline Graph extract(const Tensor<double> &V, const Tensor<double> &A, std::size_t s) {
  const std::size_t n = V.dim(1);
  Graph g;
  g.v.assign(n, std::vector<double>(kNumAtomTypes));
  g.a.assign(n, Matrix(n, std::vector<double>(kNumBondTypes)));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < kNumAtomTypes; ++t) g.v[i][t] = V[(s * n + i) * kNumAtomTypes + t];
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < kNumBondTypes; ++k) {
        g.a[i][j][k] = A[((s * n + i) * n + j) * kNumBondTypes + k];
      }
    }
  }
  return g;
}

inline Matrix rgcn_layer(const Matrix &h, const Graph &g, const ParameterList<double> &p,
                         std::size_t layer) {
  const std::size_t o = Discriminator<double>::conv_offset(layer);
  const std::size_t n = h.size();
  Matrix out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> total = affine(p[o].value, p[o + 1].value, join(h[i], g.v[i]));
    std::vector<double> message(total.size(), 0.0);
    double count = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 1; k < kNumBondTypes; ++k) {
        const double a = g.a[i][j][k];
        if (a == 0.0) continue;
        count += a;
        const auto f = affine(p[o + 2 * k].value, p[o + 2 * k + 1].value, join(h[j], g.v[i]));
        for (std::size_t c = 0; c < f.size(); ++c) message[c] += a * f[c];
      }
    }
    const double denom = std::max(count, 1.0);
    for (std::size_t c = 0; c < total.size(); ++c) {
      total[c] = std::tanh(total[c] + (count > 0.0 ? message[c] / denom : 0.0));
    }
    out[i] = std::move(total);
  }
  return out;
}

inline double discriminate(const ParameterList<double> &p, const Graph &g) {
  Matrix h = g.v;
  for (std::size_t l = 0; l < kNumConvLayers; ++l) h = rgcn_layer(h, g, p, l);
  const std::size_t o = Discriminator<double>::head_offset();
  std::vector<double> pooled(p[o + 2].value.dim(1), 0.0);
  for (std::size_t i = 0; i < h.size(); ++i) {
    auto reduced = affine(p[o].value, p[o + 1].value, join(h[i], g.v[i]));
    for (auto &x : reduced) x = std::tanh(x);
    const auto rv = join(reduced, g.v[i]);
    const auto gate = affine(p[o + 2].value, p[o + 3].value, rv);
    const auto value = affine(p[o + 4].value, p[o + 5].value, rv);
    for (std::size_t c = 0; c < pooled.size(); ++c) {
      pooled[c] += (1.0 / (1.0 + std::exp(-gate[c]))) * std::tanh(value[c]);
    }
  }
  return std::tanh(affine(p[o + 6].value, p[o + 7].value, pooled)[0]);
}

}  // namespace naive

}  // namespace molfedgan::testing

//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

// MLP generator, relational graph-convolution critic, adversarial losses and
// one local training epoch.
//
// Tensor layout: node labels V are [B, N, 10] and adjacency A is [B, N, N, 5],
// both one-hot (or soft) over the last axis.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "molfedgan/autodiff.hpp"
#include "molfedgan/errors.hpp"
#include "molfedgan/molgraph.hpp"
#include "molfedgan/optim.hpp"
#include "molfedgan/sampling.hpp"
#include "molfedgan/tensor.hpp"

namespace molfedgan {

inline constexpr std::size_t kDefaultNoiseDim = 16;
inline constexpr std::size_t kNumConvLayers = 2;

// ---------------------------------------------------------------------------
// Dimension strings
// ---------------------------------------------------------------------------

namespace detail {

class DimsParser {
 public:
  explicit DimsParser(std::string_view text) : text_(text) { }

  std::vector<std::size_t> list() {
    expect('[');
    std::vector<std::size_t> out{number()};
    while (peek() == ',') {
      ++pos_;
      out.push_back(number());
    }
    expect(']');
    return out;
  }

  std::size_t number() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
    if (start == pos_) fail("expected a number");
    const auto v = std::stoull(std::string(text_.substr(start, pos_ - start)));
    if (v == 0) fail("dimensions must be positive");
    return static_cast<std::size_t>(v);
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  char peek() {
    skip_space();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  void finish() {
    if (peek() != '\0') fail("trailing characters");
  }

  [[noreturn]] void fail(const std::string &what) const {
    throw ConfigError("bad dimension string '" + std::string(text_) + "': "
                      + what + " at offset " + std::to_string(pos_));
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses "[a,b,...]".
inline std::vector<std::size_t> parse_dims_list(std::string_view text) {
  detail::DimsParser p(text);
  auto out = p.list();
  p.finish();
  return out;
}

struct DiscriminatorDims {
  std::vector<std::size_t> conv;  // two relational-convolution widths
  std::size_t reduce = 0;
  std::size_t head = 0;           // width of the two parallel head layers

  friend bool operator==(const DiscriminatorDims &, const DiscriminatorDims &) = default;
};

/// Parses "[a,b],c,[d,1]" into conv = [a,b], reduce = c, head = d.
inline DiscriminatorDims parse_discriminator_dims(std::string_view text) {
  detail::DimsParser p(text);
  DiscriminatorDims d;
  d.conv = p.list();
  if (d.conv.size() != kNumConvLayers) p.fail("expected two convolution widths");
  p.expect(',');
  d.reduce = p.number();
  p.expect(',');
  const auto head = p.list();
  if (head.size() != 2 || head[1] != 1) p.fail("head must be [d,1]");
  d.head = head[0];
  p.finish();
  return d;
}

inline std::string format_dims_list(const std::vector<std::size_t> &dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

inline std::string format_discriminator_dims(const DiscriminatorDims &d) {
  return format_dims_list(d.conv) + "," + std::to_string(d.reduce) + ",["
         + std::to_string(d.head) + ",1]";
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void push_linear(ParameterList<T> &params, const std::string &name,
                 std::size_t in, std::size_t out, Rng &rng) {
  params.push_back({name + ".weight", glorot_uniform<T>(in, out, rng)});
  params.push_back({name + ".bias", Tensor<T>(Shape{1, out})});
}

}  // namespace detail

template <typename T>
struct Generator {
  std::vector<std::size_t> hidden_dims;
  std::size_t noise_dim = kDefaultNoiseDim;
  std::size_t n_max = kDefaultMaxAtoms;
  double dropout = 0.0;
  ParameterList<T> params;

  static Generator init(std::vector<std::size_t> hidden_dims, std::size_t noise_dim,
                        std::size_t n_max, double dropout, Rng &rng) {
    if (hidden_dims.empty()) throw ConfigError("generator needs at least one hidden layer");
    Generator g;
    g.hidden_dims = std::move(hidden_dims);
    g.noise_dim = noise_dim;
    g.n_max = n_max;
    g.dropout = dropout;
    std::size_t in = noise_dim;
    for (std::size_t i = 0; i < g.hidden_dims.size(); ++i) {
      detail::push_linear(g.params, "hidden" + std::to_string(i), in,
                          g.hidden_dims[i], rng);
      in = g.hidden_dims[i];
    }
    detail::push_linear(g.params, "nodes", in, n_max * kNumAtomTypes, rng);
    detail::push_linear(g.params, "edges", in, n_max * n_max * kNumBondTypes, rng);
    return g;
  }

  /// Rebuilds the architecture from parameter shapes (as stored in a checkpoint).
  static Generator from_parameters(ParameterList<T> params, double dropout = 0.0) {
    Generator g;
    g.dropout = dropout;
    std::size_t i = 0;
    while (i + 1 < params.size()
           && params[i].name == "hidden" + std::to_string(i / 2) + ".weight") {
      if (params[i].value.rank() != 2) throw ArchitectureMismatch("generator hidden weight rank");
      if (i == 0) g.noise_dim = params[i].value.dim(0);
      g.hidden_dims.push_back(params[i].value.dim(1));
      i += 2;
    }
    if (g.hidden_dims.empty() || params.size() != i + 4
        || params[i].name != "nodes.weight" || params[i + 2].name != "edges.weight") {
      throw ArchitectureMismatch("generator parameter list is not an MLP with node/edge heads");
    }
    const std::size_t node_out = params[i].value.dim(1);
    if (node_out % kNumAtomTypes != 0) throw ArchitectureMismatch("generator node head width");
    g.n_max = node_out / kNumAtomTypes;
    if (params[i + 2].value.dim(1) != g.n_max * g.n_max * kNumBondTypes) {
      throw ArchitectureMismatch("generator edge head width");
    }
    g.params = std::move(params);
    Rng dummy(0);
    const auto expect = init(g.hidden_dims, g.noise_dim, g.n_max, dropout, dummy);
    check_same_architecture(expect.params, g.params);
    return g;
  }

  static void check_same_architecture(const ParameterList<T> &a, const ParameterList<T> &b) {
    if (a.size() != b.size()) throw ArchitectureMismatch("parameter count differs");
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (a[k].name != b[k].name || a[k].value.shape() != b[k].value.shape()) {
        throw ArchitectureMismatch("parameter " + b[k].name + " "
                                   + shape_str(b[k].value.shape()) + " expected "
                                   + a[k].name + " " + shape_str(a[k].value.shape()));
      }
    }
  }
};

template <typename T>
struct Discriminator {
  DiscriminatorDims dims;
  double dropout = 0.0;
  ParameterList<T> params;

  // Parameter layout: per conv layer skip.{weight,bias} then bond1..4, then
  // reduce, gate, value, out.
  static constexpr std::size_t kPerConv = 2 * kNumBondTypes;

  static std::size_t conv_offset(std::size_t l) { return l * kPerConv; }
  static std::size_t head_offset() { return kNumConvLayers * kPerConv; }

  static Discriminator init(DiscriminatorDims dims, double dropout, Rng &rng) {
    Discriminator d;
    d.dims = std::move(dims);
    d.dropout = dropout;
    std::size_t in = kNumAtomTypes;
    for (std::size_t l = 0; l < kNumConvLayers; ++l) {
      const std::string prefix = "conv" + std::to_string(l);
      const std::size_t out = d.dims.conv[l];
      detail::push_linear(d.params, prefix + ".skip", in + kNumAtomTypes, out, rng);
      for (std::size_t k = 1; k < kNumBondTypes; ++k) {
        detail::push_linear(d.params, prefix + ".bond" + std::to_string(k),
                            in + kNumAtomTypes, out, rng);
      }
      in = out;
    }
    detail::push_linear(d.params, "reduce", in + kNumAtomTypes, d.dims.reduce, rng);
    detail::push_linear(d.params, "gate", d.dims.reduce + kNumAtomTypes, d.dims.head, rng);
    detail::push_linear(d.params, "value", d.dims.reduce + kNumAtomTypes, d.dims.head, rng);
    detail::push_linear(d.params, "out", d.dims.head, 1, rng);
    return d;
  }

  static Discriminator from_parameters(ParameterList<T> params, double dropout = 0.0) {
    const std::size_t expected = head_offset() + 8;
    if (params.size() != expected) {
      throw ArchitectureMismatch("discriminator expects " + std::to_string(expected)
                                 + " parameter tensors, got "
                                 + std::to_string(params.size()));
    }
    for (const auto &p : params) {
      if (p.value.rank() != 2) throw ArchitectureMismatch("parameter " + p.name + " is not rank 2");
    }
    DiscriminatorDims dims;
    for (std::size_t l = 0; l < kNumConvLayers; ++l) {
      dims.conv.push_back(params[conv_offset(l)].value.dim(1));
    }
    dims.reduce = params[head_offset()].value.dim(1);
    dims.head = params[head_offset() + 2].value.dim(1);
    Rng dummy(0);
    const auto expect = init(dims, dropout, dummy);
    Generator<T>::check_same_architecture(expect.params, params);
    Discriminator d;
    d.dims = dims;
    d.dropout = dropout;
    d.params = std::move(params);
    return d;
  }
};

/// Registers parameters on a tape, either as trainable leaves or constants.
template <typename T>
std::vector<ad::Var<T>> bind_parameters(ad::Tape<T> &tape, const ParameterList<T> &params,
                                        bool trainable) {
  std::vector<ad::Var<T>> vars;
  vars.reserve(params.size());
  for (const auto &p : params) {
    vars.push_back(trainable ? tape.leaf(p.value) : tape.constant(p.value));
  }
  return vars;
}

// ---------------------------------------------------------------------------
// Graph <-> tensor conversion
// ---------------------------------------------------------------------------

template <typename T>
struct GraphBatch {
  Tensor<T> V;  // [B, N, 10]
  Tensor<T> A;  // [B, N, N, 5]

  std::size_t size() const { return V.rank() == 0 ? 0 : V.dim(0); }
};

/// Exact one-hot encoding of the selected graphs (padded to n_max).
template <typename T>
GraphBatch<T> graphs_to_tensors(const std::vector<MolecularGraph> &graphs,
                                const std::vector<std::size_t> &indices,
                                std::size_t n_max) {
  const std::size_t b = indices.size();
  GraphBatch<T> out{Tensor<T>(Shape{b, n_max, kNumAtomTypes}),
                    Tensor<T>(Shape{b, n_max, n_max, kNumBondTypes})};
  for (std::size_t s = 0; s < b; ++s) {
    const MolecularGraph g = pad_to(graphs.at(indices[s]), n_max);
    for (std::size_t i = 0; i < n_max; ++i) {
      out.V[(s * n_max + i) * kNumAtomTypes + static_cast<std::size_t>(g.atom(i))] = T(1);
      for (std::size_t j = 0; j < n_max; ++j) {
        out.A[((s * n_max + i) * n_max + j) * kNumBondTypes
              + static_cast<std::size_t>(g.bond(i, j))] = T(1);
      }
    }
  }
  return out;
}

/// Argmax decoding. Bonds are read from the upper triangle; bonds touching a
/// padding slot are dropped.
template <typename T>
std::vector<MolecularGraph> tensors_to_graphs(const Tensor<T> &V, const Tensor<T> &A) {
  if (V.rank() != 3 || A.rank() != 4 || V.dim(2) != kNumAtomTypes
      || A.dim(3) != kNumBondTypes || A.dim(0) != V.dim(0) || A.dim(1) != V.dim(1)
      || A.dim(2) != V.dim(1)) {
    throw ShapeMismatch("tensors_to_graphs: " + shape_str(V.shape()) + " vs "
                        + shape_str(A.shape()));
  }
  const std::size_t b = V.dim(0), n = V.dim(1);
  auto argmax = [](const T *row, std::size_t len) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < len; ++c) {
      if (row[c] > row[best]) best = c;
    }
    return best;
  };
  std::vector<MolecularGraph> out;
  out.reserve(b);
  for (std::size_t s = 0; s < b; ++s) {
    MolecularGraph g(n);
    for (std::size_t i = 0; i < n; ++i) {
      g.set_atom(i, static_cast<AtomType>(
                        argmax(V.data() + (s * n + i) * kNumAtomTypes, kNumAtomTypes)));
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto bond = static_cast<BondType>(
            argmax(A.data() + ((s * n + i) * n + j) * kNumBondTypes, kNumBondTypes));
        if (bond == BondType::Zero || g.atom(i) == AtomType::Pad
            || g.atom(j) == AtomType::Pad) {
          continue;
        }
        g.set_bond(i, j, bond);
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generator forward
// ---------------------------------------------------------------------------

enum class OutputMode { Soft, Hard };

/// Random inputs of one generator forward pass. Rank-0 tensors mean "unused".
template <typename T>
struct GeneratorNoise {
  Tensor<T> z;            // [B, noise_dim]
  Tensor<T> node_gumbel;  // [B, N, 10]
  Tensor<T> edge_gumbel;  // [B, N, N, 5], symmetric in the node axes
  Tensor<T> dropout_mask; // [B, last hidden]
};

template <typename T>
Tensor<T> symmetric_gumbel_noise(std::size_t batch, std::size_t n, Rng &rng) {
  Tensor<T> g = gumbel_noise<T>(Shape{batch, n, n, kNumBondTypes}, rng);
  for (std::size_t s = 0; s < batch; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        for (std::size_t k = 0; k < kNumBondTypes; ++k) {
          g[((s * n + i) * n + j) * kNumBondTypes + k] =
              g[((s * n + j) * n + i) * kNumBondTypes + k];
        }
      }
    }
  }
  return g;
}

/// Draws z (unless given), Gumbel noise for hard mode, and a dropout mask
/// when training, in that order.
template <typename T>
GeneratorNoise<T> draw_generator_noise(const Generator<T> &gen, std::size_t batch,
                                       OutputMode mode, bool training, Rng &rng,
                                       const Tensor<T> *fixed_z = nullptr) {
  GeneratorNoise<T> noise;
  noise.z = fixed_z ? *fixed_z : normal_tensor<T>(Shape{batch, gen.noise_dim}, rng);
  if (mode == OutputMode::Hard) {
    noise.node_gumbel = gumbel_noise<T>(Shape{batch, gen.n_max, kNumAtomTypes}, rng);
    noise.edge_gumbel = symmetric_gumbel_noise<T>(batch, gen.n_max, rng);
  }
  if (training && gen.dropout > 0.0) {
    noise.dropout_mask =
        dropout_mask<T>(Shape{batch, gen.hidden_dims.back()}, gen.dropout, rng);
  }
  return noise;
}

template <typename T>
struct GeneratedBatch {
  ad::Var<T> V;
  ad::Var<T> A;
};

namespace detail {

template <typename T>
ad::Var<T> linear(const ad::Var<T> &x, const ad::Var<T> &w, const ad::Var<T> &b) {
  return ad::add(ad::matmul(x, w), b);
}

/// Linear map on the last axis of a [B, N, in] tensor.
template <typename T>
ad::Var<T> linear3(const ad::Var<T> &x, const ad::Var<T> &w, const ad::Var<T> &b) {
  const Shape s = x.shape();
  auto flat = ad::reshape(x, Shape{s[0] * s[1], s[2]});
  auto y = linear(flat, w, b);
  return ad::reshape(y, Shape{s[0], s[1], w.shape()[1]});
}

template <typename T>
ad::Var<T> matmul3(const ad::Var<T> &x, const ad::Var<T> &w) {
  const Shape s = x.shape();
  auto y = ad::matmul(ad::reshape(x, Shape{s[0] * s[1], s[2]}), w);
  return ad::reshape(y, Shape{s[0], s[1], w.shape()[1]});
}

template <typename T>
Tensor<T> off_diagonal_mask(std::size_t n) {
  Tensor<T> m(Shape{1, n, n, 1}, T(1));
  for (std::size_t i = 0; i < n; ++i) m[i * n + i] = T(0);
  return m;
}

template <typename T>
Tensor<T> diagonal_zero_bond(std::size_t n) {
  Tensor<T> d(Shape{1, n, n, kNumBondTypes});
  for (std::size_t i = 0; i < n; ++i) {
    d[(i * n + i) * kNumBondTypes + static_cast<std::size_t>(BondType::Zero)] = T(1);
  }
  return d;
}

}  // namespace detail

/// Generator forward on a tape. Soft mode returns softmax distributions; hard
/// mode returns straight-through Gumbel one-hot samples. The diagonal of the
/// adjacency is always the ZERO bond.
template <typename T>
GeneratedBatch<T> generate(const Generator<T> &gen, const std::vector<ad::Var<T>> &p,
                           const GeneratorNoise<T> &noise, OutputMode mode,
                           double temperature = 1.0) {
  const Tensor<T> &z = noise.z;
  if (z.rank() != 2 || z.dim(1) != gen.noise_dim) {
    throw ShapeMismatch("generate: z has shape " + shape_str(z.shape())
                        + ", expected [B," + std::to_string(gen.noise_dim) + "]");
  }
  if (p.size() != gen.params.size()) throw ShapeMismatch("generate: parameter count");
  ad::Tape<T> &tape = p.front().tape();
  const std::size_t b = z.dim(0), n = gen.n_max;

  auto h = tape.constant(z);
  const std::size_t layers = gen.hidden_dims.size();
  for (std::size_t i = 0; i < layers; ++i) {
    h = ad::tanh(detail::linear(h, p[2 * i], p[2 * i + 1]));
  }
  if (noise.dropout_mask.rank() > 0) h = ad::dropout(h, noise.dropout_mask);

  auto node_logits = ad::reshape(detail::linear(h, p[2 * layers], p[2 * layers + 1]),
                                 Shape{b, n, kNumAtomTypes});
  auto edge_raw = ad::reshape(detail::linear(h, p[2 * layers + 2], p[2 * layers + 3]),
                              Shape{b, n, n, kNumBondTypes});
  auto edge_logits = ad::scale(ad::add(edge_raw, ad::transpose(edge_raw, 1, 2)), T(0.5));

  ad::Var<T> V, A;
  if (mode == OutputMode::Soft) {
    V = ad::softmax(node_logits);
    A = ad::softmax(edge_logits);
  } else {
    V = gumbel_softmax(node_logits, noise.node_gumbel, temperature, true);
    A = gumbel_softmax(edge_logits, noise.edge_gumbel, temperature, true);
  }
  A = ad::add(ad::mul(A, tape.constant(detail::off_diagonal_mask<T>(n))),
              tape.constant(detail::diagonal_zero_bond<T>(n)));
  return {V, A};
}

/// Draws n graphs from the generator in evaluation mode (no dropout, hard).
template <typename T>
std::vector<MolecularGraph> sample_graphs(const Generator<T> &gen, std::size_t n,
                                          double temperature, Rng &rng,
                                          std::size_t chunk = 64) {
  std::vector<MolecularGraph> out;
  out.reserve(n);
  while (out.size() < n) {
    const std::size_t b = std::min(chunk, n - out.size());
    ad::Tape<T> tape;
    typename ad::Tape<T>::NoGradGuard guard(tape);
    const auto vars = bind_parameters(tape, gen.params, false);
    const auto noise = draw_generator_noise(gen, b, OutputMode::Hard, false, rng);
    const auto g = generate(gen, vars, noise, OutputMode::Hard, temperature);
    for (auto &graph : tensors_to_graphs(g.V.value(), g.A.value())) {
      out.push_back(std::move(graph));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Discriminator forward
// ---------------------------------------------------------------------------

template <typename T>
struct RgcnParams {
  ad::Var<T> skip_w, skip_b;
  std::array<ad::Var<T>, kNumBondTypes - 1> bond_w, bond_b;
};

template <typename T>
RgcnParams<T> rgcn_params(const std::vector<ad::Var<T>> &p, std::size_t layer) {
  const std::size_t o = Discriminator<T>::conv_offset(layer);
  RgcnParams<T> r{p[o], p[o + 1], {}, {}};
  for (std::size_t k = 0; k + 1 < kNumBondTypes; ++k) {
    r.bond_w[k] = p[o + 2 + 2 * k];
    r.bond_b[k] = p[o + 3 + 2 * k];
  }
  return r;
}

/// One relational graph-convolution layer:
///   h_i' = f_s(h_i, v_i) + sum_k sum_j a_ijk f_k(h_j, v_i) / |N_i|
///   out  = tanh(h_i')
/// where |N_i| counts non-ZERO bonds. Isolated nodes keep only the skip term.
/// Shapes: h [B,N,d], V [B,N,10], A [B,N,N,5].
template <typename T>
ad::Var<T> rgcn_layer(const ad::Var<T> &h, const ad::Var<T> &V, const ad::Var<T> &A,
                      const RgcnParams<T> &p) {
  const Shape hs = h.shape(), vs = V.shape(), as = A.shape();
  if (hs.size() != 3 || vs.size() != 3 || as.size() != 4 || hs[0] != vs[0]
      || hs[1] != vs[1] || as[0] != vs[0] || as[1] != vs[1] || as[2] != vs[1]
      || vs[2] != kNumAtomTypes || as[3] != kNumBondTypes) {
    throw ShapeMismatch("rgcn_layer: h " + shape_str(hs) + ", V " + shape_str(vs)
                        + ", A " + shape_str(as));
  }
  const std::size_t b = hs[0], n = hs[1], d = hs[2];
  if (p.skip_w.shape() != Shape{d + kNumAtomTypes, p.skip_w.shape()[1]}) {
    throw ShapeMismatch("rgcn_layer: skip weight " + shape_str(p.skip_w.shape())
                        + " for input width " + std::to_string(d));
  }

  auto hv = ad::concat(std::vector<ad::Var<T>>{h, V}, 2);
  auto skip = detail::linear3(hv, p.skip_w, p.skip_b);

  ad::Var<T> message, count;
  for (std::size_t k = 1; k < kNumBondTypes; ++k) {
    auto a_k = ad::reshape(ad::slice(A, 3, k, 1), Shape{b, n, n});
    auto deg_k = ad::sum_axis(a_k, 2);  // [B,N,1]
    const auto &w = p.bond_w[k - 1];
    auto w_h = ad::slice(w, 0, 0, d);
    auto w_v = ad::slice(w, 0, d, kNumAtomTypes);
    auto from_neighbors = ad::bmm(a_k, detail::matmul3(h, w_h));
    auto from_receiver = ad::mul(deg_k, detail::linear3(V, w_v, p.bond_b[k - 1]));
    auto term = ad::add(from_neighbors, from_receiver);
    message = message.valid() ? ad::add(message, term) : term;
    count = count.valid() ? ad::add(count, deg_k) : deg_k;
  }
  auto normalized = ad::div(message, ad::clamp_min(count, T(1)));
  return ad::tanh(ad::add(skip, normalized));
}

/// Critic forward. Returns [B, 1] scores in (-1, 1). Dropout masks are drawn
/// from `rng` when it is given and the model has a nonzero ratio.
template <typename T>
ad::Var<T> discriminate(const Discriminator<T> &disc, const std::vector<ad::Var<T>> &p,
                        const ad::Var<T> &V, const ad::Var<T> &A, Rng *rng = nullptr) {
  if (p.size() != disc.params.size()) throw ShapeMismatch("discriminate: parameter count");
  if (V.shape().size() != 3) throw ShapeMismatch("discriminate: V " + shape_str(V.shape()));
  const std::size_t b = V.shape()[0], n = V.shape()[1];
  const bool drop = rng != nullptr && disc.dropout > 0.0;
  auto maybe_dropout = [&](const ad::Var<T> &x) {
    if (!drop) return x;
    return ad::dropout(x, dropout_mask<T>(x.shape(), disc.dropout, *rng));
  };

  ad::Var<T> h = V;
  for (std::size_t l = 0; l < kNumConvLayers; ++l) {
    h = maybe_dropout(rgcn_layer(h, V, A, rgcn_params(p, l)));
  }
  const std::size_t o = Discriminator<T>::head_offset();
  auto reduced = ad::tanh(detail::linear3(ad::concat(std::vector<ad::Var<T>>{h, V}, 2),
                                          p[o], p[o + 1]));
  auto rv = ad::concat(std::vector<ad::Var<T>>{reduced, V}, 2);
  auto gate = maybe_dropout(ad::sigmoid(detail::linear3(rv, p[o + 2], p[o + 3])));
  auto value = maybe_dropout(ad::tanh(detail::linear3(rv, p[o + 4], p[o + 5])));
  auto pooled = ad::reshape(ad::sum_axis(ad::mul(gate, value), 1),
                            Shape{b, disc.dims.head});
  (void)n;
  return ad::tanh(detail::linear(pooled, p[o + 6], p[o + 7]));
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

enum class LossForm { Wgan, Log };

namespace detail {

// Maps a critic score in (-1, 1) to (0, 1) for the log form.
template <typename T>
ad::Var<T> shifted(const ad::Var<T> &d) {
  return ad::clamp_min(ad::scale(ad::add_scalar(d, T(1)), T(0.5)), T(1e-6));
}

}  // namespace detail

template <typename T>
ad::Var<T> generator_loss(const ad::Var<T> &d_gen, LossForm form = LossForm::Wgan) {
  if (form == LossForm::Wgan) return ad::neg(ad::mean(d_gen));
  return ad::neg(ad::mean(ad::log(detail::shifted(d_gen))));
}

/// WGAN form: mean(D(gen)) - mean(D(exist)) + gamma * penalty.
/// Log form: mean(-log D'(gen)) + mean(log D'(exist)) + gamma * penalty, with
/// D' = (D + 1) / 2.
template <typename T>
ad::Var<T> discriminator_loss(const ad::Var<T> &d_gen, const ad::Var<T> &d_exist,
                              const ad::Var<T> &penalty, double gamma,
                              LossForm form = LossForm::Wgan) {
  ad::Var<T> base;
  if (form == LossForm::Wgan) {
    base = ad::sub(ad::mean(d_gen), ad::mean(d_exist));
  } else {
    base = ad::add(ad::neg(ad::mean(ad::log(detail::shifted(d_gen)))),
                   ad::mean(ad::log(detail::shifted(d_exist))));
  }
  return ad::add(base, ad::scale(penalty, static_cast<T>(gamma)));
}

struct GradientPenaltyConfig {
  double gamma = 10.0;
  // Unset: epsilon drawn uniformly per sample. Set: that fixed value.
  std::optional<double> fixed_epsilon;
};

/// Mean over the batch of (||grad_{Omega} critic(Omega)||_2 - 1)^2 where
/// Omega = eps * exist + (1 - eps) * gen. The inner gradient stays on the tape
/// so the result can be differentiated with respect to the critic parameters.
template <typename T, typename Critic>
ad::Var<T> gradient_penalty(ad::Tape<T> &tape, Critic &&critic, const Tensor<T> &V_exist,
                            const Tensor<T> &A_exist, const Tensor<T> &V_gen,
                            const Tensor<T> &A_gen, const GradientPenaltyConfig &cfg,
                            Rng &rng) {
  require_same_shape(V_exist, V_gen, "gradient_penalty V");
  require_same_shape(A_exist, A_gen, "gradient_penalty A");
  if (cfg.gamma < 0.0) throw ConfigError("gradient penalty gamma must be >= 0");
  if (cfg.fixed_epsilon && (*cfg.fixed_epsilon < 0.0 || *cfg.fixed_epsilon > 1.0)) {
    throw ConfigError("fixed epsilon must lie in [0, 1]");
  }
  const std::size_t b = V_exist.dim(0);
  std::vector<double> eps(b);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto &e : eps) e = cfg.fixed_epsilon ? *cfg.fixed_epsilon : unit(rng);

  auto mix = [&](const Tensor<T> &exist, const Tensor<T> &gen) {
    Tensor<T> out(exist.shape());
    const std::size_t per = exist.size() / b;
    for (std::size_t s = 0; s < b; ++s) {
      const double e = eps[s];
      for (std::size_t i = s * per; i < (s + 1) * per; ++i) {
        out[i] = static_cast<T>(e * static_cast<double>(exist[i])
                                + (1.0 - e) * static_cast<double>(gen[i]));
      }
    }
    return out;
  };
  auto omega_v = tape.leaf(mix(V_exist, V_gen));
  auto omega_a = tape.leaf(mix(A_exist, A_gen));
  auto scores = critic(omega_v, omega_a);
  const std::vector<ad::Var<T>> wrt{omega_v, omega_a};
  const auto g = tape.grad(ad::sum(scores), wrt, true);
  auto sq_v = ad::sum_axis(ad::reshape(ad::square(g[0]), Shape{b, V_exist.size() / b}), 1);
  auto sq_a = ad::sum_axis(ad::reshape(ad::square(g[1]), Shape{b, A_exist.size() / b}), 1);
  auto norm = ad::sqrt(ad::add_scalar(ad::add(sq_v, sq_a), T(1e-12)));
  return ad::mean(ad::square(ad::add_scalar(norm, T(-1))));
}

// ---------------------------------------------------------------------------
// Local training
// ---------------------------------------------------------------------------

struct TrainOptions {
  GradientPenaltyConfig penalty;
  LossForm loss_form = LossForm::Wgan;
  double temperature = 1.0;
  OutputMode train_mode = OutputMode::Hard;
};

struct LossTrace {
  std::vector<double> generator;
  std::vector<double> discriminator;
};

/// Per-client optimizer state and noise bookkeeping that persists across
/// epochs and rounds.
template <typename T>
struct TrainerState {
  AdamState<T> gen_opt;
  AdamState<T> disc_opt;
  // Latent vectors per batch slot, redrawn every `resample_epochs` epochs;
  // with resample_epochs == 0 a fresh z is drawn at every step.
  std::size_t resample_epochs = 0;
  std::vector<Tensor<T>> z_bank;
  std::size_t epochs_done = 0;
};

/// One pass over `batches`: for each batch, one critic Adam step followed by
/// one generator Adam step that reuses the same latent and Gumbel noise.
template <typename T>
LossTrace local_epoch(Generator<T> &gen, Discriminator<T> &disc, TrainerState<T> &state,
                      const std::vector<GraphBatch<T>> &batches, const TrainOptions &opts,
                      Rng &rng) {
  if (batches.empty()) throw EmptyDataset("local_epoch: no batches");

  if (state.resample_epochs > 0) {
    const bool redraw = state.z_bank.size() != batches.size()
                        || state.epochs_done % state.resample_epochs == 0;
    if (redraw) {
      state.z_bank.clear();
      for (const auto &batch : batches) {
        state.z_bank.push_back(normal_tensor<T>(Shape{batch.size(), gen.noise_dim}, rng));
      }
    }
  }

  LossTrace trace;
  for (std::size_t m = 0; m < batches.size(); ++m) {
    const auto &batch = batches[m];
    const std::size_t bsz = batch.size();
    const Tensor<T> *fixed_z = state.resample_epochs > 0 ? &state.z_bank[m] : nullptr;
    const auto noise = draw_generator_noise(gen, bsz, opts.train_mode, true, rng, fixed_z);

    // Critic step; the generated batch is a constant here.
    {
      ad::Tape<T> tape;
      GraphBatch<T> fake;
      {
        typename ad::Tape<T>::NoGradGuard guard(tape);
        const auto gvars = bind_parameters(tape, gen.params, false);
        const auto out = generate(gen, gvars, noise, opts.train_mode, opts.temperature);
        fake = {out.V.value(), out.A.value()};
      }
      const auto dvars = bind_parameters(tape, disc.params, true);
      auto d_gen = discriminate(disc, dvars, tape.constant(fake.V), tape.constant(fake.A), &rng);
      auto d_exist = discriminate(disc, dvars, tape.constant(batch.V), tape.constant(batch.A),
                                  &rng);
      ad::Var<T> penalty;
      if (opts.penalty.gamma > 0.0) {
        penalty = gradient_penalty(
            tape,
            [&](const ad::Var<T> &v, const ad::Var<T> &a) {
              return discriminate(disc, dvars, v, a, &rng);
            },
            batch.V, batch.A, fake.V, fake.A, opts.penalty, rng);
      } else {
        penalty = tape.constant(Tensor<T>::scalar(T(0)));
      }
      auto loss = discriminator_loss(d_gen, d_exist, penalty, opts.penalty.gamma,
                                     opts.loss_form);
      const auto grads = tape.gradients(loss, std::span<const ad::Var<T>>(dvars));
      state.disc_opt.step(disc.params, grads);
      trace.discriminator.push_back(static_cast<double>(loss.value().item()));
    }

    // Generator step against the updated critic.
    {
      ad::Tape<T> tape;
      const auto gvars = bind_parameters(tape, gen.params, true);
      const auto dvars = bind_parameters(tape, disc.params, false);
      const auto out = generate(gen, gvars, noise, opts.train_mode, opts.temperature);
      auto d_gen = discriminate(disc, dvars, out.V, out.A, &rng);
      auto loss = generator_loss(d_gen, opts.loss_form);
      const auto grads = tape.gradients(loss, std::span<const ad::Var<T>>(gvars));
      state.gen_opt.step(gen.params, grads);
      trace.generator.push_back(static_cast<double>(loss.value().item()));
    }
  }
  state.gen_opt.end_epoch();
  state.disc_opt.end_epoch();
  ++state.epochs_done;
  return trace;
}

/// Shuffles `indices` and cuts them into full batches (a trailing partial
/// batch is dropped, so M = floor(count / batch_size)).
template <typename T>
std::vector<GraphBatch<T>> make_batches(const std::vector<MolecularGraph> &graphs,
                                        std::vector<std::size_t> indices,
                                        std::size_t batch_size, std::size_t n_max,
                                        Rng &rng) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::shuffle(indices.begin(), indices.end(), rng);
  std::vector<GraphBatch<T>> out;
  for (std::size_t start = 0; start + batch_size <= indices.size(); start += batch_size) {
    std::vector<std::size_t> slice(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                   indices.begin()
                                       + static_cast<std::ptrdiff_t>(start + batch_size));
    out.push_back(graphs_to_tensors<T>(graphs, slice, n_max));
  }
  return out;
}

}  // namespace molfedgan

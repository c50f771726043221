//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

// Evaluation of a generated molecule set: validity, uniqueness, novelty,
// internal diversity, nearest-neighbour similarity and a reduced LogP.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "molfedgan/errors.hpp"
#include "molfedgan/molgraph.hpp"
#include "molfedgan/sampling.hpp"

namespace molfedgan {

// ---------------------------------------------------------------------------
// Circular fingerprints
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultFingerprintWidth = 2048;
inline constexpr std::size_t kDefaultFingerprintRadius = 2;
inline constexpr std::uint64_t kFingerprintSeed = 0x6d6f6c6665646761ULL;

/// splitmix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return mix64(h ^ mix64(v));
}

struct Fingerprint {
  std::size_t width = kDefaultFingerprintWidth;
  std::vector<std::uint64_t> words;

  explicit Fingerprint(std::size_t w = kDefaultFingerprintWidth)
      : width(w), words((w + 63) / 64, 0) { }

  void set(std::size_t bit) { words[bit / 64] |= std::uint64_t{1} << (bit % 64); }
  bool test(std::size_t bit) const { return (words[bit / 64] >> (bit % 64)) & 1U; }

  std::size_t count() const {
    std::size_t c = 0;
    for (auto w : words) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }

  friend bool operator==(const Fingerprint &, const Fingerprint &) = default;
};

/// Per-atom invariants at radius 0: (element, degree, doubled bond-order sum).
inline std::vector<std::uint64_t> initial_atom_invariants(const MolecularGraph &stripped) {
  const std::size_t n = stripped.n_max();
  std::vector<std::uint64_t> inv(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t degree = 0, order2 = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const BondType b = stripped.bond(i, j);
      if (b == BondType::Zero) continue;
      ++degree;
      order2 += static_cast<std::uint64_t>(std::lround(2.0 * bond_order(b)));
    }
    std::uint64_t h = kFingerprintSeed;
    h = hash_combine(h, static_cast<std::uint64_t>(stripped.atom(i)));
    h = hash_combine(h, degree);
    h = hash_combine(h, order2);
    inv[i] = h;
  }
  return inv;
}

/// One refinement round: each atom hashes its own invariant, the round
/// number, and the sorted (bond type, neighbour invariant) pairs.
inline std::vector<std::uint64_t> refine_atom_invariants(const MolecularGraph &stripped,
                                                         const std::vector<std::uint64_t> &inv,
                                                         std::size_t round) {
  const std::size_t n = stripped.n_max();
  std::vector<std::uint64_t> next(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> env;
    for (std::size_t j = 0; j < n; ++j) {
      const BondType b = stripped.bond(i, j);
      if (b != BondType::Zero) env.emplace_back(static_cast<std::uint64_t>(b), inv[j]);
    }
    std::sort(env.begin(), env.end());
    std::uint64_t h = hash_combine(kFingerprintSeed, round);
    h = hash_combine(h, inv[i]);
    for (const auto &[b, x] : env) h = hash_combine(hash_combine(h, b), x);
    next[i] = h;
  }
  return next;
}

/// Morgan-style circular fingerprint: every atom invariant at every radius
/// 0..radius sets bit (invariant mod width).
inline Fingerprint fingerprint(const MolecularGraph &g,
                               std::size_t width = kDefaultFingerprintWidth,
                               std::size_t radius = kDefaultFingerprintRadius) {
  if (width == 0) throw WidthMismatch("fingerprint width must be positive");
  if (!is_valid(g)) throw InvalidGraph("fingerprint of an invalid graph");
  const MolecularGraph s = strip_padding(g);
  Fingerprint fp(width);
  auto inv = initial_atom_invariants(s);
  for (std::size_t r = 0;; ++r) {
    for (auto x : inv) fp.set(static_cast<std::size_t>(x % width));
    if (r == radius) break;
    inv = refine_atom_invariants(s, inv, r + 1);
  }
  return fp;
}

/// |a and b| / |a or b|; 1 when both are empty.
inline double tanimoto(const Fingerprint &a, const Fingerprint &b) {
  if (a.width != b.width) {
    throw WidthMismatch("tanimoto: widths " + std::to_string(a.width) + " and "
                        + std::to_string(b.width));
  }
  std::size_t both = 0, either = 0;
  for (std::size_t w = 0; w < a.words.size(); ++w) {
    both += static_cast<std::size_t>(std::popcount(a.words[w] & b.words[w]));
    either += static_cast<std::size_t>(std::popcount(a.words[w] | b.words[w]));
  }
  if (either == 0) return 1.0;
  return static_cast<double>(both) / static_cast<double>(either);
}

// ---------------------------------------------------------------------------
// Set metrics
// ---------------------------------------------------------------------------

/// 100 * |valid| / |generated|; 0 for an empty input.
inline double validity(std::span<const MolecularGraph> generated, ValidityOptions opts = {}) {
  if (generated.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto &g : generated) ok += is_valid(g, opts) ? 1 : 0;
  return 100.0 * static_cast<double>(ok) / static_cast<double>(generated.size());
}

/// 100 * |distinct canonical keys| / |valid|; 0 for an empty input.
inline double uniqueness(std::span<const MolecularGraph> valid) {
  if (valid.empty()) return 0.0;
  std::set<std::string> keys;
  for (const auto &g : valid) keys.insert(canonical_key(g, g.n_max()));
  return 100.0 * static_cast<double>(keys.size()) / static_cast<double>(valid.size());
}

/// 100 * |valid molecules whose key is not in `reference`| / |valid|.
inline double novelty(std::span<const MolecularGraph> valid,
                      const std::set<std::string> &reference) {
  if (valid.empty()) return 0.0;
  std::size_t fresh = 0;
  for (const auto &g : valid) fresh += reference.count(canonical_key(g, g.n_max())) ? 0 : 1;
  return 100.0 * static_cast<double>(fresh) / static_cast<double>(valid.size());
}

/// 1 - (mean over all ordered pairs, self-pairs included, of T^p)^(1/p).
inline double int_div(std::span<const Fingerprint> fps, int p) {
  if (p != 1 && p != 2) throw Error("int_div: p must be 1 or 2");
  if (fps.empty()) throw EmptySet("int_div of an empty set");
  double sum = 0.0;
  for (const auto &a : fps) {
    for (const auto &b : fps) {
      const double t = tanimoto(a, b);
      sum += p == 1 ? t : t * t;
    }
  }
  const double n = static_cast<double>(fps.size());
  const double mean = sum / (n * n);
  return 1.0 - (p == 1 ? mean : std::sqrt(mean));
}

/// Mean over generated molecules of the maximum similarity to any reference.
inline double snn(std::span<const Fingerprint> generated, std::span<const Fingerprint> reference) {
  if (reference.empty()) throw EmptyReference("snn: empty reference set");
  if (generated.empty()) throw EmptySet("snn: empty generated set");
  double sum = 0.0;
  for (const auto &g : generated) {
    double best = 0.0;
    for (const auto &r : reference) best = std::max(best, tanimoto(g, r));
    sum += best;
  }
  return sum / static_cast<double>(generated.size());
}

/// Mean over generated molecules of the average similarity to the reference.
inline double asim(std::span<const Fingerprint> generated, std::span<const Fingerprint> reference) {
  if (reference.empty()) throw EmptyReference("asim: empty reference set");
  if (generated.empty()) throw EmptySet("asim: empty generated set");
  double sum = 0.0;
  for (const auto &g : generated) {
    double s = 0.0;
    for (const auto &r : reference) s += tanimoto(g, r);
    sum += s / static_cast<double>(reference.size());
  }
  return sum / static_cast<double>(generated.size());
}

/// Seeded subsample (without replacement) of `count` items from [0, total);
/// all items when total <= count. Returned in ascending order.
inline std::vector<std::size_t> reference_subsample(std::size_t total, std::size_t count,
                                                    std::uint64_t seed) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  if (total <= count) return idx;
  Rng rng = derive_rng(seed, 0x736e6e);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ---------------------------------------------------------------------------
// Reduced Crippen-style LogP
// ---------------------------------------------------------------------------

struct LogPRange {
  double low = -2.12;
  double high = 6.26;
};

/// Heavy-atom contribution keyed by (element, aromatic, hetero neighbours,
/// implicit hydrogens):
///
///   C aliphatic, no hetero neighbour:  H>=2 0.1441, else 0.0
///   C aliphatic, hetero neighbour:     H>=2 -0.2035, else -0.2051
///   C aromatic:                        H=1 0.1581; H=0 0.1360, or -0.0516
///                                      with a hetero neighbour
///   N aliphatic:                       H>=2 -1.0190, H=1 -0.7096, H=0 -0.3187
///   N aromatic:                        -0.4806
///   O aliphatic:                       H>=1 -0.2893, H=0 -0.1000
///   O aromatic:                        0.1552
///   F 0.4202, Cl 0.6895, Br 0.8456, I 0.8857
///   S aliphatic 0.6482, aromatic 0.6237; P 0.8612
inline double heavy_atom_logp(AtomType t, bool aromatic, int hetero_neighbors, int hydrogens) {
  switch (t) {
  case AtomType::C:
    if (aromatic) {
      if (hydrogens >= 1) return 0.1581;
      return hetero_neighbors > 0 ? -0.0516 : 0.1360;
    }
    if (hetero_neighbors == 0) return hydrogens >= 2 ? 0.1441 : 0.0;
    return hydrogens >= 2 ? -0.2035 : -0.2051;
  case AtomType::N:
    if (aromatic) return -0.4806;
    if (hydrogens >= 2) return -1.0190;
    return hydrogens == 1 ? -0.7096 : -0.3187;
  case AtomType::O:
    if (aromatic) return 0.1552;
    return hydrogens >= 1 ? -0.2893 : -0.1000;
  case AtomType::F:
    return 0.4202;
  case AtomType::Cl:
    return 0.6895;
  case AtomType::Br:
    return 0.8456;
  case AtomType::I:
    return 0.8857;
  case AtomType::S:
    return aromatic ? 0.6237 : 0.6482;
  case AtomType::P:
    return 0.8612;
  case AtomType::Pad:
    break;
  }
  return 0.0;
}

/// Contribution of one implicit hydrogen by the element it is attached to.
inline double hydrogen_logp(AtomType t) {
  switch (t) {
  case AtomType::N:
    return 0.2142;
  case AtomType::O:
    return -0.2677;
  default:
    return 0.1230;
  }
}

/// Raw LogP estimate of a valid molecule.
inline double logp_raw(const MolecularGraph &g) {
  const MolecularGraph s = strip_padding(g);
  if (s.n_max() == 0) throw InvalidGraph("logp of an empty graph");
  const ValenceAnalysis va = analyze_valence(s);
  if (!va.ok) throw InvalidGraph("logp: " + va.reason);
  double total = 0.0;
  for (std::size_t i = 0; i < s.n_max(); ++i) {
    int hetero = 0;
    for (std::size_t j : s.neighbors(i)) hetero += s.atom(j) != AtomType::C ? 1 : 0;
    const int h = va.implicit_hydrogens[i];
    total += heavy_atom_logp(s.atom(i), va.aromatic[i], hetero, h);
    total += h * hydrogen_logp(s.atom(i));
  }
  return total;
}

/// Clipped linear map of a raw value onto [0, 1].
inline double normalize_logp(double raw, const LogPRange &range = {}) {
  const double x = (raw - range.low) / (range.high - range.low);
  return std::clamp(x, 0.0, 1.0);
}

/// Mean normalized LogP; 0 for an empty input.
inline double logp(std::span<const MolecularGraph> valid, const LogPRange &range = {}) {
  if (valid.empty()) return 0.0;
  double sum = 0.0;
  for (const auto &g : valid) sum += normalize_logp(logp_raw(g), range);
  return sum / static_cast<double>(valid.size());
}

// ---------------------------------------------------------------------------
// Composite evaluation
// ---------------------------------------------------------------------------

struct MetricsConfig {
  std::size_t fingerprint_width = kDefaultFingerprintWidth;
  std::size_t fingerprint_radius = kDefaultFingerprintRadius;
  std::size_t snn_sample_size = 1000;
  std::uint64_t seed = 0;
  LogPRange logp_range;
};

struct MetricsReport {
  std::size_t generated = 0;
  std::size_t valid = 0;
  double validity = 0.0;
  double uniqueness = 0.0;
  double novelty = 0.0;
  double int_div_1 = 0.0;
  double int_div_2 = 0.0;
  double snn = 0.0;
  double asim = 0.0;
  double logp = 0.0;
  std::optional<double> qed;  // not computed
  double all_pad_fraction = 0.0;
  std::vector<std::string> warnings;
};

/// Precomputed reference data (training split): canonical keys for novelty
/// and fingerprints of a seeded subsample for SNN.
struct ReferenceSet {
  std::set<std::string> keys;
  std::vector<Fingerprint> sample;
};

inline ReferenceSet make_reference(std::span<const MolecularGraph> reference,
                                   const MetricsConfig &cfg) {
  ReferenceSet ref;
  for (const auto &g : reference) ref.keys.insert(canonical_key(g, g.n_max()));
  for (std::size_t i : reference_subsample(reference.size(), cfg.snn_sample_size, cfg.seed)) {
    ref.sample.push_back(fingerprint(reference[i], cfg.fingerprint_width, cfg.fingerprint_radius));
  }
  return ref;
}

/// Validity over all generated graphs; every other metric over the valid ones.
inline MetricsReport evaluate(std::span<const MolecularGraph> generated,
                              const ReferenceSet &reference, const MetricsConfig &cfg) {
  MetricsReport r;
  r.generated = generated.size();
  if (generated.empty()) {
    r.warnings.push_back("empty generated set");
    return r;
  }
  std::vector<MolecularGraph> valid;
  std::size_t pad = 0;
  for (const auto &g : generated) {
    if (g.all_padding()) ++pad;
    if (is_valid(g)) valid.push_back(g);
  }
  r.valid = valid.size();
  r.validity = validity(generated);
  r.all_pad_fraction = 100.0 * static_cast<double>(pad) / static_cast<double>(generated.size());
  if (valid.empty()) {
    r.warnings.push_back("no valid molecules");
    return r;
  }
  r.uniqueness = uniqueness(valid);
  r.novelty = novelty(valid, reference.keys);
  std::vector<Fingerprint> fps;
  fps.reserve(valid.size());
  for (const auto &g : valid) {
    fps.push_back(fingerprint(g, cfg.fingerprint_width, cfg.fingerprint_radius));
  }
  r.int_div_1 = int_div(fps, 1);
  r.int_div_2 = int_div(fps, 2);
  if (reference.sample.empty()) {
    r.warnings.push_back("empty reference set; snn not computed");
  } else {
    r.snn = snn(fps, reference.sample);
    r.asim = asim(fps, reference.sample);
  }
  r.logp = logp(valid, cfg.logp_range);
  return r;
}

}  // namespace molfedgan

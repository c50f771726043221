//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "molfedgan/errors.hpp"

namespace molfedgan {

inline constexpr std::size_t kNumAtomTypes = 10;
inline constexpr std::size_t kNumBondTypes = 5;
inline constexpr std::size_t kDefaultMaxAtoms = 10;

/// Node alphabet. The enumerator value is the column of the one-hot node label.
enum class AtomType : std::uint8_t { C, N, O, F, Br, P, S, Cl, I, Pad };

/// Edge alphabet. The enumerator value is the channel of the adjacency tensor.
enum class BondType : std::uint8_t { Zero, Single, Double, Triple, Aromatic };

inline constexpr std::array<AtomType, kNumAtomTypes> kAllAtomTypes = {
    AtomType::C,  AtomType::N, AtomType::O,  AtomType::F, AtomType::Br,
    AtomType::P,  AtomType::S, AtomType::Cl, AtomType::I, AtomType::Pad};

inline constexpr std::string_view atom_symbol(AtomType t) {
  constexpr std::array<std::string_view, kNumAtomTypes> symbols = {
      "C", "N", "O", "F", "Br", "P", "S", "Cl", "I", "*"};
  return symbols[static_cast<std::size_t>(t)];
}

/// Allowed total valences, ascending. Empty for padding.
inline std::span<const int> valence_set(AtomType t) {
  static constexpr int c[] = {4};
  static constexpr int n[] = {3};
  static constexpr int o[] = {2};
  static constexpr int one[] = {1};
  static constexpr int p[] = {3, 5};
  static constexpr int s[] = {2, 4, 6};
  switch (t) {
  case AtomType::C:
    return c;
  case AtomType::N:
    return n;
  case AtomType::O:
    return o;
  case AtomType::F:
  case AtomType::Br:
  case AtomType::Cl:
  case AtomType::I:
    return one;
  case AtomType::P:
    return p;
  case AtomType::S:
    return s;
  case AtomType::Pad:
    break;
  }
  return {};
}

/// Bond order; aromatic bonds count 1.5.
inline constexpr double bond_order(BondType b) {
  constexpr std::array<double, kNumBondTypes> orders = {0.0, 1.0, 2.0, 3.0, 1.5};
  return orders[static_cast<std::size_t>(b)];
}

/// Heavy-atom graph with a fixed number of slots. Unused slots hold PAD and
/// carry no bonds; the bond matrix is symmetric with a zero diagonal.
class MolecularGraph {
 public:
  explicit MolecularGraph(std::size_t n_max = kDefaultMaxAtoms)
      : atoms_(n_max, AtomType::Pad), bonds_(n_max * n_max, BondType::Zero) { }

  std::size_t n_max() const noexcept { return atoms_.size(); }

  AtomType atom(std::size_t i) const { return atoms_.at(i); }

  BondType bond(std::size_t i, std::size_t j) const {
    return bonds_.at(i * n_max() + j);
  }

  /// Setting a slot to PAD removes its bonds.
  void set_atom(std::size_t i, AtomType type) {
    atoms_.at(i) = type;
    if (type == AtomType::Pad) {
      for (std::size_t j = 0; j < n_max(); ++j) {
        bonds_[i * n_max() + j] = BondType::Zero;
        bonds_[j * n_max() + i] = BondType::Zero;
      }
    }
  }

  void set_bond(std::size_t i, std::size_t j, BondType type) {
    if (i >= n_max() || j >= n_max()) {
      throw InvalidGraph("bond index out of range");
    }
    if (type != BondType::Zero) {
      if (i == j) throw InvalidGraph("self-bond on atom " + std::to_string(i));
      if (atoms_[i] == AtomType::Pad || atoms_[j] == AtomType::Pad) {
        throw InvalidGraph("bond to a padding slot");
      }
    }
    bonds_[i * n_max() + j] = type;
    bonds_[j * n_max() + i] = type;
  }

  std::size_t atom_count() const {
    return static_cast<std::size_t>(std::count_if(
        atoms_.begin(), atoms_.end(),
        [](AtomType t) { return t != AtomType::Pad; }));
  }

  bool all_padding() const { return atom_count() == 0; }

  /// Slots with a non-ZERO bond to i, ascending.
  std::vector<std::size_t> neighbors(std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n_max(); ++j) {
      if (bond(i, j) != BondType::Zero) out.push_back(j);
    }
    return out;
  }

  /// Appends an atom in the first PAD slot and returns its index.
  std::size_t add_atom(AtomType type) {
    for (std::size_t i = 0; i < n_max(); ++i) {
      if (atoms_[i] == AtomType::Pad) {
        atoms_[i] = type;
        return i;
      }
    }
    throw GraphTooLarge("no free slot among " + std::to_string(n_max()));
  }

  friend bool operator==(const MolecularGraph &, const MolecularGraph &) =
      default;

 private:
  std::vector<AtomType> atoms_;
  std::vector<BondType> bonds_;
};

/// Induced subgraph on non-PAD slots, renumbered in slot order.
inline MolecularGraph strip_padding(const MolecularGraph &g) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < g.n_max(); ++i) {
    if (g.atom(i) != AtomType::Pad) keep.push_back(i);
  }
  MolecularGraph out(keep.size());
  for (std::size_t a = 0; a < keep.size(); ++a) out.set_atom(a, g.atom(keep[a]));
  for (std::size_t a = 0; a < keep.size(); ++a) {
    for (std::size_t b = a + 1; b < keep.size(); ++b) {
      out.set_bond(a, b, g.bond(keep[a], keep[b]));
    }
  }
  return out;
}

/// Returns a copy padded (or re-slotted) to n_max slots with atoms first.
inline MolecularGraph pad_to(const MolecularGraph &g, std::size_t n_max) {
  MolecularGraph s = strip_padding(g);
  if (s.n_max() > n_max) {
    throw GraphTooLarge(std::to_string(s.n_max()) + " atoms exceed n_max "
                        + std::to_string(n_max));
  }
  MolecularGraph out(n_max);
  for (std::size_t i = 0; i < s.n_max(); ++i) out.set_atom(i, s.atom(i));
  for (std::size_t i = 0; i < s.n_max(); ++i) {
    for (std::size_t j = i + 1; j < s.n_max(); ++j) out.set_bond(i, j, s.bond(i, j));
  }
  return out;
}

/// Outcome of the valence check on a padding-stripped graph.
struct ValenceAnalysis {
  bool ok = false;
  std::string reason;
  std::vector<int> implicit_hydrogens;
  std::vector<bool> aromatic;
  /// Integer bond orders after assigning aromatic bonds to a Kekulé form
  /// (n*n, row-major); only meaningful when ok.
  std::vector<int> kekule_orders;
};

namespace detail {

inline bool kekule_match(const MolecularGraph &g, const std::vector<bool> &needs,
                         std::vector<int> &partner) {
  const std::size_t n = g.n_max();
  std::size_t u = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (needs[i] && partner[i] < 0) {
      u = i;
      break;
    }
  }
  if (u == n) return true;
  for (std::size_t w = 0; w < n; ++w) {
    if (w == u || !needs[w] || partner[w] >= 0) continue;
    if (g.bond(u, w) != BondType::Aromatic) continue;
    partner[u] = static_cast<int>(w);
    partner[w] = static_cast<int>(u);
    if (kekule_match(g, needs, partner)) return true;
    partner[u] = -1;
    partner[w] = -1;
  }
  return false;
}

inline std::optional<int> smallest_valence_at_least(AtomType t, int total) {
  for (int v : valence_set(t)) {
    if (v >= total) return v;
  }
  return std::nullopt;
}

}  // namespace detail

/// Valence analysis of a padding-stripped graph.
///
/// Aromatic bonds are resolved by searching for a Kekulé assignment: an
/// aromatic atom takes one double bond when its smallest admissible valence
/// leaves room for it (pyridine-type N, benzene C) and none otherwise
/// (furan O, thiophene S, N-substituted pyrrole N). Every such atom must be
/// matched exactly once along aromatic bonds. Implicit hydrogens fill each
/// atom up to the smallest valence in its set that covers the Kekulé total.
inline ValenceAnalysis analyze_valence(const MolecularGraph &g) {
  const std::size_t n = g.n_max();
  ValenceAnalysis out;
  out.implicit_hydrogens.assign(n, 0);
  out.aromatic.assign(n, false);
  out.kekule_orders.assign(n * n, 0);

  std::vector<int> sigma(n, 0);
  std::vector<int> aromatic_bonds(n, 0);
  std::vector<bool> needs(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (g.atom(i) == AtomType::Pad) {
      out.reason = "padding slot in stripped graph";
      return out;
    }
    for (std::size_t j = 0; j < n; ++j) {
      switch (g.bond(i, j)) {
      case BondType::Zero:
        break;
      case BondType::Single:
        sigma[i] += 1;
        break;
      case BondType::Double:
        sigma[i] += 2;
        break;
      case BondType::Triple:
        sigma[i] += 3;
        break;
      case BondType::Aromatic:
        sigma[i] += 1;
        ++aromatic_bonds[i];
        break;
      }
    }
    out.aromatic[i] = aromatic_bonds[i] > 0;
    if (aromatic_bonds[i] == 1) {
      out.reason = "atom " + std::to_string(i) + " has a single aromatic bond";
      return out;
    }
    const auto v = detail::smallest_valence_at_least(g.atom(i), sigma[i]);
    if (!v) {
      out.reason = "atom " + std::to_string(i) + " exceeds its valence";
      return out;
    }
    needs[i] = aromatic_bonds[i] >= 2 && sigma[i] + 1 <= *v;
  }

  std::vector<int> partner(n, -1);
  if (!detail::kekule_match(g, needs, partner)) {
    out.reason = "aromatic system has no Kekule structure";
    return out;
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      int order = 0;
      switch (g.bond(i, j)) {
      case BondType::Zero:
        break;
      case BondType::Single:
        order = 1;
        break;
      case BondType::Double:
        order = 2;
        break;
      case BondType::Triple:
        order = 3;
        break;
      case BondType::Aromatic:
        order = partner[i] == static_cast<int>(j) ? 2 : 1;
        break;
      }
      out.kekule_orders[i * n + j] = order;
    }
    const int total = sigma[i] + (partner[i] >= 0 ? 1 : 0);
    const auto v = detail::smallest_valence_at_least(g.atom(i), total);
    if (!v) {
      out.reason = "atom " + std::to_string(i) + " exceeds its valence";
      return out;
    }
    out.implicit_hydrogens[i] = *v - total;
  }
  out.ok = true;
  return out;
}

inline bool is_connected(const MolecularGraph &stripped) {
  const std::size_t n = stripped.n_max();
  if (n == 0) return false;
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t w : stripped.neighbors(u)) {
      if (!seen[w]) {
        seen[w] = true;
        ++reached;
        stack.push_back(w);
      }
    }
  }
  return reached == n;
}

struct ValidityOptions {
  bool require_connected = true;
};

inline bool is_valid(const MolecularGraph &g, ValidityOptions opts = {}) {
  const MolecularGraph s = strip_padding(g);
  if (s.n_max() == 0) return false;
  if (!analyze_valence(s).ok) return false;
  return !opts.require_connected || is_connected(s);
}

// ---------------------------------------------------------------------------
// Canonical labeling
// ---------------------------------------------------------------------------

/// Canonical node order and the byte-string key derived from it. order[k] is
/// the stripped-graph index placed at canonical position k.
struct CanonicalForm {
  std::vector<std::size_t> order;
  std::string key;
};

namespace detail {

class Canonicalizer {
 public:
  explicit Canonicalizer(const MolecularGraph &g) : g_(g), n_(g.n_max()) {
    twin_.assign(n_, std::vector<bool>(n_, false));
    for (std::size_t u = 0; u < n_; ++u) {
      for (std::size_t v = u + 1; v < n_; ++v) {
        const bool twins = are_twins(u, v);
        twin_[u][v] = twin_[v][u] = twins;
      }
    }
  }

  CanonicalForm run() {
    std::vector<int> colors(n_);
    for (std::size_t i = 0; i < n_; ++i) colors[i] = static_cast<int>(g_.atom(i));
    search(std::move(colors));
    return best_;
  }

 private:
  // Swapping twins is an automorphism that fixes every other node.
  bool are_twins(std::size_t u, std::size_t v) const {
    if (g_.atom(u) != g_.atom(v)) return false;
    for (std::size_t w = 0; w < n_; ++w) {
      if (w == u || w == v) continue;
      if (g_.bond(u, w) != g_.bond(v, w)) return false;
    }
    return true;
  }

  void refine(std::vector<int> &colors) const {
    using Signature = std::pair<int, std::vector<std::pair<int, int>>>;
    std::size_t classes = count_classes(colors);
    while (true) {
      std::vector<Signature> sigs(n_);
      for (std::size_t v = 0; v < n_; ++v) {
        sigs[v].first = colors[v];
        for (std::size_t w = 0; w < n_; ++w) {
          const BondType b = g_.bond(v, w);
          if (b != BondType::Zero) {
            sigs[v].second.emplace_back(static_cast<int>(b), colors[w]);
          }
        }
        std::sort(sigs[v].second.begin(), sigs[v].second.end());
      }
      std::vector<Signature> sorted = sigs;
      std::sort(sorted.begin(), sorted.end());
      sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
      for (std::size_t v = 0; v < n_; ++v) {
        colors[v] = static_cast<int>(
            std::lower_bound(sorted.begin(), sorted.end(), sigs[v])
            - sorted.begin());
      }
      const std::size_t now = sorted.size();
      if (now == classes) return;
      classes = now;
    }
  }

  static std::size_t count_classes(const std::vector<int> &colors) {
    std::vector<int> c = colors;
    std::sort(c.begin(), c.end());
    return static_cast<std::size_t>(std::unique(c.begin(), c.end()) - c.begin());
  }

  void search(std::vector<int> colors) {
    refine(colors);
    if (count_classes(colors) == n_) {
      std::vector<std::size_t> order(n_);
      for (std::size_t v = 0; v < n_; ++v) order[static_cast<std::size_t>(colors[v])] = v;
      std::string key = encode(order);
      if (!have_best_ || key < best_.key) {
        best_.key = std::move(key);
        best_.order = std::move(order);
        have_best_ = true;
      }
      return;
    }
    // Target cell: smallest color shared by more than one node.
    std::vector<std::size_t> count(n_, 0);
    for (int c : colors) ++count[static_cast<std::size_t>(c)];
    int target = -1;
    for (std::size_t c = 0; c < n_; ++c) {
      if (count[c] > 1) {
        target = static_cast<int>(c);
        break;
      }
    }
    std::vector<std::size_t> tried;
    for (std::size_t v = 0; v < n_; ++v) {
      if (colors[v] != target) continue;
      const bool redundant = std::any_of(tried.begin(), tried.end(),
                                         [&](std::size_t u) { return twin_[u][v]; });
      if (redundant) continue;
      tried.push_back(v);
      std::vector<int> next(n_);
      for (std::size_t u = 0; u < n_; ++u) {
        next[u] = 2 * colors[u] + ((colors[u] == target && u != v) ? 1 : 0);
      }
      search(std::move(next));
    }
  }

  std::string encode(const std::vector<std::size_t> &order) const {
    std::string key;
    key.reserve(1 + n_ + n_ * (n_ - 1) / 2);
    key.push_back(static_cast<char>(n_));
    for (std::size_t k = 0; k < n_; ++k) {
      key.push_back(static_cast<char>('A' + static_cast<int>(g_.atom(order[k]))));
    }
    for (std::size_t k = 0; k < n_; ++k) {
      for (std::size_t l = k + 1; l < n_; ++l) {
        key.push_back(
            static_cast<char>('0' + static_cast<int>(g_.bond(order[k], order[l]))));
      }
    }
    return key;
  }

  const MolecularGraph &g_;
  std::size_t n_;
  std::vector<std::vector<bool>> twin_;
  CanonicalForm best_;
  bool have_best_ = false;
};

}  // namespace detail

/// Canonical form of the padding-stripped graph. Keys are equal exactly when
/// the graphs are isomorphic under type-preserving relabeling.
inline CanonicalForm canonical_form(const MolecularGraph &g,
                                    std::size_t n_max = kDefaultMaxAtoms) {
  const MolecularGraph s = strip_padding(g);
  if (s.n_max() > n_max) {
    throw GraphTooLarge("canonical_key: " + std::to_string(s.n_max())
                        + " atoms exceed n_max " + std::to_string(n_max));
  }
  if (s.n_max() == 0) return CanonicalForm{{}, std::string(1, '\0')};
  return detail::Canonicalizer(s).run();
}

inline std::string canonical_key(const MolecularGraph &g,
                                 std::size_t n_max = kDefaultMaxAtoms) {
  return canonical_form(g, n_max).key;
}

/// Formula label: C then H then other elements alphabetically when carbon is
/// present; otherwise heavy elements alphabetically followed by H ("NH3").
inline std::string molecular_formula(const MolecularGraph &g) {
  const MolecularGraph s = strip_padding(g);
  if (s.n_max() == 0) throw InvalidGraph("molecular_formula of an empty graph");
  const ValenceAnalysis va = analyze_valence(s);
  if (!va.ok) throw InvalidGraph("molecular_formula: " + va.reason);

  std::map<std::string, int> heavy;
  int hydrogens = 0;
  for (std::size_t i = 0; i < s.n_max(); ++i) {
    ++heavy[std::string(atom_symbol(s.atom(i)))];
    hydrogens += va.implicit_hydrogens[i];
  }
  auto term = [](std::string_view sym, int count) {
    std::string t(sym);
    if (count > 1) t += std::to_string(count);
    return t;
  };
  std::string out;
  const auto carbon = heavy.find("C");
  if (carbon != heavy.end()) {
    out += term("C", carbon->second);
    if (hydrogens > 0) out += term("H", hydrogens);
    heavy.erase(carbon);
    for (const auto &[sym, count] : heavy) out += term(sym, count);
  } else {
    for (const auto &[sym, count] : heavy) out += term(sym, count);
    if (hydrogens > 0) out += term("H", hydrogens);
  }
  return out;
}

}  // namespace molfedgan

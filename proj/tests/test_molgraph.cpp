//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <vector>

#include "molfedgan/molgraph.hpp"
#include "molfedgan/smiles.hpp"
#include "support/oracles.hpp"

using namespace molfedgan;
namespace mt = molfedgan::testing;

namespace {

MolecularGraph chain(std::initializer_list<AtomType> atoms, BondType bond = BondType::Single,
                     std::size_t n_max = kDefaultMaxAtoms) {
  MolecularGraph g(n_max);
  std::size_t prev = 0, k = 0;
  for (AtomType a : atoms) {
    const std::size_t i = g.add_atom(a);
    if (k++ > 0) g.set_bond(prev, i, bond);
    prev = i;
  }
  return g;
}

/// Union-find over non-ZERO edges of the non-PAD slots.
std::size_t component_count(const MolecularGraph &g) {
  std::vector<std::size_t> parent(g.n_max());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < g.n_max(); ++i) {
    for (std::size_t j = i + 1; j < g.n_max(); ++j) {
      if (g.bond(i, j) != BondType::Zero) parent[find(i)] = find(j);
    }
  }
  std::set<std::size_t> roots;
  for (std::size_t i = 0; i < g.n_max(); ++i) {
    if (g.atom(i) != AtomType::Pad) roots.insert(find(i));
  }
  return roots.size();
}

}  // namespace

TEST(MolecularGraph, Invariants) {
  MolecularGraph g(4);
  EXPECT_TRUE(g.all_padding());
  const auto a = g.add_atom(AtomType::C), b = g.add_atom(AtomType::O);
  g.set_bond(a, b, BondType::Double);
  EXPECT_EQ(g.bond(b, a), BondType::Double);
  EXPECT_EQ(g.bond(a, a), BondType::Zero);
  EXPECT_THROW(g.set_bond(a, a, BondType::Single), InvalidGraph);
  EXPECT_THROW(g.set_bond(a, 3, BondType::Single), InvalidGraph);
  EXPECT_THROW(g.set_bond(a, 9, BondType::Single), InvalidGraph);
  g.set_atom(b, AtomType::Pad);
  EXPECT_EQ(g.bond(a, b), BondType::Zero);
  g.add_atom(AtomType::N);
  g.add_atom(AtomType::N);
  g.add_atom(AtomType::N);
  EXPECT_THROW(g.add_atom(AtomType::N), GraphTooLarge);
  EXPECT_EQ(atom_symbol(AtomType::Pad), "*");
  EXPECT_EQ(bond_order(BondType::Aromatic), 1.5);
  EXPECT_EQ(kAllAtomTypes.size(), 10u);
}

TEST(StripPadding, Examples) {
  MolecularGraph g(10);
  g.set_atom(2, AtomType::C);
  g.set_atom(5, AtomType::C);
  g.set_atom(9, AtomType::O);
  g.set_bond(2, 5, BondType::Single);
  g.set_bond(5, 9, BondType::Double);
  const auto s = strip_padding(g);
  ASSERT_EQ(s.n_max(), 3u);
  EXPECT_EQ(s.atom(2), AtomType::O);
  EXPECT_EQ(s.bond(0, 1), BondType::Single);
  EXPECT_EQ(s.bond(1, 2), BondType::Double);
  EXPECT_EQ(strip_padding(s), s);
  EXPECT_EQ(strip_padding(MolecularGraph(10)).n_max(), 0u);
  Rng rng = derive_rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto r = mt::random_graph(8, rng);
    EXPECT_EQ(strip_padding(strip_padding(r)), strip_padding(r));
    EXPECT_EQ(pad_to(strip_padding(r), 8).atom_count(), r.atom_count());
  }
}

TEST(Validity, Examples) {
  EXPECT_TRUE(is_valid(chain({AtomType::C})));
  MolecularGraph star(6);
  const auto c = star.add_atom(AtomType::C);
  for (int i = 0; i < 5; ++i) star.set_bond(c, star.add_atom(AtomType::C), BondType::Single);
  EXPECT_FALSE(is_valid(star));

  MolecularGraph pairs(6);
  pairs.set_atom(0, AtomType::C);
  pairs.set_atom(1, AtomType::C);
  pairs.set_atom(3, AtomType::C);
  pairs.set_atom(4, AtomType::C);
  pairs.set_bond(0, 1, BondType::Single);
  pairs.set_bond(3, 4, BondType::Single);
  EXPECT_EQ(component_count(pairs), 2u);
  EXPECT_FALSE(is_valid(pairs));
  EXPECT_TRUE(is_valid(pairs, ValidityOptions{false}));

  EXPECT_FALSE(is_valid(MolecularGraph(10)));
  EXPECT_TRUE(is_valid(parse_smiles("c1ccccc1")));
  EXPECT_TRUE(is_valid(parse_smiles("c1ccncc1")));
  EXPECT_TRUE(is_valid(parse_smiles("c1ccoc1")));
  EXPECT_TRUE(is_valid(parse_smiles("OS(=O)(=O)O")));
  EXPECT_TRUE(is_valid(parse_smiles("OP(=O)(O)O")));
  EXPECT_FALSE(is_valid(parse_smiles("C=O=C=C")));
  EXPECT_FALSE(is_valid(parse_smiles("FF(F)")));
  EXPECT_FALSE(is_valid(chain({AtomType::C, AtomType::C}, BondType::Aromatic)));
}

TEST(Validity, ConnectivityMatchesUnionFind) {
  Rng rng = derive_rng(2);
  for (int i = 0; i < 200; ++i) {
    MolecularGraph g(8);
    std::uniform_int_distribution<int> type(0, 2), coin(0, 5);
    for (std::size_t k = 0; k < 6; ++k) g.set_atom(k, static_cast<AtomType>(type(rng)));
    for (std::size_t a = 0; a < 6; ++a) {
      for (std::size_t b = a + 1; b < 6; ++b) {
        if (coin(rng) == 0) g.set_bond(a, b, BondType::Single);
      }
    }
    const bool valence_ok = is_valid(g, ValidityOptions{false});
    EXPECT_EQ(is_valid(g), valence_ok && component_count(g) == 1);
  }
}

TEST(Validity, ImplicitHydrogensUseSmallestValence) {
  const auto a = analyze_valence(strip_padding(parse_smiles("CS(C)=O")));
  ASSERT_TRUE(a.ok);
  EXPECT_EQ(a.implicit_hydrogens[1], 0);  // S at valence 4
  const auto b = analyze_valence(strip_padding(parse_smiles("CS")));
  EXPECT_EQ(b.implicit_hydrogens[1], 1);  // S at valence 2
  const auto c = analyze_valence(strip_padding(parse_smiles("c1ccccc1")));
  for (int h : c.implicit_hydrogens) EXPECT_EQ(h, 1);
  for (bool ar : c.aromatic) EXPECT_TRUE(ar);
}

TEST(Validity, PermutationInvariant) {
  Rng rng = derive_rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto g = mt::random_graph(7, rng);
    EXPECT_EQ(is_valid(g), is_valid(mt::shuffle_slots(g, rng)));
  }
}

TEST(CanonicalKey, Examples) {
  const auto co = chain({AtomType::C, AtomType::O});
  const auto oc = chain({AtomType::O, AtomType::C});
  EXPECT_EQ(canonical_key(co), canonical_key(oc));
  EXPECT_NE(canonical_key(co), canonical_key(chain({AtomType::C, AtomType::O}, BondType::Double)));
  EXPECT_NE(canonical_key(co), canonical_key(chain({AtomType::C, AtomType::N})));

  const auto cco = chain({AtomType::C, AtomType::C, AtomType::O}, BondType::Single, 3);
  std::vector<std::size_t> perm = {0, 1, 2};
  std::set<std::string> keys;
  do {
    keys.insert(canonical_key(mt::permute_slots(cco, perm)));
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_EQ(keys.size(), 1u);
  EXPECT_THROW(canonical_key(chain({AtomType::C, AtomType::C, AtomType::C}), 2), GraphTooLarge);
}

TEST(CanonicalKey, ExhaustivePermutationInvariance) {
  Rng rng = derive_rng(4);
  for (int trial = 0; trial < 15; ++trial) {
    const auto g = mt::random_graph(6, rng, false);
    const std::string key = canonical_key(g);
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      ASSERT_EQ(canonical_key(mt::permute_slots(g, perm)), key);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST(CanonicalKey, EqualExactlyWhenIsomorphic) {
  Rng rng = derive_rng(5);
  std::size_t iso = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const auto a = mt::random_graph(5, rng);
    const auto b = trial % 3 == 0 ? mt::shuffle_slots(a, rng) : mt::random_graph(5, rng);
    const bool same = mt::naive::isomorphic(a, b);
    iso += same;
    EXPECT_EQ(canonical_key(a) == canonical_key(b), same);
  }
  EXPECT_GT(iso, 100u);
  // Regular graphs where colour refinement alone cannot separate the
  // classes: a 6-ring versus two 3-rings.
  MolecularGraph ring(6), triangles(6);
  for (std::size_t i = 0; i < 6; ++i) {
    ring.set_atom(i, AtomType::C);
    triangles.set_atom(i, AtomType::C);
  }
  for (std::size_t i = 0; i < 6; ++i) ring.set_bond(i, (i + 1) % 6, BondType::Single);
  for (std::size_t base : {0u, 3u}) {
    for (std::size_t i = 0; i < 3; ++i) {
      triangles.set_bond(base + i, base + (i + 1) % 3, BondType::Single);
    }
  }
  EXPECT_NE(canonical_key(ring), canonical_key(triangles));
}

TEST(Formula, Examples) {
  EXPECT_EQ(molecular_formula(chain({AtomType::C})), "CH4");
  EXPECT_EQ(molecular_formula(chain({AtomType::N})), "NH3");
  EXPECT_EQ(molecular_formula(chain({AtomType::C, AtomType::O}, BondType::Double)), "CH2O");
  EXPECT_EQ(molecular_formula(parse_smiles("CCO")), "C2H6O");
  EXPECT_EQ(molecular_formula(parse_smiles("Clc1ccccc1")), "C6H5Cl");
  EXPECT_EQ(molecular_formula(parse_smiles("ClCBr")), "CH2BrCl");
  EXPECT_EQ(molecular_formula(parse_smiles("OO")), "O2H2");
  EXPECT_EQ(molecular_formula(parse_smiles("FF")), "F2");
  EXPECT_THROW(molecular_formula(MolecularGraph(3)), InvalidGraph);
}

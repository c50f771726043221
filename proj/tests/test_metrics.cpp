//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <set>
#include <string>
#include <vector>

#include "molfedgan/metrics.hpp"
#include "molfedgan/smiles.hpp"
#include "support/metric_oracles.hpp"

using namespace molfedgan;
namespace naive = molfedgan::testing::naive;
namespace mt = molfedgan::testing;

namespace {

MolecularGraph mol(const char *smiles) { return parse_smiles(smiles); }

std::vector<Fingerprint> fingerprints(const std::vector<MolecularGraph> &gs) {
  std::vector<Fingerprint> out;
  for (const auto &g : gs) out.push_back(fingerprint(g));
  return out;
}

Fingerprint bits(std::initializer_list<std::size_t> on, std::size_t width = 64) {
  Fingerprint fp(width);
  for (auto b : on) fp.set(b);
  return fp;
}

}  // namespace

TEST(Fingerprint, PermutationInvariant) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const auto g = mt::random_valid_molecule(10, rng);
    EXPECT_EQ(fingerprint(g), fingerprint(mt::shuffle_slots(g, rng)));
  }
}

TEST(Fingerprint, ElementAndTopologyMatter) {
  EXPECT_NE(fingerprint(mol("C")), fingerprint(mol("N")));
  EXPECT_NE(fingerprint(mol("CCO")), fingerprint(mol("COC")));
  EXPECT_LE(fingerprint(mol("c1ccccc1O")).count(), kDefaultFingerprintWidth);
}

TEST(Fingerprint, RadiusOneInvariantsByHand) {
  // C-C-O: terminal C (deg 1, order 2), middle C (deg 2, order 4), O (deg 1, order 2).
  const MolecularGraph g = strip_padding(mol("CCO"));
  const auto r0 = initial_atom_invariants(g);
  auto expected = [](AtomType t, std::uint64_t deg, std::uint64_t order2) {
    return hash_combine(hash_combine(hash_combine(kFingerprintSeed, static_cast<std::uint64_t>(t)),
                                     deg),
                        order2);
  };
  EXPECT_EQ(r0[0], expected(AtomType::C, 1, 2));
  EXPECT_EQ(r0[1], expected(AtomType::C, 2, 4));
  EXPECT_EQ(r0[2], expected(AtomType::O, 1, 2));
  const auto r1 = refine_atom_invariants(g, r0, 1);
  const std::uint64_t single = static_cast<std::uint64_t>(BondType::Single);
  std::uint64_t h = hash_combine(hash_combine(kFingerprintSeed, 1), r0[0]);
  h = hash_combine(hash_combine(h, single), r0[1]);
  EXPECT_EQ(r1[0], h);

  Fingerprint fp(kDefaultFingerprintWidth);
  for (auto x : r0) fp.set(x % kDefaultFingerprintWidth);
  for (auto x : r1) fp.set(x % kDefaultFingerprintWidth);
  for (auto x : refine_atom_invariants(g, r1, 2)) fp.set(x % kDefaultFingerprintWidth);
  EXPECT_EQ(fp, fingerprint(g));
}

TEST(Fingerprint, InvalidGraphRejected) {
  MolecularGraph g(4);
  EXPECT_THROW(fingerprint(g), InvalidGraph);
  g.set_atom(0, AtomType::F);
  g.set_atom(1, AtomType::F);
  g.set_atom(2, AtomType::F);
  g.set_bond(0, 1, BondType::Single);
  g.set_bond(1, 2, BondType::Single);
  EXPECT_THROW(fingerprint(g), InvalidGraph);
}

TEST(Tanimoto, SetArithmetic) {
  EXPECT_EQ(tanimoto(bits({1, 5}), bits({1, 5})), 1.0);
  EXPECT_EQ(tanimoto(bits({1, 2}), bits({3, 4})), 0.0);
  EXPECT_EQ(tanimoto(bits({1, 2}), bits({1, 2, 3, 4})), 0.5);
  EXPECT_EQ(tanimoto(bits({}), bits({})), 1.0);
  EXPECT_THROW(tanimoto(bits({}, 64), bits({}, 128)), WidthMismatch);
}

TEST(SetMetrics, Examples) {
  std::vector<MolecularGraph> ten;
  for (int i = 0; i < 7; ++i) ten.push_back(mol("CCO"));
  for (int i = 0; i < 3; ++i) ten.emplace_back(10);
  EXPECT_DOUBLE_EQ(validity(ten), 70.0);
  EXPECT_EQ(validity({}), 0.0);

  const std::vector<MolecularGraph> aab = {mol("CCO"), mol("OCC"), mol("CC")};
  EXPECT_NEAR(uniqueness(aab), 200.0 / 3.0, 1e-12);
  const std::vector<MolecularGraph> same(4, mol("C"));
  EXPECT_DOUBLE_EQ(uniqueness(same), 25.0);

  std::set<std::string> ref = {canonical_key(mol("CCO"))};
  EXPECT_DOUBLE_EQ(novelty(aab, ref), 100.0 / 3.0);
  EXPECT_DOUBLE_EQ(novelty(aab, {}), 100.0);
}

TEST(SetMetrics, IntDivHandCases) {
  const std::vector<Fingerprint> disjoint = {bits({1}), bits({2})};
  EXPECT_EQ(int_div(disjoint, 1), 0.5);
  const std::vector<Fingerprint> same = {bits({1, 2}), bits({1, 2}), bits({1, 2})};
  EXPECT_EQ(int_div(same, 1), 0.0);
  EXPECT_EQ(int_div(same, 2), 0.0);
  EXPECT_THROW(int_div(std::vector<Fingerprint>{}, 1), EmptySet);
}

TEST(SetMetrics, SnnHandCases) {
  const std::vector<Fingerprint> gen = {bits({1, 2}), bits({3})};
  EXPECT_EQ(snn(gen, gen), 1.0);
  const std::vector<Fingerprint> one = {bits({1, 2, 3, 4})};
  EXPECT_EQ(snn(gen, one), (0.5 + 0.25) / 2);
  EXPECT_THROW(snn(gen, std::vector<Fingerprint>{}), EmptyReference);
}

TEST(SetMetrics, MatchBruteForceOracles) {
  Rng rng(2026);
  for (int set = 0; set < 20; ++set) {
    const auto gen = mt::random_molecule_set(50, 8, rng);
    const auto ref = mt::random_molecule_set(30, 8, rng);
    const auto fg = fingerprints(gen);
    const auto fr = fingerprints(ref);
    EXPECT_EQ(int_div(fg, 1), naive::int_div(fg, 1));
    EXPECT_EQ(int_div(fg, 2), naive::int_div(fg, 2));
    EXPECT_EQ(snn(fg, fr), naive::snn(fg, fr));
    EXPECT_EQ(uniqueness(gen), naive::uniqueness(gen));
    std::set<std::string> keys;
    for (const auto &g : ref) keys.insert(canonical_key(g));
    EXPECT_EQ(novelty(gen, keys), naive::novelty(gen, ref));
    for (std::size_t i = 0; i + 1 < fg.size(); ++i) {
      EXPECT_EQ(tanimoto(fg[i], fg[i + 1]), naive::tanimoto(fg[i], fg[i + 1]));
    }
  }
}

TEST(SetMetrics, BoundsAndDuplicateMonotonicity) {
  Rng rng(44);
  for (int set = 0; set < 20; ++set) {
    auto gen = mt::random_molecule_set(20, 8, rng);
    auto fg = fingerprints(gen);
    for (int p : {1, 2}) {
      const double d = int_div(fg, p);
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, 1.0);
    }
    const double s = snn(fg, fg);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    const double before = int_div(fg, 1);
    std::size_t central = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < fg.size(); ++i) {
      double row = 0.0;
      for (const auto &other : fg) row += tanimoto(fg[i], other);
      if (row > best) best = row, central = i;
    }
    auto with_copy = fg;
    with_copy.push_back(fg[central]);
    EXPECT_LE(int_div(with_copy, 1), before + 1e-12);
    auto doubled = fg;
    doubled.insert(doubled.end(), fg.begin(), fg.end());
    EXPECT_NEAR(int_div(doubled, 1), before, 1e-12);
  }
}

TEST(SetMetrics, CopyOfOutlierRaisesIntDiv) {
  const std::vector<Fingerprint> fg = {bits({1, 2}), bits({1, 2}), bits({1, 2}), bits({9})};
  auto with_copy = fg;
  with_copy.push_back(bits({9}));
  EXPECT_GT(int_div(with_copy, 1), int_div(fg, 1));
}

TEST(SetMetrics, InvariantUnderNodePermutation) {
  Rng rng(99);
  const auto gen = mt::random_molecule_set(20, 8, rng);
  const auto ref = mt::random_molecule_set(20, 8, rng);
  std::vector<MolecularGraph> gen2, ref2;
  for (const auto &g : gen) gen2.push_back(mt::shuffle_slots(g, rng));
  for (const auto &g : ref) ref2.push_back(mt::shuffle_slots(g, rng));
  EXPECT_EQ(int_div(fingerprints(gen), 2), int_div(fingerprints(gen2), 2));
  EXPECT_EQ(snn(fingerprints(gen), fingerprints(ref)), snn(fingerprints(gen2), fingerprints(ref2)));
}

TEST(LogP, HandSummedContributions) {
  // ethanol: CH3 (no hetero neighbour), CH2 (next to O), OH
  const double ethanol = (0.1441 + 3 * 0.1230) + (-0.2035 + 2 * 0.1230) + (-0.2893 - 0.2677);
  EXPECT_NEAR(logp_raw(mol("CCO")), ethanol, 1e-6);
  const double benzene = 6 * (0.1581 + 0.1230);
  EXPECT_NEAR(logp_raw(mol("c1ccccc1")), benzene, 1e-6);
  // chlorobenzene: one substituted aromatic C, five CH, Cl
  const double chloro = 5 * (0.1581 + 0.1230) - 0.0516 + 0.6895;
  EXPECT_NEAR(logp_raw(mol("Clc1ccccc1")), chloro, 1e-6);
}

TEST(LogP, Normalization) {
  EXPECT_EQ(normalize_logp(-2.12), 0.0);
  EXPECT_EQ(normalize_logp(6.26), 1.0);
  EXPECT_EQ(normalize_logp(-50.0), 0.0);
  EXPECT_EQ(normalize_logp(50.0), 1.0);
  EXPECT_NEAR(normalize_logp(0.0, {-1.0, 1.0}), 0.5, 1e-15);
  const std::vector<MolecularGraph> one = {mol("CCO")};
  EXPECT_NEAR(logp(one), normalize_logp(logp_raw(one[0])), 1e-15);
}

TEST(Evaluate, EmptyAndSelfReference) {
  MetricsConfig cfg;
  const ReferenceSet none;
  const auto empty = evaluate({}, none, cfg);
  EXPECT_EQ(empty.validity, 0.0);
  EXPECT_FALSE(empty.warnings.empty());
  EXPECT_FALSE(empty.qed.has_value());

  const std::vector<MolecularGraph> ref = {mol("CCO"), mol("c1ccccc1"), mol("CN"), mol("OCC=O")};
  const ReferenceSet rs = make_reference(ref, cfg);
  const auto self = evaluate(ref, rs, cfg);
  EXPECT_EQ(self.validity, 100.0);
  EXPECT_EQ(self.novelty, 0.0);
  EXPECT_EQ(self.snn, 1.0);
  EXPECT_EQ(self.uniqueness, 100.0);
}

TEST(Evaluate, ValidSubsetAndPadFraction) {
  MetricsConfig cfg;
  std::vector<MolecularGraph> gen = {mol("CCO"), mol("CCO"), MolecularGraph(10), MolecularGraph(10)};
  const auto r = evaluate(gen, make_reference(std::vector<MolecularGraph>{mol("CC")}, cfg), cfg);
  EXPECT_EQ(r.validity, 50.0);
  EXPECT_EQ(r.all_pad_fraction, 50.0);
  EXPECT_EQ(r.uniqueness, 50.0);
  EXPECT_EQ(r.novelty, 100.0);
  EXPECT_EQ(r.int_div_1, 0.0);
}

TEST(Evaluate, ReferenceSubsampleIsSeeded) {
  const auto a = reference_subsample(5000, 1000, 3);
  EXPECT_EQ(a, reference_subsample(5000, 1000, 3));
  EXPECT_NE(a, reference_subsample(5000, 1000, 4));
  EXPECT_EQ(a.size(), 1000u);
  EXPECT_EQ(reference_subsample(10, 1000, 3).size(), 10u);
}

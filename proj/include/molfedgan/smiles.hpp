//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

// SMILES subset reader/writer.
//
// Accepted grammar: organic-subset atoms C N O F P S Cl Br I, aromatic
// c n o p s, bonds - = # :, branches, ring closures 1-9 and %nn. Bracket
// atoms, charges, explicit hydrogens, stereo marks and '.' are rejected.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "molfedgan/errors.hpp"
#include "molfedgan/molgraph.hpp"

namespace molfedgan {

enum class SmilesErrorKind {
  EmptyInput,
  UnsupportedAtom,
  UnexpectedCharacter,
  UnbalancedBranch,
  DanglingRingClosure,
  RingClosureConflict,
  DanglingBond,
  TooManyAtoms,
};

inline std::string_view to_string(SmilesErrorKind kind) {
  switch (kind) {
  case SmilesErrorKind::EmptyInput:
    return "EmptyInput";
  case SmilesErrorKind::UnsupportedAtom:
    return "UnsupportedAtom";
  case SmilesErrorKind::UnexpectedCharacter:
    return "UnexpectedCharacter";
  case SmilesErrorKind::UnbalancedBranch:
    return "UnbalancedBranch";
  case SmilesErrorKind::DanglingRingClosure:
    return "DanglingRingClosure";
  case SmilesErrorKind::RingClosureConflict:
    return "RingClosureConflict";
  case SmilesErrorKind::DanglingBond:
    return "DanglingBond";
  case SmilesErrorKind::TooManyAtoms:
    return "TooManyAtoms";
  }
  return "Unknown";
}

class SmilesError : public Error {
 public:
  SmilesError(SmilesErrorKind kind, std::size_t position)
      : Error(std::string(to_string(kind)) + " at position "
              + std::to_string(position)),
        kind_(kind), position_(position) { }

  SmilesErrorKind kind() const noexcept { return kind_; }
  std::size_t position() const noexcept { return position_; }

 private:
  SmilesErrorKind kind_;
  std::size_t position_;
};

namespace detail {

struct RingOpen {
  std::size_t atom;
  std::optional<BondType> bond;
  std::size_t position;
};

inline std::optional<BondType> bond_symbol(char c) {
  switch (c) {
  case '-':
    return BondType::Single;
  case '=':
    return BondType::Double;
  case '#':
    return BondType::Triple;
  case ':':
    return BondType::Aromatic;
  default:
    return std::nullopt;
  }
}

}  // namespace detail

/// Parses the subset grammar into a graph with n_max slots; atoms take slots in
/// reading order and the remaining slots are padding.
inline MolecularGraph parse_smiles(std::string_view text,
                                   std::size_t n_max = kDefaultMaxAtoms) {
  using K = SmilesErrorKind;
  if (text.empty()) throw SmilesError(K::EmptyInput, 0);

  MolecularGraph g(n_max);
  std::vector<bool> lower;
  std::size_t atoms = 0;
  std::optional<std::size_t> prev;
  std::vector<std::pair<std::size_t, std::size_t>> branches;  // atom, '(' pos
  std::optional<std::pair<BondType, std::size_t>> pending;
  std::map<int, detail::RingOpen> rings;

  auto default_bond = [&](std::size_t a, std::size_t b) {
    return (lower[a] && lower[b]) ? BondType::Aromatic : BondType::Single;
  };

  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    const std::size_t pos = i;

    std::optional<AtomType> atom;
    bool aromatic = false;
    std::size_t width = 1;
    switch (c) {
    case 'C':
      if (i + 1 < text.size() && text[i + 1] == 'l') {
        atom = AtomType::Cl;
        width = 2;
      } else {
        atom = AtomType::C;
      }
      break;
    case 'B':
      if (i + 1 < text.size() && text[i + 1] == 'r') {
        atom = AtomType::Br;
        width = 2;
      } else {
        throw SmilesError(K::UnsupportedAtom, pos);
      }
      break;
    case 'N': atom = AtomType::N; break;
    case 'O': atom = AtomType::O; break;
    case 'F': atom = AtomType::F; break;
    case 'P': atom = AtomType::P; break;
    case 'S': atom = AtomType::S; break;
    case 'I': atom = AtomType::I; break;
    case 'c': atom = AtomType::C; aromatic = true; break;
    case 'n': atom = AtomType::N; aromatic = true; break;
    case 'o': atom = AtomType::O; aromatic = true; break;
    case 'p': atom = AtomType::P; aromatic = true; break;
    case 's': atom = AtomType::S; aromatic = true; break;
    default:
      break;
    }

    if (atom) {
      if (atoms == n_max) throw SmilesError(K::TooManyAtoms, pos);
      const std::size_t idx = g.add_atom(*atom);
      lower.push_back(aromatic);
      ++atoms;
      if (prev) {
        const BondType b = pending ? pending->first : default_bond(*prev, idx);
        g.set_bond(*prev, idx, b);
      } else if (pending) {
        throw SmilesError(K::DanglingBond, pending->second);
      }
      pending.reset();
      prev = idx;
      i += width;
      continue;
    }

    if (std::isalpha(static_cast<unsigned char>(c)) || c == '[' || c == '*') {
      throw SmilesError(K::UnsupportedAtom, pos);
    }

    if (const auto b = detail::bond_symbol(c)) {
      if (!prev || pending) throw SmilesError(K::UnexpectedCharacter, pos);
      pending = std::make_pair(*b, pos);
      ++i;
      continue;
    }

    if (c == '(') {
      if (!prev || pending) throw SmilesError(K::UnexpectedCharacter, pos);
      branches.emplace_back(*prev, pos);
      ++i;
      continue;
    }

    if (c == ')') {
      if (branches.empty()) throw SmilesError(K::UnbalancedBranch, pos);
      if (pending) throw SmilesError(K::DanglingBond, pending->second);
      prev = branches.back().first;
      branches.pop_back();
      ++i;
      continue;
    }

    if (std::isdigit(static_cast<unsigned char>(c)) || c == '%') {
      int number = 0;
      if (c == '%') {
        if (i + 2 >= text.size()
            || !std::isdigit(static_cast<unsigned char>(text[i + 1]))
            || !std::isdigit(static_cast<unsigned char>(text[i + 2]))) {
          throw SmilesError(K::UnexpectedCharacter, pos);
        }
        number = (text[i + 1] - '0') * 10 + (text[i + 2] - '0');
        i += 3;
      } else {
        number = c - '0';
        ++i;
      }
      if (!prev) throw SmilesError(K::UnexpectedCharacter, pos);
      const auto open = rings.find(number);
      if (open == rings.end()) {
        rings.emplace(number,
                      detail::RingOpen{*prev,
                                       pending ? std::optional(pending->first)
                                               : std::nullopt,
                                       pos});
      } else {
        const std::size_t partner = open->second.atom;
        if (partner == *prev || g.bond(partner, *prev) != BondType::Zero) {
          throw SmilesError(K::RingClosureConflict, pos);
        }
        const auto b1 = open->second.bond;
        const auto b2 = pending ? std::optional(pending->first) : std::nullopt;
        if (b1 && b2 && *b1 != *b2) throw SmilesError(K::RingClosureConflict, pos);
        const BondType b = b1 ? *b1 : (b2 ? *b2 : default_bond(partner, *prev));
        g.set_bond(partner, *prev, b);
        rings.erase(open);
      }
      pending.reset();
      continue;
    }

    throw SmilesError(K::UnexpectedCharacter, pos);
  }

  if (pending) throw SmilesError(K::DanglingBond, pending->second);
  if (!branches.empty()) throw SmilesError(K::UnbalancedBranch, branches.back().second);
  if (!rings.empty()) {
    std::size_t first = rings.begin()->second.position;
    for (const auto &[n, r] : rings) first = std::min(first, r.position);
    throw SmilesError(K::DanglingRingClosure, first);
  }
  if (atoms == 0) throw SmilesError(K::EmptyInput, 0);
  return g;
}

namespace detail {

class SmilesWriter {
 public:
  SmilesWriter(const MolecularGraph &g, const std::vector<std::size_t> &rank)
      : g_(g), n_(g.n_max()), rank_(rank) {
    aromatic_.assign(n_, false);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        if (g_.bond(i, j) == BondType::Aromatic) aromatic_[i] = true;
      }
      const AtomType t = g_.atom(i);
      const bool has_lower = t == AtomType::C || t == AtomType::N
                             || t == AtomType::O || t == AtomType::P
                             || t == AtomType::S;
      lowercase_.push_back(aromatic_[i] && has_lower);
    }
    visit_.assign(n_, -1);
    parent_.assign(n_, -1);
  }

  std::string component(std::size_t start) {
    discover(start);
    std::string out;
    emit(start, out);
    return out;
  }

  bool visited(std::size_t v) const { return visit_[v] >= 0; }

 private:
  std::vector<std::size_t> sorted_neighbors(std::size_t u) const {
    auto nb = g_.neighbors(u);
    std::sort(nb.begin(), nb.end(),
              [&](std::size_t a, std::size_t b) { return rank_[a] < rank_[b]; });
    return nb;
  }

  void discover(std::size_t u) {
    visit_[u] = counter_++;
    for (std::size_t v : sorted_neighbors(u)) {
      if (static_cast<int>(v) == parent_[u]) continue;
      if (visit_[v] < 0) {
        parent_[v] = static_cast<int>(u);
        children_[u].push_back(v);
        discover(v);
      } else if (visit_[v] < visit_[u]) {
        // back edge to an ancestor: v opens, u closes
        ring_open_[v].push_back(u);
        ring_close_[u].push_back(v);
      }
    }
  }

  std::string symbol(std::size_t u) const {
    std::string s(atom_symbol(g_.atom(u)));
    if (lowercase_[u]) s[0] = static_cast<char>(std::tolower(s[0]));
    return s;
  }

  std::string bond_text(std::size_t u, std::size_t v) const {
    const bool both = lowercase_[u] && lowercase_[v];
    switch (g_.bond(u, v)) {
    case BondType::Single:
      return both ? "-" : "";
    case BondType::Double:
      return "=";
    case BondType::Triple:
      return "#";
    case BondType::Aromatic:
      return both ? "" : ":";
    case BondType::Zero:
      break;
    }
    return "";
  }

  static std::string digit_text(int d) {
    if (d < 10) return std::string(1, static_cast<char>('0' + d));
    return "%" + std::to_string(d);
  }

  void emit(std::size_t u, std::string &out) {
    out += symbol(u);
    std::vector<int> freed;
    for (std::size_t v : ring_close_[u]) {
      const auto key = std::make_pair(v, u);
      const int d = digits_.at(key);
      out += digit_text(d);
      freed.push_back(d);
    }
    auto openers = ring_open_[u];
    std::sort(openers.begin(), openers.end(),
              [&](std::size_t a, std::size_t b) { return visit_[a] < visit_[b]; });
    for (std::size_t v : openers) {
      int d = 1;
      while (in_use_.count(d)) ++d;
      in_use_.insert(d);
      digits_[std::make_pair(u, v)] = d;
      out += bond_text(u, v) + digit_text(d);
    }
    for (int d : freed) in_use_.erase(d);

    const auto &kids = children_[u];
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const bool last = k + 1 == kids.size();
      if (!last) out += '(';
      out += bond_text(u, kids[k]);
      emit(kids[k], out);
      if (!last) out += ')';
    }
  }

  const MolecularGraph &g_;
  std::size_t n_;
  const std::vector<std::size_t> &rank_;
  std::vector<bool> aromatic_;
  std::vector<bool> lowercase_;
  std::vector<int> visit_;
  std::vector<int> parent_;
  int counter_ = 0;
  std::map<std::size_t, std::vector<std::size_t>> children_;
  std::map<std::size_t, std::vector<std::size_t>> ring_open_;
  std::map<std::size_t, std::vector<std::size_t>> ring_close_;
  std::map<std::pair<std::size_t, std::size_t>, int> digits_;
  std::set<int> in_use_;
};

inline std::vector<std::size_t> canonical_ranks(const MolecularGraph &stripped) {
  const CanonicalForm form = canonical_form(stripped, stripped.n_max());
  std::vector<std::size_t> rank(stripped.n_max());
  for (std::size_t k = 0; k < form.order.size(); ++k) rank[form.order[k]] = k;
  return rank;
}

}  // namespace detail

/// Canonical SMILES of a valid graph: depth-first from the canonically first
/// atom, visiting neighbors in canonical order.
inline std::string write_smiles(const MolecularGraph &g) {
  const MolecularGraph s = strip_padding(g);
  if (!is_valid(s)) throw InvalidGraph("write_smiles: graph is not valid");
  const auto rank = detail::canonical_ranks(s);
  const auto start = static_cast<std::size_t>(
      std::min_element(rank.begin(), rank.end()) - rank.begin());
  return detail::SmilesWriter(s, rank).component(start);
}

/// Best-effort text for any graph (including invalid ones): fragments are
/// joined with '.', and an all-padding graph is written as "*".
inline std::string write_smiles_unchecked(const MolecularGraph &g) {
  const MolecularGraph s = strip_padding(g);
  if (s.n_max() == 0) return "*";
  const auto rank = detail::canonical_ranks(s);
  std::vector<std::size_t> by_rank(s.n_max());
  for (std::size_t i = 0; i < s.n_max(); ++i) by_rank[rank[i]] = i;
  detail::SmilesWriter writer(s, rank);
  std::string out;
  for (std::size_t start : by_rank) {
    if (writer.visited(start)) continue;
    if (!out.empty()) out += '.';
    out += writer.component(start);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset ingestion
// ---------------------------------------------------------------------------

struct SkipRecord {
  std::size_t line = 0;
  std::string reason;
  std::string raw;
};

struct Dataset {
  std::vector<MolecularGraph> graphs;
  std::vector<std::string> smiles;
  std::vector<std::size_t> lines;
  std::vector<SkipRecord> skipped;
  std::size_t records_scanned = 0;
};

/// Splits one CSV line, honoring double-quoted fields.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

struct LoadOptions {
  std::optional<std::string> column;
  std::size_t n_max = kDefaultMaxAtoms;
  ValidityOptions validity;
};

/// Reads newline-delimited SMILES, or CSV with a header row and a SMILES column
/// (named by `column`, or a column called "smiles" in any case). Records that
/// fail to parse, exceed n_max, or fail the valence check are skipped.
inline Dataset load_dataset(const std::filesystem::path &path,
                            const LoadOptions &opts = {}) {
  std::ifstream in(path);
  if (!std::filesystem::exists(path) || !in) {
    throw FileNotFound("dataset file not found: " + path.string());
  }
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }

  Dataset ds;
  std::optional<std::size_t> column_index;
  std::size_t first_record = 0;
  const bool csv = opts.column.has_value()
                   || (!lines.empty() && lines.front().find(',') != std::string::npos);
  if (csv) {
    if (lines.empty()) throw MissingColumn("empty CSV file: " + path.string());
    const auto header = split_csv_line(lines.front());
    auto lower = [](std::string s) {
      std::transform(s.begin(), s.end(), s.begin(),
                     [](unsigned char ch) { return std::tolower(ch); });
      return s;
    };
    for (std::size_t k = 0; k < header.size(); ++k) {
      const bool match = opts.column ? header[k] == *opts.column
                                     : lower(header[k]) == "smiles";
      if (match) {
        column_index = k;
        break;
      }
    }
    if (!column_index) {
      throw MissingColumn("column '" + opts.column.value_or("smiles")
                          + "' not found in " + path.string());
    }
    first_record = 1;
  }

  for (std::size_t ln = first_record; ln < lines.size(); ++ln) {
    std::string raw;
    if (column_index) {
      const auto fields = split_csv_line(lines[ln]);
      if (fields.size() == 1 && fields[0].empty()) continue;
      raw = *column_index < fields.size() ? fields[*column_index] : "";
    } else {
      const auto &l = lines[ln];
      const auto b = l.find_first_not_of(" \t");
      if (b == std::string::npos) continue;
      const auto e = l.find_first_of(" \t", b);
      raw = l.substr(b, e == std::string::npos ? std::string::npos : e - b);
    }
    ++ds.records_scanned;
    try {
      MolecularGraph g = parse_smiles(raw, opts.n_max);
      if (!is_valid(g, opts.validity)) {
        ds.skipped.push_back({ln + 1, "InvalidValence", raw});
        continue;
      }
      ds.graphs.push_back(std::move(g));
      ds.smiles.push_back(raw);
      ds.lines.push_back(ln + 1);
    } catch (const SmilesError &e) {
      ds.skipped.push_back({ln + 1, std::string(to_string(e.kind())), raw});
    }
  }
  return ds;
}

/// One line per skip: `<line-number>\t<reason>\t<raw-text>`.
inline void write_skip_log(const std::vector<SkipRecord> &skipped,
                           std::ostream &os) {
  for (const auto &s : skipped) {
    os << s.line << '\t' << s.reason << '\t' << s.raw << '\n';
  }
}

}  // namespace molfedgan

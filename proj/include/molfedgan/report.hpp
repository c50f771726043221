//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

// Report serialization: JSON documents and the fixed-width results table.

#pragma once

#include <array>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "molfedgan/gan.hpp"
#include "molfedgan/metrics.hpp"

namespace molfedgan {

struct RunMetadata {
  std::string dataset;
  std::vector<std::size_t> generator_dims;
  DiscriminatorDims discriminator_dims;
  std::size_t num_clients = 1;
  double dropout_gen = 0.0;
  double dropout_disc = 0.0;
  std::uint64_t seed = 0;
  std::size_t round = 0;
};

inline nlohmann::ordered_json report_json(const MetricsReport &r, const RunMetadata &meta) {
  nlohmann::ordered_json j;
  j["dataset"] = meta.dataset;
  j["generator_dims"] = format_dims_list(meta.generator_dims);
  j["discriminator_dims"] = format_discriminator_dims(meta.discriminator_dims);
  j["num_clients"] = meta.num_clients;
  j["dropout_gen"] = meta.dropout_gen;
  j["dropout_disc"] = meta.dropout_disc;
  j["seed"] = meta.seed;
  j["round"] = meta.round;
  j["generated"] = r.generated;
  j["valid"] = r.valid;
  j["validity"] = r.validity;
  j["uniqueness"] = r.uniqueness;
  j["novelty"] = r.novelty;
  j["int_div_1"] = r.int_div_1;
  j["int_div_2"] = r.int_div_2;
  j["snn"] = r.snn;
  j["asim"] = r.asim;
  j["logp_normalized"] = r.logp;
  j["qed"] = r.qed ? nlohmann::ordered_json(*r.qed) : nlohmann::ordered_json(nullptr);
  j["all_pad_fraction"] = r.all_pad_fraction;
  j["warnings"] = r.warnings;
  return j;
}

// ---------------------------------------------------------------------------
// Table
// ---------------------------------------------------------------------------

struct TableColumn {
  std::string_view title;
  std::size_t width;
};

inline constexpr std::array<TableColumn, 11> kTableColumns = {{
    {"Datasets", 24},
    {"Generator Dimension", 19},
    {"Discriminator Dimension", 23},
    {"Number of Clients", 17},
    {"QED", 6},
    {"Diversity", 9},
    {"Validity", 8},
    {"Uniqueness", 10},
    {"Novelty", 7},
    {"LogP", 6},
    {"Similarity", 10},
}};

struct TableRow {
  std::string dataset;
  std::vector<std::size_t> generator_dims;
  DiscriminatorDims discriminator_dims;
  std::size_t num_clients = 1;
  MetricsReport report;
};

namespace detail {

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string table_line(const std::array<std::string, kTableColumns.size()> &cells,
                              bool right_align_numbers) {
  std::string out = "|";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const std::size_t w = kTableColumns[c].width;
    const std::string &s = cells[c];
    const std::string pad(s.size() < w ? w - s.size() : 0, ' ');
    out += ' ';
    out += right_align_numbers && c >= 3 ? pad + s : s + pad;
    out += " |";
  }
  return out + "\n";
}

}  // namespace detail

/// Column titles and the rule beneath them.
inline std::string table_header() {
  std::array<std::string, kTableColumns.size()> titles;
  std::string rule = "|";
  for (std::size_t c = 0; c < kTableColumns.size(); ++c) {
    titles[c] = std::string(kTableColumns[c].title);
    rule += std::string(kTableColumns[c].width + 2, '-') + "|";
  }
  return detail::table_line(titles, false) + rule + "\n";
}

/// Diversity is IntDiv_1 and Similarity is SNN; QED is not computed and
/// prints as "-".
inline std::string table_row(const TableRow &row) {
  const MetricsReport &r = row.report;
  return detail::table_line(
      {row.dataset, format_dims_list(row.generator_dims),
       format_discriminator_dims(row.discriminator_dims), std::to_string(row.num_clients),
       r.qed ? detail::fixed(*r.qed, 2) : std::string("-"), detail::fixed(r.int_div_1, 3),
       detail::fixed(r.validity, 1), detail::fixed(r.uniqueness, 1), detail::fixed(r.novelty, 1),
       detail::fixed(r.logp, 2), detail::fixed(r.snn, 4)},
      true);
}

inline std::string render_table(const std::vector<TableRow> &rows) {
  std::string out = table_header();
  for (const auto &row : rows) out += table_row(row);
  return out;
}

}  // namespace molfedgan

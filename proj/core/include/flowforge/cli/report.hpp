// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "flowforge/dynamics.hpp"
#include "flowforge/tensor.hpp"

namespace flowforge::cli {

/// Shortest decimal text that parses back to the same double.
std::string format_number(double v);
/// Parses the whole string as a double; throws ConfigError naming `what` otherwise.
double parse_number(const std::string& text, const std::string& what);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

/// RFC 4180: CRLF line endings, fields quoted when they hold a comma, quote or line break.
std::string to_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

struct ScatterSeries {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
};

/// SVG 1.1 scatter plot with axis ticks and a legend.
std::string scatter_svg(const std::string& title, std::span<const ScatterSeries> series);
/// Scatter series per condition label of an (N, 2) sample tensor.
std::vector<ScatterSeries> series_by_label(const Tensor& x, std::span<const int> y);

/// SVG 1.1 polyline plot.
std::string line_svg(const std::string& title, std::span<const double> x, std::span<const double> y);

struct DynamicsRow {
  std::string unit_id;
  dynamics::TrendFit fit;
  dynamics::Category category = dynamics::Category::l_to_l;
  double fluctuation = 0.0;
  bool fluctuating = false;
  double score = 0.0;
  int tier = 5;
};

/// Tier colours from tier 1 (deep blue, high preference) to tier 5 (dark orange).
inline constexpr std::array<const char*, 5> kTierPalette = {"#08306b", "#4292c6", "#bdbdbd", "#fd8d3c", "#a63603"};

CsvTable dynamics_table(std::span<const DynamicsRow> rows);
/// HTML page colouring each unit by tier, with category counts and the flagged units.
std::string dynamics_html(std::span<const DynamicsRow> rows, double l_mean, const dynamics::Thresholds& th);

}  // namespace flowforge::cli

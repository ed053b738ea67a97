// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowforge/cli/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flowforge/error.hpp"

namespace flowforge::cli {

std::string format_number(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw ContractError("format_number: buffer too small");
  return std::string(buf, p);
}

double parse_number(const std::string& text, const std::string& what) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw ConfigError(what + ": '" + text + "' is not a number");
  }
  return v;
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError("CSV has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void append_row(std::string& out, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i > 0) out += ',';
    out += quote(row[i]);
  }
  out += "\r\n";
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

/// About five round tick values covering [lo, hi].
std::vector<double> ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) out.push_back(t);
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  static constexpr double kWidth = 480, kHeight = 400, kLeft = 56, kRight = 16, kTop = 32, kBottom = 40;

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

Frame make_frame(double xmin, double xmax, double ymin, double ymax) {
  if (!(xmax > xmin)) {
    xmin -= 1;
    xmax += 1;
  }
  if (!(ymax > ymin)) {
    ymin -= 1;
    ymax += 1;
  }
  const double mx = 0.05 * (xmax - xmin), my = 0.05 * (ymax - ymin);
  return Frame{xmin - mx, xmax + mx, ymin - my, ymax + my};
}

void axes(std::ostringstream& os, const Frame& f, const std::string& title) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << Frame::kWidth << "\" height=\""
     << Frame::kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << Frame::kWidth / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << escape_xml(title)
     << "</text>\n";
  const double left = Frame::kLeft, right = Frame::kWidth - Frame::kRight;
  const double top = Frame::kTop, bottom = Frame::kHeight - Frame::kBottom;
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << right - left << "\" height=\"" << bottom - top
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : ticks(f.x0, f.x1)) {
    const double x = f.px(t);
    os << "<line x1=\"" << fixed(x, 2) << "\" y1=\"" << bottom << "\" x2=\"" << fixed(x, 2) << "\" y2=\"" << bottom + 4
       << "\" stroke=\"black\"/><text x=\"" << fixed(x, 2) << "\" y=\"" << bottom + 16 << "\" text-anchor=\"middle\">"
       << format_number(std::abs(t) < 1e-12 ? 0.0 : t) << "</text>\n";
  }
  for (double t : ticks(f.y0, f.y1)) {
    const double y = f.py(t);
    os << "<line x1=\"" << left - 4 << "\" y1=\"" << fixed(y, 2) << "\" x2=\"" << left << "\" y2=\"" << fixed(y, 2)
       << "\" stroke=\"black\"/><text x=\"" << left - 6 << "\" y=\"" << fixed(y + 4, 2) << "\" text-anchor=\"end\">"
       << format_number(std::abs(t) < 1e-12 ? 0.0 : t) << "</text>\n";
  }
}

}  // namespace

std::string to_csv(const CsvTable& table) {
  std::string out;
  append_row(out, table.header);
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw ContractError("CSV row width differs from header");
    append_row(out, row);
  }
  return out;
}

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t i = 0;
  auto end_record = [&] {
    record.push_back(field);
    records.push_back(record);
    record.clear();
    field.clear();
    field_started = false;
  };
  while (i < text.size()) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      ++i;
      continue;
    }
    if (c == '"') {
      if (field_started && !field.empty()) throw ConfigError("CSV: stray quote inside an unquoted field");
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      record.push_back(field);
      field.clear();
      field_started = false;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
    } else {
      field += c;
      field_started = true;
    }
    ++i;
  }
  if (quoted) throw ConfigError("CSV: unterminated quoted field");
  if (field_started || !record.empty()) end_record();
  if (records.empty()) throw ConfigError("CSV: missing header row");
  CsvTable table;
  table.header = records.front();
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw ConfigError("CSV: row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                        " fields, header has " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) { write_text(path, to_csv(table)); }

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path)); }

std::string scatter_svg(const std::string& title, std::span<const ScatterSeries> series) {
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const ScatterSeries& s : series) {
    for (double v : s.x) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
    for (double v : s.y) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
  }
  if (!std::isfinite(xmin)) xmin = ymin = -1, xmax = ymax = 1;
  const Frame f = make_frame(xmin, xmax, ymin, ymax);
  std::ostringstream os;
  axes(os, f, title);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const ScatterSeries& s = series[k];
    os << "<g fill=\"" << s.color << "\" fill-opacity=\"0.5\">\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      os << "<circle cx=\"" << fixed(f.px(s.x[i]), 2) << "\" cy=\"" << fixed(f.py(s.y[i]), 2) << "\" r=\"1.5\"/>\n";
    }
    os << "</g>\n";
    const double ly = Frame::kTop + 14 + 14 * static_cast<double>(k);
    os << "<circle cx=\"" << Frame::kWidth - 100 << "\" cy=\"" << ly - 4 << "\" r=\"4\" fill=\"" << s.color
       << "\"/><text x=\"" << Frame::kWidth - 92 << "\" y=\"" << ly << "\">" << escape_xml(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<ScatterSeries> series_by_label(const Tensor& x, std::span<const int> y) {
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  if (x.rank() != 2 || x.dim(1) < 2) throw ShapeError("scatter needs an (N, 2) tensor");
  if (y.size() != x.dim(0)) throw ShapeError("scatter label count differs from rows");
  std::vector<int> labels(y.begin(), y.end());
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  std::vector<ScatterSeries> out;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    ScatterSeries s{"condition " + std::to_string(labels[k]), colors[k % 10], {}, {}};
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] != labels[k]) continue;
      s.x.push_back(x[i * x.dim(1)]);
      s.y.push_back(x[i * x.dim(1) + 1]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string line_svg(const std::string& title, std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw ContractError("line_svg: need equal, non-empty x and y");
  const auto [xlo, xhi] = std::minmax_element(x.begin(), x.end());
  const auto [ylo, yhi] = std::minmax_element(y.begin(), y.end());
  const Frame f = make_frame(*xlo, *xhi, *ylo, *yhi);
  std::ostringstream os;
  axes(os, f, title);
  os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1\" points=\"";
  for (std::size_t i = 0; i < x.size(); ++i) os << fixed(f.px(x[i]), 2) << "," << fixed(f.py(y[i]), 2) << " ";
  os << "\"/>\n</svg>\n";
  return os.str();
}

CsvTable dynamics_table(std::span<const DynamicsRow> rows) {
  CsvTable t;
  t.header = {"unit_id", "a", "b", "delta_l", "category", "fluctuation", "fluctuating", "score", "tier"};
  for (const DynamicsRow& r : rows) {
    t.rows.push_back({r.unit_id, format_number(r.fit.slope), format_number(r.fit.intercept),
                      format_number(r.fit.delta_l), dynamics::to_string(r.category), format_number(r.fluctuation),
                      r.fluctuating ? "true" : "false", format_number(r.score), std::to_string(r.tier)});
  }
  return t;
}

std::string dynamics_html(std::span<const DynamicsRow> rows, double l_mean, const dynamics::Thresholds& th) {
  std::ostringstream os;
  os << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Loss dynamics</title>\n"
     << "<style>body{font-family:sans-serif;margin:2em}span.u{display:inline-block;padding:2px 6px;margin:2px;"
        "border-radius:3px;color:white;font-family:monospace}span.f{outline:2px dashed black}"
        "table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:2px 8px}</style></head><body>\n"
     << "<h1>Loss dynamics</h1>\n"
     << "<p>Units: " << rows.size() << ". L_mean (mean final loss): " << format_number(l_mean)
     << ". Thresholds: dL &lt; " << format_number(th.lower) << " is H-&gt;L, dL &gt; " << format_number(th.upper)
     << " is L-&gt;H.</p>\n<table><tr><th>category</th><th>units</th></tr>\n";
  for (dynamics::Category c : dynamics::kCategories) {
    const auto n = std::count_if(rows.begin(), rows.end(), [c](const DynamicsRow& r) { return r.category == c; });
    os << "<tr><td>" << escape_xml(dynamics::to_string(c)) << "</td><td>" << n << "</td></tr>\n";
  }
  os << "</table>\n<h2>Selection tiers</h2>\n<p>Score is excess loss (a stand-in selection score); tier 1 "
        "(blue) is the highest preference, tier 5 (orange) the lowest. Dashed outlines mark fluctuating units.</p>\n<p>";
  for (std::size_t t = 0; t < kTierPalette.size(); ++t) {
    os << "<span class=\"u\" style=\"background:" << kTierPalette[t] << "\">tier " << t + 1 << "</span>";
  }
  os << "</p>\n<p>\n";
  for (const DynamicsRow& r : rows) {
    os << "<span class=\"u" << (r.fluctuating ? " f" : "") << "\" style=\"background:"
       << kTierPalette[static_cast<std::size_t>(std::clamp(r.tier, 1, 5) - 1)] << "\" title=\""
       << escape_xml(dynamics::to_string(r.category)) << " dL=" << format_number(r.fit.delta_l)
       << " score=" << format_number(r.score) << "\">" << escape_xml(r.unit_id) << "</span>\n";
  }
  os << "</p>\n</body></html>\n";
  return os.str();
}

}  // namespace flowforge::cli

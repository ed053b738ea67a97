// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace flowforge::cli {

struct ConfigKey {
  std::string section;
  std::string key;
  std::string default_value;
  std::string help;

  std::string dotted() const { return section + "." + key; }
};

/// Every accepted `section.key` with its default.
const std::vector<ConfigKey>& config_schema();

/// Flat INI configuration validated against config_schema().
///
/// Unknown sections and keys are rejected; every key has an effective value
/// (its default unless a file or override set it).
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_string(const std::string& text);

  /// Overrides one value; `dotted` is "section.key".
  void set(const std::string& dotted, const std::string& value);
  /// Applies "section.key=value".
  void apply_override(const std::string& assignment);

  const std::string& raw(const std::string& dotted) const;
  bool is_default(const std::string& dotted) const;

  std::string get_string(const std::string& dotted) const;
  double get_double(const std::string& dotted) const;
  std::int64_t get_int(const std::string& dotted) const;
  std::uint64_t get_u64(const std::string& dotted) const;
  std::size_t get_size(const std::string& dotted) const;
  bool get_bool(const std::string& dotted) const;
  std::vector<double> get_doubles(const std::string& dotted) const;
  std::vector<std::size_t> get_sizes(const std::string& dotted) const;
  std::vector<std::string> get_list(const std::string& dotted) const;

  /// INI text with the effective value of every key in the given sections.
  std::string effective(std::span<const std::string> sections) const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> explicit_;
};

/// Splits on commas, trimming whitespace and dropping empty entries.
std::vector<std::string> split_list(const std::string& text);

}  // namespace flowforge::cli

// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowforge/cli/config.hpp"

#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flowforge/error.hpp"

namespace flowforge::cli {

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"run", "seed", "0", "global seed"},
      {"run", "out", "out", "output directory"},

      {"data", "generator", "two_gaussians", "two_gaussians | two_moons | ring"},
      {"data", "separation", "4", "distance between the two Gaussian modes"},
      {"data", "spread", "0.5", "standard deviation of each mode"},
      {"data", "radius", "3", "ring radius"},
      {"data", "modes", "8", "number of ring modes"},
      {"data", "noise", "0.1", "two_moons noise"},

      {"net", "hidden", "128,128,128", "hidden layer widths"},
      {"net", "activation", "gelu", "identity | tanh | gelu"},
      {"net", "time_embed_dim", "16", "sinusoidal time features (even)"},
      {"net", "cond_embed_dim", "8", "condition embedding width"},

      {"train", "steps", "4000", "Adam steps"},
      {"train", "batch", "256", "rows per step"},
      {"train", "lr", "1e-3", "learning rate"},
      {"train", "cond_dropout", "0.1", "probability of training the null condition"},
      {"train", "timesteps", "uniform", "uniform | u_shaped_centered | u_shaped_literal"},
      {"train", "a", "5", "U-shape sharpness"},
      {"train", "sample_count", "2000", "samples drawn after training"},
      {"train", "sample_nfe", "50", "Euler steps for the final samples"},

      {"sample", "checkpoint", "", "model checkpoint"},
      {"sample", "nfe", "50", "Euler steps"},
      {"sample", "count", "2000", "number of samples"},
      {"sample", "cfg_max", "1", "guidance scale at t=0 (1 disables guidance)"},
      {"sample", "shift", "1", "time shift s >= 1"},
      {"sample", "condition", "random", "random | null | condition id"},

      {"distill", "teacher", "", "teacher checkpoint"},
      {"distill", "pairs", "4096", "reflow pairs generated by the teacher"},
      {"distill", "teacher_nfe", "50", "teacher Euler steps per pair"},
      {"distill", "steps", "3000", "student Adam steps"},
      {"distill", "batch", "256", "pairs per step"},
      {"distill", "lr", "1e-3", "learning rate"},
      {"distill", "timesteps", "u_shaped_centered", "timestep distribution"},
      {"distill", "a", "5", "U-shape sharpness"},
      {"distill", "weighting", "none", "none | inverse_t_squared"},
      {"distill", "student_nfe", "5", "Euler steps for the student samples"},
      {"distill", "sample_count", "2000", "samples drawn from the student"},

      {"dpo", "base", "", "base checkpoint (also the frozen reference)"},
      {"dpo", "beta", "0.5", "DPO temperature"},
      {"dpo", "lr", "1e-3", "learning rate"},
      {"dpo", "steps", "300", "Adam steps"},
      {"dpo", "batch", "64", "pairs per step"},
      {"dpo", "pairs", "1024", "synthesized preference pairs"},
      {"dpo", "candidates", "2000", "base samples used to build pairs"},
      {"dpo", "nfe", "50", "Euler steps when sampling"},
      {"dpo", "condition", "null", "null | condition id"},
      {"dpo", "target", "2,0", "preferred mode centre"},
      {"dpo", "radius", "1.5", "preferred when within this distance of target"},

      {"arch", "layers", "48", "transformer layers"},
      {"arch", "hidden", "6144", "hidden size"},
      {"arch", "heads", "48", "attention heads"},
      {"arch", "head_dim", "128", "head dimension"},
      {"arch", "ffn_dim", "24576", "feed-forward width"},
      {"arch", "cross_attn_dim", "6144", "cross-attention query width"},
      {"arch", "cross_attn_kv_dim", "1024", "cross-attention key/value width"},
      {"arch", "total_params", "30e9", "parameter count N"},

      {"cost", "mode", "fwd_bwd_recompute", "forward_only | fwd_bwd | fwd_bwd_recompute"},
      {"cost", "bytes_per_param", "2", ""},
      {"cost", "bytes_per_grad", "4", ""},
      {"cost", "bytes_per_optimizer", "12", ""},
      {"cost", "bytes_per_activation", "2", ""},
      {"cost", "activation_factor", "60", "activation bytes per token, hidden unit and layer"},
      {"cost", "residual_factor", "1", "checkpointed inputs per token, hidden unit and layer"},
      {"cost", "peak_flops", "989e12", "per-device peak FLOP/s"},
      {"cost", "tp_bandwidth", "450e9", "bytes/s"},
      {"cost", "cp_bandwidth", "50e9", "bytes/s"},
      {"cost", "tp_collectives", "8", "per layer"},
      {"cost", "cp_collectives", "2", "per layer"},
      {"cost", "comm_overlap", "0.5", "hidden fraction of communication"},
      {"cost", "microbatches", "16", "pipeline microbatches"},
      {"cost", "pipeline_bubble", "1", "bubble scale"},

      {"plan", "world_size", "64", "devices"},
      {"plan", "device_memory_gb", "80", "per-device memory"},
      {"plan", "mix", "204x256x256:1", "resolution:weight list"},
      {"plan", "tp_options", "1,2,4,8", ""},
      {"plan", "cp_options", "1,2,4,8", ""},
      {"plan", "pp_options", "1,2,4", ""},
      {"plan", "vpp_options", "1,2,4,6,12,24", ""},

      {"balance", "flops", "", "resolution:TFLOPs list; empty derives F_r from arch and cost"},
      {"balance", "resolutions", "204x256x256,136x256x256,68x256x256", "used when flops is empty"},
      {"balance", "f_target", "max", "max | resolution label | TFLOPs value"},
      {"balance", "alpha", "1", "normalization factor or auto"},
      {"balance", "target_total", "0", "batch-size sum solved for when alpha = auto"},
      {"balance", "cache_depth", "4", "cached video batches"},
      {"balance", "sequence", "", "resolution of each cached batch; empty draws them from the seed"},
      {"balance", "image_ratio", "0.1", "images per video sample"},
      {"balance", "image_flops", "auto", "TFLOPs per image or auto"},
      {"balance", "image_resolution", "1x256x256", "used when image_flops = auto"},

      {"dynamics", "input", "", "CSV with header unit_id,ck0,ck1,..."},
      {"dynamics", "reference", "", "optional CSV unit_id,loss of reference losses"},
      {"dynamics", "lower", "-0.2", "H->L threshold"},
      {"dynamics", "upper", "0.2", "L->H threshold"},
      {"dynamics", "fluctuation_quantile", "0.95", "flag units above this quantile"},
  };
  return schema;
}

namespace {

const ConfigKey* find_key(const std::string& dotted) {
  for (const ConfigKey& k : config_schema()) {
    if (k.dotted() == dotted) return &k;
  }
  return nullptr;
}

std::string trim(std::string s) {
  boost::algorithm::trim(s);
  return s;
}

[[noreturn]] void bad_value(const std::string& dotted, const std::string& expected, const std::string& value) {
  throw ConfigError("config field " + dotted + ": expected " + expected + ", got '" + value + "'");
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  if (begin != end && *begin == '+') ++begin;
  const auto [p, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && p == end;
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

RunConfig::RunConfig() {
  for (const ConfigKey& k : config_schema()) {
    values_[k.dotted()] = k.default_value;
    explicit_[k.dotted()] = false;
  }
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

RunConfig RunConfig::from_string(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("malformed config: " + e.message() + " at line " + std::to_string(e.line()));
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config key '" + section + "' appears outside a section");
    }
    bool known = false;
    for (const ConfigKey& k : config_schema()) known = known || k.section == section;
    if (!known) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, value] : body) {
      cfg.set(section + "." + key, value.get_value<std::string>());
    }
  }
  return cfg;
}

void RunConfig::set(const std::string& dotted, const std::string& value) {
  if (find_key(dotted) == nullptr) throw ConfigError("unknown config key '" + dotted + "'");
  values_[dotted] = trim(value);
  explicit_[dotted] = true;
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& RunConfig::raw(const std::string& dotted) const {
  const auto it = values_.find(dotted);
  if (it == values_.end()) throw ConfigError("unknown config key '" + dotted + "'");
  return it->second;
}

bool RunConfig::is_default(const std::string& dotted) const {
  raw(dotted);
  return !explicit_.at(dotted);
}

std::string RunConfig::get_string(const std::string& dotted) const { return raw(dotted); }

double RunConfig::get_double(const std::string& dotted) const {
  const std::string& v = raw(dotted);
  double out = 0.0;
  if (!parse_number(v, out) || !std::isfinite(out)) bad_value(dotted, "a finite number", v);
  return out;
}

std::int64_t RunConfig::get_int(const std::string& dotted) const {
  const std::string& v = raw(dotted);
  std::int64_t out = 0;
  if (!parse_number(v, out)) bad_value(dotted, "an integer", v);
  return out;
}

std::uint64_t RunConfig::get_u64(const std::string& dotted) const {
  const std::string& v = raw(dotted);
  std::uint64_t out = 0;
  if (!parse_number(v, out)) bad_value(dotted, "an unsigned integer", v);
  return out;
}

std::size_t RunConfig::get_size(const std::string& dotted) const {
  return static_cast<std::size_t>(get_u64(dotted));
}

bool RunConfig::get_bool(const std::string& dotted) const {
  const std::string& v = raw(dotted);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(dotted, "true or false", v);
}

std::vector<double> RunConfig::get_doubles(const std::string& dotted) const {
  std::vector<double> out;
  for (const std::string& item : split_list(raw(dotted))) {
    double d = 0.0;
    if (!parse_number(item, d) || !std::isfinite(d)) bad_value(dotted, "a list of numbers", raw(dotted));
    out.push_back(d);
  }
  return out;
}

std::vector<std::size_t> RunConfig::get_sizes(const std::string& dotted) const {
  std::vector<std::size_t> out;
  for (const std::string& item : split_list(raw(dotted))) {
    std::uint64_t d = 0;
    if (!parse_number(item, d)) bad_value(dotted, "a list of unsigned integers", raw(dotted));
    out.push_back(static_cast<std::size_t>(d));
  }
  return out;
}

std::vector<std::string> RunConfig::get_list(const std::string& dotted) const { return split_list(raw(dotted)); }

std::string RunConfig::effective(std::span<const std::string> sections) const {
  std::ostringstream os;
  for (const std::string& section : sections) {
    os << "[" << section << "]\n";
    for (const ConfigKey& k : config_schema()) {
      if (k.section != section) continue;
      os << k.key << " = " << values_.at(k.dotted()) << "\n";
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace flowforge::cli

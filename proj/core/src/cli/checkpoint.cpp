// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowforge/cli/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace flowforge::cli {

std::string to_string(CheckpointErrorKind kind) {
  switch (kind) {
    case CheckpointErrorKind::magic_mismatch: return "magic_mismatch";
    case CheckpointErrorKind::version_mismatch: return "version_mismatch";
    case CheckpointErrorKind::truncated_header: return "truncated_header";
    case CheckpointErrorKind::malformed_header: return "malformed_header";
    case CheckpointErrorKind::length_mismatch: return "length_mismatch";
    case CheckpointErrorKind::shape_mismatch: return "shape_mismatch";
  }
  return "unknown";
}

CheckpointError::CheckpointError(CheckpointErrorKind kind, const std::string& what)
    : IoError("checkpoint " + to_string(kind) + ": " + what), kind_(kind) {}

const NamedTensor& Checkpoint::find(const std::string& name) const {
  for (const NamedTensor& t : tensors) {
    if (t.name == name) return t;
  }
  throw CheckpointError(CheckpointErrorKind::shape_mismatch, "missing tensor '" + name + "'");
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["meta"] = ckpt.meta;
  header["tensors"] = nlohmann::json::array();
  for (const NamedTensor& t : ckpt.tensors) {
    if (shape_numel(t.shape) != t.data.size()) {
      throw CheckpointError(CheckpointErrorKind::shape_mismatch, "tensor '" + t.name + "' shape " +
                                                                     shape_to_string(t.shape) + " vs " +
                                                                     std::to_string(t.data.size()) + " values");
    }
    header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  }
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const NamedTensor& t : ckpt.tensors) {
    for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError(CheckpointErrorKind::magic_mismatch, "file does not start with FLWF");
  }
  if (bytes.size() < 12) throw CheckpointError(CheckpointErrorKind::truncated_header, "missing version or header length");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::version_mismatch,
                          "version " + std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));
  }
  const std::size_t header_len = get_u32(bytes, 8);
  if (bytes.size() - 12 < header_len) {
    throw CheckpointError(CheckpointErrorKind::truncated_header,
                          "header declares " + std::to_string(header_len) + " bytes, " +
                              std::to_string(bytes.size() - 12) + " available");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::malformed_header, e.what());
  }
  Checkpoint ckpt;
  std::size_t expected = 0;
  try {
    ckpt.meta = header.at("meta");
    for (const auto& entry : header.at("tensors")) {
      NamedTensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<Shape>();
      if (t.shape.empty()) throw CheckpointError(CheckpointErrorKind::shape_mismatch, "tensor '" + t.name + "' has rank 0");
      for (std::size_t d : t.shape) {
        if (d == 0) throw CheckpointError(CheckpointErrorKind::shape_mismatch, "tensor '" + t.name + "' has a zero dimension");
      }
      expected += shape_numel(t.shape);
      ckpt.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::malformed_header, e.what());
  }
  const std::size_t payload = bytes.size() - 12 - header_len;
  if (payload != expected * 4) {
    throw CheckpointError(CheckpointErrorKind::length_mismatch, "payload has " + std::to_string(payload) +
                                                                    " bytes, header shapes need " +
                                                                    std::to_string(expected * 4));
  }
  std::size_t at = 12 + header_len;
  for (NamedTensor& t : ckpt.tensors) {
    t.data.resize(shape_numel(t.shape));
    for (float& f : t.data) {
      f = std::bit_cast<float>(get_u32(bytes, at));
      at += 4;
    }
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

namespace {

NamedTensor to_named(const std::string& name, const Tensor& t) {
  NamedTensor n{name, t.shape(), {}};
  n.data.reserve(t.size());
  for (double v : t.data()) n.data.push_back(static_cast<float>(v));
  return n;
}

Tensor to_tensor(const NamedTensor& n) {
  std::vector<double> data(n.data.begin(), n.data.end());
  return Tensor(n.shape, std::move(data));
}

Tensor expect_shape(const Checkpoint& ckpt, const std::string& name, const Shape& shape) {
  const NamedTensor& n = ckpt.find(name);
  if (n.shape != shape) {
    throw CheckpointError(CheckpointErrorKind::shape_mismatch, "tensor '" + name + "' has shape " +
                                                                   shape_to_string(n.shape) + ", config implies " +
                                                                   shape_to_string(shape));
  }
  return to_tensor(n);
}

std::vector<int> to_ids(const NamedTensor& n) {
  std::vector<int> ids;
  for (float f : n.data) ids.push_back(static_cast<int>(f));
  return ids;
}

Tensor row(const Tensor& m, std::size_t i) {
  const std::size_t d = m.dim(1);
  return Tensor({d}, std::vector<double>(m.data().begin() + static_cast<std::ptrdiff_t>(i * d),
                                         m.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d)));
}

Tensor stack(std::span<const Tensor* const> rows) {
  const std::size_t d = rows.front()->size();
  std::vector<double> data;
  data.reserve(rows.size() * d);
  for (const Tensor* r : rows) data.insert(data.end(), r->data().begin(), r->data().end());
  return Tensor({rows.size(), d}, std::move(data));
}

}  // namespace

Checkpoint params_to_checkpoint(const nnet::VectorFieldParams& params, std::uint64_t seed, std::uint64_t step) {
  params.validate();
  const nnet::NetConfig& c = params.config;
  Checkpoint ckpt;
  ckpt.meta = {{"kind", "vector_field"},
               {"arch",
                {{"data_dim", c.data_dim},
                 {"hidden", c.hidden},
                 {"time_embed_dim", c.time_embed_dim},
                 {"cond_embed_dim", c.cond_embed_dim},
                 {"num_conditions", c.num_conditions},
                 {"activation", nnet::to_string(c.activation)}}},
               {"frequencies", params.frequencies},
               {"seed", seed},
               {"step", step}};
  const auto names = params.tensor_names();
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) ckpt.tensors.push_back(to_named(names[i], *tensors[i]));
  return ckpt;
}

nnet::VectorFieldParams params_from_checkpoint(const Checkpoint& ckpt) {
  nnet::NetConfig c;
  std::vector<double> freqs;
  try {
    if (ckpt.meta.at("kind") != "vector_field") {
      throw CheckpointError(CheckpointErrorKind::malformed_header, "not a vector_field checkpoint");
    }
    const auto& a = ckpt.meta.at("arch");
    c.data_dim = a.at("data_dim").get<std::size_t>();
    c.hidden = a.at("hidden").get<std::vector<std::size_t>>();
    c.time_embed_dim = a.at("time_embed_dim").get<std::size_t>();
    c.cond_embed_dim = a.at("cond_embed_dim").get<std::size_t>();
    c.num_conditions = a.at("num_conditions").get<std::size_t>();
    c.activation = nnet::activation_from_string(a.at("activation").get<std::string>());
    freqs = ckpt.meta.at("frequencies").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::malformed_header, e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointErrorKind::malformed_header, e.what());
  }
  nnet::VectorFieldParams p = nnet::zero_params(c);
  if (freqs.size() != p.frequencies.size()) {
    throw CheckpointError(CheckpointErrorKind::shape_mismatch, "frequency table length does not match time_embed_dim");
  }
  p.frequencies = freqs;
  const auto names = p.tensor_names();
  auto tensors = p.tensors();
  if (ckpt.tensors.size() != tensors.size()) {
    throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                          std::to_string(ckpt.tensors.size()) + " tensors, config implies " + std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) *tensors[i] = expect_shape(ckpt, names[i], tensors[i]->shape());
  p.validate();
  return p;
}

Checkpoint reflow_pairs_to_checkpoint(std::span<const align::ReflowPair> pairs, std::uint64_t seed) {
  if (pairs.empty()) throw ContractError("no reflow pairs to save");
  std::vector<const Tensor*> x0, x1;
  Tensor y({pairs.size()});
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    x0.push_back(&pairs[i].x0);
    x1.push_back(&pairs[i].x1_hat);
    y[i] = pairs[i].y;
  }
  Checkpoint ckpt;
  ckpt.meta = {{"kind", "reflow_pairs"}, {"teacher_nfe", pairs.front().teacher_nfe}, {"seed", seed}};
  ckpt.tensors = {to_named("x0", stack(x0)), to_named("x1_hat", stack(x1)), to_named("y", y)};
  return ckpt;
}

std::vector<align::ReflowPair> reflow_pairs_from_checkpoint(const Checkpoint& ckpt) {
  int nfe = 0;
  try {
    nfe = ckpt.meta.at("teacher_nfe").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::malformed_header, e.what());
  }
  const NamedTensor& x0n = ckpt.find("x0");
  if (x0n.shape.size() != 2) throw CheckpointError(CheckpointErrorKind::shape_mismatch, "x0 must be (N, D)");
  const Tensor x0 = to_tensor(x0n);
  const Tensor x1 = expect_shape(ckpt, "x1_hat", x0.shape());
  const std::vector<int> y = to_ids(ckpt.find("y"));
  if (y.size() != x0.dim(0)) throw CheckpointError(CheckpointErrorKind::shape_mismatch, "y length differs from x0 rows");
  std::vector<align::ReflowPair> pairs;
  for (std::size_t i = 0; i < y.size(); ++i) pairs.push_back({row(x0, i), row(x1, i), y[i], nfe});
  return pairs;
}

Checkpoint preference_pairs_to_checkpoint(std::span<const align::PreferencePair> pairs, std::uint64_t seed) {
  if (pairs.empty()) throw ContractError("no preference pairs to save");
  std::vector<const Tensor*> w, l, noise;
  Tensor y({pairs.size()}), t({pairs.size()});
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    w.push_back(&pairs[i].x_w);
    l.push_back(&pairs[i].x_l);
    noise.push_back(&pairs[i].shared_noise);
    y[i] = pairs[i].y;
    t[i] = pairs[i].shared_t;
  }
  Checkpoint ckpt;
  ckpt.meta = {{"kind", "preference_pairs"}, {"seed", seed}};
  ckpt.tensors = {to_named("x_w", stack(w)), to_named("x_l", stack(l)), to_named("shared_noise", stack(noise)),
                  to_named("shared_t", t), to_named("y", y)};
  return ckpt;
}

std::vector<align::PreferencePair> preference_pairs_from_checkpoint(const Checkpoint& ckpt) {
  const NamedTensor& wn = ckpt.find("x_w");
  if (wn.shape.size() != 2) throw CheckpointError(CheckpointErrorKind::shape_mismatch, "x_w must be (N, D)");
  const Tensor w = to_tensor(wn);
  const Tensor l = expect_shape(ckpt, "x_l", w.shape());
  const Tensor noise = expect_shape(ckpt, "shared_noise", w.shape());
  const Tensor t = expect_shape(ckpt, "shared_t", {w.dim(0)});
  const std::vector<int> y = to_ids(ckpt.find("y"));
  if (y.size() != w.dim(0)) throw CheckpointError(CheckpointErrorKind::shape_mismatch, "y length differs from x_w rows");
  std::vector<align::PreferencePair> pairs;
  for (std::size_t i = 0; i < y.size(); ++i) pairs.push_back({y[i], row(w, i), row(l, i), row(noise, i), t[i]});
  return pairs;
}

nnet::VectorFieldParams round_to_f32(const nnet::VectorFieldParams& params) {
  nnet::VectorFieldParams out = params;
  for (Tensor* t : out.tensors()) {
    for (double& v : t->data()) v = static_cast<double>(static_cast<float>(v));
  }
  return out;
}

}  // namespace flowforge::cli

// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowforge/align.hpp"
#include "flowforge/error.hpp"
#include "flowforge/nnet.hpp"
#include "flowforge/tensor.hpp"

namespace flowforge::cli {

/// Container layout: "FLWF", u32 version, u32 header length, UTF-8 JSON
/// header, then every tensor as little-endian f32 in header order.
inline constexpr char kCheckpointMagic[4] = {'F', 'L', 'W', 'F'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrorKind {
  magic_mismatch,
  version_mismatch,
  truncated_header,
  malformed_header,
  length_mismatch,
  shape_mismatch,
};

std::string to_string(CheckpointErrorKind kind);

class CheckpointError : public IoError {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what);
  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  /// Free-form metadata ("kind", "arch", "seed", "step", ...).
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor& find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters rounded to f32 with the net config in the header.
Checkpoint params_to_checkpoint(const nnet::VectorFieldParams& params, std::uint64_t seed, std::uint64_t step);
nnet::VectorFieldParams params_from_checkpoint(const Checkpoint& ckpt);

Checkpoint reflow_pairs_to_checkpoint(std::span<const align::ReflowPair> pairs, std::uint64_t seed);
std::vector<align::ReflowPair> reflow_pairs_from_checkpoint(const Checkpoint& ckpt);

Checkpoint preference_pairs_to_checkpoint(std::span<const align::PreferencePair> pairs, std::uint64_t seed);
std::vector<align::PreferencePair> preference_pairs_from_checkpoint(const Checkpoint& ckpt);

/// Rounds every value through f32, as a save/load cycle would.
nnet::VectorFieldParams round_to_f32(const nnet::VectorFieldParams& params);

}  // namespace flowforge::cli

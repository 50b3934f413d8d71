// SPDX-License-Identifier: Apache-2.0
//
// Versioned checkpoint container. Binary layout, little-endian:
//
//   magic "DAVAMCKPT" | u32 version | str model_kind | u8 has_prior |
//   str config_text | u32 tensor_count |
//   manifest entries: { str name | u8 dtype (0 = f32) | u8 group |
//                       u32 rows | u32 cols } |
//   raw row-major f32 payloads in manifest order
//
// (str = u32 byte length + bytes.) Writes go through a temp file + rename.

#pragma once

#include "davam/common.hpp"

#include <string>
#include <vector>

namespace davam {

enum class TensorGroup : std::uint8_t {
  Phi = 0,
  Theta = 1,
  Psi = 2,
  CodeBook = 3,
  Meta = 4,
};

struct NamedTensor {
  std::string name;
  TensorGroup group = TensorGroup::Meta;
  MatF data;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::string model_kind;
  bool has_prior = false;
  std::string config_text;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  const NamedTensor& require(const std::string& name) const;
  void remove_group(TensorGroup group);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  // Hash of the exact serialized byte stream.
  std::uint64_t content_hash() const;
};

}  // namespace davam

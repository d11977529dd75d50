#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "memadapter/retriever.hpp"
#include "memadapter/unified_space.hpp"

namespace memadapter {

struct Tensor {
  std::vector<std::uint64_t> shape;
  std::vector<float> data;  // row-major
  bool operator==(const Tensor&) const = default;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "MEMALNCK", u32 version, u32 section count, then per section u32 name
// length, name, u64 offset, u64 length; payloads are u64 rank, u64 dims,
// f32 values; a trailing u64 FNV-1a of every preceding byte. All integers
// and floats little-endian.
std::string encode_checkpoint(const NamedTensors& sections);
NamedTensors decode_checkpoint(const std::string& bytes);

void save_checkpoint(const NamedTensors& sections, const std::string& path);
NamedTensors load_checkpoint(const std::string& path);

Tensor to_tensor(const Mat& m);
Tensor to_tensor(const Vec& v);
Mat to_matrix(const Tensor& t);
Vec to_vector(const Tensor& t);
const Tensor& find_section(const NamedTensors& sections, const std::string& name);

NamedTensors to_sections(const AlignmentModule& module);
AlignmentModule alignment_from_sections(const NamedTensors& sections);
NamedTensors to_sections(const RetrieverModel& model);
RetrieverModel retriever_from_sections(const NamedTensors& sections);

}  // namespace memadapter

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdi/tensor.hpp"

namespace cdi {

struct TensorBlob {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

// On-disk network snapshot. Binary layout, all integers little-endian:
//   magic "IIDC" | u32 version (= 1) | u32 param count
//   per param: u32 name length | name bytes | u32 n,c,h,w | f32 data
//   u32 optimizer flag (0/1)
//   if 1: u64 step count, then per param (same order) f32 moment1 data
//         followed by f32 moment2 data, sized like the param
struct CheckpointData {
  std::vector<TensorBlob> params;
  bool has_optimizer = false;
  std::uint64_t optimizer_step = 0;
  std::vector<std::vector<float>> moment1, moment2;  // aligned with params
};

void write_checkpoint(const std::filesystem::path& path,
                      const CheckpointData& data);
CheckpointData read_checkpoint(const std::filesystem::path& path);

}  // namespace cdi

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gpnn/binary_io.hpp"
#include "gpnn/tensor.hpp"

namespace gpnn {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   "GPNNCKPT" | u32 version | u32 count |
//   count × { u32 name_len | name | u32 rank | rank × u64 dim | f64 data... }
void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

void write_checkpoint(std::ostream& out, const NamedTensors& tensors);
NamedTensors read_checkpoint(std::istream& in);

const Tensor* find_tensor(const NamedTensors& tensors, const std::string& name);

}  // namespace gpnn

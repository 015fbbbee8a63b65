#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "remembra/tensor.hpp"

namespace remembra {

// Flat binary tensor container used for network checkpoints, meta-parameters
// and exported datasets. Layout: magic "RMBR", version u16, entry count u16,
// then per entry (kind u8, rank u8, dims u32 each, payload little-endian f64).
struct ContainerEntry {
  uint8_t kind = 0;
  Tensor tensor;
};

inline constexpr uint16_t kContainerVersion = 1;

void write_container(const std::string& path, std::span<const ContainerEntry> entries);
std::vector<ContainerEntry> read_container(const std::string& path);

}  // namespace remembra

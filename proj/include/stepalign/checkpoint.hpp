#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "stepalign/model.hpp"

namespace stepalign {

// Layout: "SCKP", u32 LE header length, JSON header (config, step, seed,
// tensor names and shapes), then every tensor as float32 LE row-major in
// header order.
struct Checkpoint {
  ModelParams params;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stepalign

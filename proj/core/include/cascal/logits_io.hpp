#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cascal/table.hpp"

namespace cascal {

// LGTS v1, little-endian, no padding:
//   [0,4)  magic "LGTS"
//   [4]    version = 1
//   [5,9)  u32 N
//   [9,13) u32 C
//   N*C f32 logits, row-major
//   N   u32 labels
//
// Logits are narrowed to f32 on write and widened to f64 on read, so a
// round trip is bit-exact for tables whose logits are f32-representable
// (everything this library generates or loads).
inline constexpr std::uint8_t kLgtsVersion = 1;

std::vector<std::uint8_t> encode_lgts(const LogitsTable& table);
LogitsTable decode_lgts(std::span<const std::uint8_t> bytes, std::string name);

LogitsTable read_logits_file(const std::filesystem::path& path);
void write_logits_file(const LogitsTable& table, const std::filesystem::path& path);

// Rounds every logit to the nearest f32, matching what a file round trip stores.
LogitsTable round_to_f32(const LogitsTable& table);

}  // namespace cascal

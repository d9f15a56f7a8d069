#pragma once

// RVF raw-volume files: "RVF1", u32 dims[3], f32 spacing[3], f32 origin[3],
// u32 channel count, then each channel as dims-product f32 values (x fastest).
// All fields little-endian. Masks are stored as 0.0 / 1.0.

#include <filesystem>
#include <vector>

#include "liverfat/volume.hpp"

namespace liverfat::rvf {

void write(const std::filesystem::path& path, const std::vector<Volume3>& channels);
std::vector<Volume3> read(const std::filesystem::path& path);

std::vector<std::uint8_t> encode(const std::vector<Volume3>& channels);
std::vector<Volume3> decode(std::span<const std::uint8_t> bytes);

}  // namespace liverfat::rvf

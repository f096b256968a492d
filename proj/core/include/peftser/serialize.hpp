#pragma once

#include <filesystem>

#include "peftser/tensor.hpp"

namespace peftser {

// Tensor file format, little-endian: magic "PEFT", u32 rank, u32 dims...,
// f64 payload row-major. Used for checkpoints and feature files.

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

} // namespace peftser

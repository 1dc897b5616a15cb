#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "probelab/common.hpp"

namespace probelab {

// Write-then-rename so readers never observe a partial file.
void atomic_write_file(const std::filesystem::path& path, const std::string& contents);
void atomic_write_file(const std::filesystem::path& path,
                       const std::vector<uint8_t>& bytes);

std::string read_text_file(const std::filesystem::path& path);
std::vector<uint8_t> read_binary_file(const std::filesystem::path& path);

std::string base64_encode(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> base64_decode(const std::string& text);

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL);

// Fixed-point decimal rendering used in every CSV/JSON artifact so report
// bytes are reproducible.
std::string fmt_fixed(double v, int digits);

}  // namespace probelab

#pragma once

#include <cstdint>
#include <string>

namespace heatsmooth {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// FNV-1a over bytes; used for artifact manifests and determinism checks.
std::uint64_t fnv1a64(const std::string& bytes);
std::string fnv1a64_hex(const std::string& bytes);
std::string file_hash_hex(const std::string& path);

std::string fmt_double(double v);  // %.17g, round-trip exact

}  // namespace heatsmooth

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tsprobe::util {

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::filesystem::path& path);

/// splitmix64 step; the stable integer mixer used wherever hashes must not
/// depend on the platform's std:: hash or RNG internals.
uint64_t splitmix64(uint64_t& state);
uint64_t mix64(uint64_t x);

/// FNV-1a over bytes, then finalized with mix64. Stable across platforms.
uint64_t stable_hash(const void* data, size_t len, uint64_t seed = 0);
uint64_t stable_hash(const std::string& s, uint64_t seed = 0);
uint64_t stable_hash(const char* s, uint64_t seed = 0);

/// Uniform double in [0,1) from a 64-bit word (top 53 bits).
double u64_to_unit(uint64_t w);

std::string base64_encode(const void* data, size_t len);
std::vector<uint8_t> base64_decode(const std::string& text);

// --- files ---------------------------------------------------------------

/// Write-then-rename so readers never observe a partial file.
void atomic_write(const std::filesystem::path& path, const void* data, size_t len);
void atomic_write(const std::filesystem::path& path, const std::string& text);

std::string read_file(const std::filesystem::path& path);
std::vector<float> read_f32_blob(const std::filesystem::path& path);
void write_f32_blob(const std::filesystem::path& path, const std::vector<float>& v);

// --- misc ----------------------------------------------------------------

std::string lower(std::string s);
std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);
bool starts_with(const std::string& s, const std::string& prefix);

/// Fixed-format float for CSV/JSON output (shortest round-trip).
std::string fmt_double(double v);

std::string csv_escape(const std::string& field);

}  // namespace tsprobe::util

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace liverfat {

/// splitmix64 finalizer; used to derive independent per-item seeds.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a 64-bit.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes,
                    std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t hash_file(const std::filesystem::path& p);
std::string hex64(std::uint64_t v);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p);
void write_bytes(const std::filesystem::path& p, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& p, std::string_view text);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
/// thrown by any task is rethrown after all threads join.
void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t)>& fn);

unsigned default_workers();

/// Minimal CSV table: header row plus string cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(std::string_view name) const;  // -1 when absent
  const std::string& cell(std::size_t row, std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& p);
void write_csv(const std::filesystem::path& p, const CsvTable& t);

/// Shortest decimal that round-trips a double.
std::string fmt_double(double v);

/// Writes manifest.csv (file, fnv1a64) for the listed files in `dir`.
void write_manifest(const std::filesystem::path& dir,
                    const std::vector<std::string>& files);

}  // namespace liverfat

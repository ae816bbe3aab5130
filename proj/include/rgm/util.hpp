// Small shared helpers: round-trip number formatting, CRC, logging and the
// seeded random source used by every stochastic component.
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>

namespace rgm {

/// Shortest decimal rendering that parses back to the identical double.
std::string format_double(double v);
/// Strict full-token parse; returns false on any trailing garbage.
bool parse_double(std::string_view token, double& out);
bool parse_int(std::string_view token, long long& out);

/// Whole-file reads and writes; throw std::runtime_error on I/O failure.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

std::uint32_t crc32_of(std::string_view bytes);
std::string crc32_hex(std::string_view bytes);

void log_warning(const std::string& msg);
void log_info(const std::string& msg);
void set_log_quiet(bool quiet);

/// Deterministic random source. Distributions are implemented here rather
/// than with <random>'s distribution classes, whose output is not fixed by
/// the standard.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n). Unbiased (rejection sampling).
  std::uint64_t below(std::uint64_t n);

  std::string state() const;
  void set_state(const std::string& s);

  bool operator==(const Rng& o) const { return engine_ == o.engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent stream seed from a master seed and an index.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index);

}  // namespace rgm

#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "rgm/core.hpp"
#include "rgm/util.hpp"

namespace testing {

inline rgm::AffinityMatrix random_affinity(int n1, int n2, std::uint64_t seed, double lo = 0.0, double hi = 1.0,
                                           rgm::Sense sense = rgm::Sense::Maximize) {
  rgm::Rng rng(seed);
  const int n = n1 * n2;
  Eigen::MatrixXd k(n, n);
  for (int p = 0; p < n; ++p)
    for (int q = p; q < n; ++q) k(p, q) = k(q, p) = rng.uniform(lo, hi);
  return rgm::AffinityMatrix(n1, n2, std::move(k), sense);
}

// Random conflict-free selection built by trying vertices in random order.
inline rgm::PartialSolution random_solution(int n1, int n2, rgm::Rng& rng, int max_size = -1) {
  rgm::PartialSolution u(n1, n2);
  const int cap = max_size < 0 ? static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(n1, n2)) + 1)) : max_size;
  for (int tries = 0; tries < 4 * n1 * n2 && u.size() < cap; ++tries) {
    const int p = static_cast<int>(rng.below(static_cast<std::uint64_t>(n1 * n2)));
    if (u.available(p)) u.add(p);
  }
  return u;
}

inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rgm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing

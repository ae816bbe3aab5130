// Exact and classical reference solvers used to check the learned agent.
#pragma once

#include <optional>

#include "rgm/core.hpp"
#include "rgm/regularizer.hpp"

namespace rgm {

struct BruteForceResult {
  PartialSolution best;
  double score = 0.0;
  long long evaluated = 0;
};

/// Number of conflict-free vertex sets brute_force would visit.
double brute_force_space(int n1, int n2, std::optional<int> cardinality);

inline constexpr double kBruteForceLimit = 1e7;

/// Exhaustive search over conflict-free vertex sets, either of exactly
/// `cardinality` vertices or of every size. Scores with J(U), or J(U) f(|U|)
/// when `f` is given, honoring K's sense. Ties go to the lexicographically
/// smallest sorted vertex list. Throws SearchSpaceError above the limit.
BruteForceResult brute_force(const AffinityMatrix& k, std::optional<int> cardinality = std::nullopt,
                             const std::optional<RegFn>& f = std::nullopt, double limit = kBruteForceLimit);

struct SpectralOptions {
  int maxIterations = 200;
  double tolerance = 1e-10;
  /// Stop discretizing after this many pairs.
  std::optional<int> maxPairs;
  /// Records the Rayleigh quotient of every iterate (for diagnostics/tests).
  bool traceRayleigh = false;
};

struct SpectralResult {
  MatchResult match;
  Eigen::VectorXd eigenvector;
  int iterations = 0;
  bool converged = false;
  std::vector<double> rayleigh;
};

/// Leading-eigenvector relaxation with greedy conflict-free discretization.
SpectralResult spectral_match(const AffinityMatrix& k, const SpectralOptions& opts = {});

}  // namespace rgm

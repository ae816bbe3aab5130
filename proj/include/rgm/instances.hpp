// Problem-instance ingestion and generation: QAPLIB (Koopmans-Beckmann)
// parsing and Lawler conversion, the AFF1 affinity file format, and the
// synthetic scaled-2D-point generator.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rgm/core.hpp"

namespace rgm {

struct KBInstance {
  int n = 0;
  Eigen::MatrixXd flow;
  Eigen::MatrixXd dist;
  std::string name;
  std::optional<double> knownOptimal;
};

/// Whitespace-separated: n, then n*n flow entries, then n*n distance entries
/// (row-major). Non-numeric text after the last entry is ignored.
KBInstance parse_qaplib(std::string_view text, std::string name = {});
KBInstance load_qaplib(const std::filesystem::path& path);
std::string write_qaplib(const KBInstance& kb);

/// Optimal value from a sidecar next to a QAPLIB file: `<stem>.sln` (first
/// line "n value") or `<stem>.opt` (a single number). Absent if neither exists.
std::optional<double> read_optimal_sidecar(const std::filesystem::path& dat_path);

/// sum_ij flow[i][j] * dist[perm[i]][perm[j]].
double kb_objective(const KBInstance& kb, const std::vector<int>& perm);

/// K[ia][jb] = flow[i][j] * dist[a][b], symmetrized, sense Minimize.
AffinityMatrix kb_to_lawler(const KBInstance& kb);

enum class ScaleMode { PerPoint, Global };

struct SyntheticSpec {
  int nInliers = 10;
  int nOutliers1 = 0;
  int nOutliers2 = 0;
  double deltaS = 0.0;
  double sigma1 = 0.05;
  std::uint64_t rngSeed = 0;
  ScaleMode scaleMode = ScaleMode::PerPoint;

  void validate() const;
};

struct SyntheticInstance {
  AffinityMatrix k;
  PartialSolution gt;
  Eigen::MatrixX2d points1;  // after shuffling
  Eigen::MatrixX2d points2;
};

SyntheticInstance gen_synthetic(const SyntheticSpec& spec);

/// Contents of an AFF1 file.
struct AffinityFile {
  AffinityMatrix k;
  std::optional<PartialSolution> gt;
  std::map<std::string, std::string> meta;
};

/// Layout:
///   AFF1 <n1> <n2> <has_gt> <max|min>
///   META <key> <value>          (zero or more)
///   <n1*n2 lines of n1*n2 shortest-round-trip doubles>
///   <i> <a>                     (one line per gt pair, when has_gt = 1)
///   CRC <8 hex digits>          (CRC-32 of every byte before this line)
std::string write_affinity_string(const AffinityFile& file);
AffinityFile read_affinity_string(std::string_view text);
void write_affinity(const std::filesystem::path& path, const AffinityFile& file);
AffinityFile read_affinity(const std::filesystem::path& path);

}  // namespace rgm

// Command-line front end: gen, train, solve and bench.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rgm/core.hpp"

namespace rgm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitPartial = 3;

/// Entry point shared by the executable and the tests; `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct LoadedInstance {
  std::string name;
  std::filesystem::path path;
  std::shared_ptr<const AffinityMatrix> k;
  std::optional<PartialSolution> gt;
  std::optional<double> optimal;
  bool qaplib = false;
};

/// AFF1 files (`.aff`) or QAPLIB files (`.dat`, optimum from a sidecar).
LoadedInstance load_instance(const std::filesystem::path& path);
/// Expands directories into their instance files, sorted by name.
std::vector<std::filesystem::path> expand_inputs(const std::vector<std::string>& inputs);

/// "0:0,2:1" -> {(0,0), (2,1)}. Throws ConfigError on malformed text.
std::vector<std::pair<int, int>> parse_seeds(const std::string& text);

struct EvalRow {
  std::string instance;
  std::string group;
  std::string method;
  int pairs = 0;
  double rawScore = 0.0;
  std::optional<double> regScore;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> objRatio;
  std::optional<double> gap;
  double wallTime = 0.0;
};

struct Stat {
  int count = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct GroupSummary {
  std::string group;
  std::string method;
  int instances = 0;
  std::optional<Stat> f1;
  std::optional<Stat> objRatio;
  std::optional<Stat> gap;
};

/// Mean/min/max per (group, method), groups in `group_order` then in order
/// of first appearance. Groups without rows are skipped with a warning.
std::vector<GroupSummary> aggregate(const std::vector<EvalRow>& rows, const std::vector<std::string>& group_order = {});

std::string rows_csv(const std::vector<EvalRow>& rows);
std::string summary_csv(const std::vector<GroupSummary>& groups);

/// Six significant digits, for human-readable output.
std::string human(double v);

}  // namespace rgm::cli

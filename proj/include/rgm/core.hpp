// Domain types shared by every module: the Lawler affinity matrix, the
// association-graph view of it, partial solutions and the evaluation metrics.
//
// Vertex p of the association graph is the node pair (i, a) with
// p = i * n2 + a (row-major vectorization of the assignment matrix).
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rgm/errors.hpp"

namespace rgm {

enum class Sense { Maximize, Minimize };

std::string to_string(Sense s);
Sense parse_sense(const std::string& s);

/// Maps a score in the instance's own sense to the "bigger is better" sign.
inline double signed_for_max(double score, Sense s) {
  return s == Sense::Minimize ? -score : score;
}

int vertex_index(int i, int a, int n1, int n2);
std::pair<int, int> vertex_unindex(int p, int n2);

/// Dense symmetric (n1*n2) x (n1*n2) affinity matrix with an objective sense.
class AffinityMatrix {
 public:
  AffinityMatrix() = default;

  /// Takes ownership of `k`. Asymmetry above 1e-9 is logged; the matrix is
  /// always replaced by (K + K^T) / 2. Throws ContractViolation on shape
  /// mismatch or non-finite entries.
  AffinityMatrix(int n1, int n2, Eigen::MatrixXd k, Sense sense = Sense::Maximize);

  static AffinityMatrix zeros(int n1, int n2, Sense sense = Sense::Maximize);

  int n1() const { return n1_; }
  int n2() const { return n2_; }
  int size() const { return n1_ * n2_; }
  Sense sense() const { return sense_; }
  const Eigen::MatrixXd& k() const { return k_; }
  double operator()(int p, int q) const { return k_(p, q); }
  double max_abs() const;

  /// Returns a copy with every entry multiplied by `factor`.
  AffinityMatrix scaled(double factor) const;
  AffinityMatrix with_sense(Sense s) const;

  bool operator==(const AffinityMatrix& o) const;

 private:
  int n1_ = 0;
  int n2_ = 0;
  Eigen::MatrixXd k_;
  Sense sense_ = Sense::Maximize;
};

/// Vertex weights (diagonal of K) and edge weights (off-diagonal of K).
/// Adjacency is implicit: ia ~ jb iff i != j and a != b.
struct AssociationView {
  int n1 = 0;
  int n2 = 0;
  Eigen::VectorXd f;
  Eigen::MatrixXd w;

  explicit AssociationView(const AffinityMatrix& k);
  int size() const { return n1 * n2; }
  int degree() const { return (n1 - 1) * (n2 - 1); }
  bool adjacent(int p, int q) const;
};

/// Conflict-free set of association-graph vertices (a partial permutation).
/// Insertion order is kept; equality is set equality.
class PartialSolution {
 public:
  PartialSolution() = default;
  PartialSolution(int n1, int n2);

  static PartialSolution from_pairs(int n1, int n2, std::span<const std::pair<int, int>> pairs);
  static PartialSolution from_vertices(int n1, int n2, std::span<const int> vertices);

  int n1() const { return n1_; }
  int n2() const { return n2_; }
  int size() const { return static_cast<int>(selected_.size()); }
  bool empty() const { return selected_.empty(); }
  const std::vector<int>& selected() const { return selected_; }
  bool row_used(int i) const { return row_used_[i] != 0; }
  bool col_used(int a) const { return col_used_[a] != 0; }
  bool contains(int p) const;

  /// True when p shares no G1 node and no G2 node with a selected vertex.
  bool available(int p) const;
  /// Selected vertices sharing a G1 or a G2 node with p (p itself included
  /// when selected). At most two entries.
  std::vector<int> conflicts_with(int p) const;

  /// Throws IllegalAction if p conflicts with the current selection.
  void add(int p);
  /// Throws ContractViolation if p is not selected.
  void remove(int p);

  std::vector<int> sorted() const;
  std::vector<std::pair<int, int>> pairs() const;
  /// 0/1 indicator vector of length n1*n2.
  Eigen::VectorXd indicator() const;

  bool operator==(const PartialSolution& o) const;

 private:
  void check_vertex(int p) const;

  int n1_ = 0;
  int n2_ = 0;
  std::vector<int> selected_;
  std::vector<std::uint8_t> row_used_;
  std::vector<std::uint8_t> col_used_;
};

struct MatchResult {
  PartialSolution solution;
  double rawScore = 0.0;
  std::optional<double> regScore;
  int steps = 0;
  double wallTime = 0.0;
};

/// vec(X)^T K vec(X) for the assignment induced by U.
double objective_score(const AffinityMatrix& k, const PartialSolution& u);
/// sum_{p in U} f[p] + sum_{p != q in U} w[p][q].
double objective_from_set(const AssociationView& view, const PartialSolution& u);
/// Score change from adding p to U: K[p][p] + 2 * sum_{q in U} K[p][q].
double add_gain(const AffinityMatrix& k, const PartialSolution& u, int p);
/// Score change from removing a selected p from U.
double remove_loss(const AffinityMatrix& k, const PartialSolution& u, int p);

struct F1Metrics {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

F1Metrics f1_metrics(const PartialSolution& pred, const PartialSolution& gt);
double objective_ratio(const PartialSolution& pred, const PartialSolution& gt, const AffinityMatrix& k);
double optimal_gap(double pred_score, double optimal);

}  // namespace rgm

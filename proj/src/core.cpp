#include "rgm/core.hpp"

#include <algorithm>
#include <cmath>

#include "rgm/util.hpp"

namespace rgm {

std::string to_string(Sense s) { return s == Sense::Maximize ? "max" : "min"; }

Sense parse_sense(const std::string& s) {
  if (s == "max" || s == "maximize") return Sense::Maximize;
  if (s == "min" || s == "minimize") return Sense::Minimize;
  throw ConfigError("unknown objective sense '" + s + "' (expected max or min)");
}

int vertex_index(int i, int a, int n1, int n2) {
  if (i < 0 || i >= n1 || a < 0 || a >= n2)
    throw ContractViolation("node pair (" + std::to_string(i) + ", " + std::to_string(a) + ") out of range for " +
                            std::to_string(n1) + "x" + std::to_string(n2));
  return i * n2 + a;
}

std::pair<int, int> vertex_unindex(int p, int n2) {
  if (p < 0 || n2 <= 0) throw ContractViolation("vertex_unindex: negative vertex or non-positive n2");
  return {p / n2, p % n2};
}

// --- AffinityMatrix ---------------------------------------------------------

AffinityMatrix::AffinityMatrix(int n1, int n2, Eigen::MatrixXd k, Sense sense)
    : n1_(n1), n2_(n2), k_(std::move(k)), sense_(sense) {
  if (n1 <= 0 || n2 <= 0) throw ContractViolation("affinity dimensions must be positive");
  const Eigen::Index n = static_cast<Eigen::Index>(n1) * n2;
  if (k_.rows() != n || k_.cols() != n)
    throw ContractViolation("affinity matrix must be " + std::to_string(n) + "x" + std::to_string(n));
  if (!k_.allFinite()) throw ContractViolation("affinity matrix has non-finite entries");
  const double asym = (k_ - k_.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9) log_warning("affinity matrix asymmetric by " + format_double(asym) + "; symmetrizing");
  if (asym > 0.0) {
    Eigen::MatrixXd sym = 0.5 * (k_ + k_.transpose());
    k_ = std::move(sym);
  }
}

AffinityMatrix AffinityMatrix::zeros(int n1, int n2, Sense sense) {
  const Eigen::Index n = static_cast<Eigen::Index>(n1) * n2;
  return AffinityMatrix(n1, n2, Eigen::MatrixXd::Zero(n, n), sense);
}

double AffinityMatrix::max_abs() const { return k_.size() == 0 ? 0.0 : k_.cwiseAbs().maxCoeff(); }

AffinityMatrix AffinityMatrix::scaled(double factor) const {
  AffinityMatrix out = *this;
  out.k_ *= factor;
  return out;
}

AffinityMatrix AffinityMatrix::with_sense(Sense s) const {
  AffinityMatrix out = *this;
  out.sense_ = s;
  return out;
}

bool AffinityMatrix::operator==(const AffinityMatrix& o) const {
  return n1_ == o.n1_ && n2_ == o.n2_ && sense_ == o.sense_ && k_ == o.k_;
}

// --- AssociationView --------------------------------------------------------

AssociationView::AssociationView(const AffinityMatrix& k)
    : n1(k.n1()), n2(k.n2()), f(k.k().diagonal()), w(k.k()) {
  w.diagonal().setZero();
}

bool AssociationView::adjacent(int p, int q) const {
  return p / n2 != q / n2 && p % n2 != q % n2;
}

// --- PartialSolution --------------------------------------------------------

PartialSolution::PartialSolution(int n1, int n2)
    : n1_(n1), n2_(n2), row_used_(static_cast<std::size_t>(n1), 0), col_used_(static_cast<std::size_t>(n2), 0) {
  if (n1 <= 0 || n2 <= 0) throw ContractViolation("solution dimensions must be positive");
}

PartialSolution PartialSolution::from_pairs(int n1, int n2, std::span<const std::pair<int, int>> pairs) {
  PartialSolution s(n1, n2);
  for (auto [i, a] : pairs) s.add(vertex_index(i, a, n1, n2));
  return s;
}

PartialSolution PartialSolution::from_vertices(int n1, int n2, std::span<const int> vertices) {
  PartialSolution s(n1, n2);
  for (int p : vertices) s.add(p);
  return s;
}

void PartialSolution::check_vertex(int p) const {
  if (p < 0 || p >= n1_ * n2_)
    throw ContractViolation("vertex " + std::to_string(p) + " out of range [0, " + std::to_string(n1_ * n2_) + ")");
}

bool PartialSolution::contains(int p) const {
  return std::find(selected_.begin(), selected_.end(), p) != selected_.end();
}

bool PartialSolution::available(int p) const {
  check_vertex(p);
  return !row_used_[p / n2_] && !col_used_[p % n2_];
}

std::vector<int> PartialSolution::conflicts_with(int p) const {
  check_vertex(p);
  std::vector<int> out;
  const int i = p / n2_, a = p % n2_;
  if (!row_used_[i] && !col_used_[a]) return out;
  for (int q : selected_)
    if (q / n2_ == i || q % n2_ == a) out.push_back(q);
  return out;
}

void PartialSolution::add(int p) {
  check_vertex(p);
  const int i = p / n2_, a = p % n2_;
  if (row_used_[i] || col_used_[a])
    throw IllegalAction("vertex " + std::to_string(p) + " conflicts with the current selection");
  selected_.push_back(p);
  row_used_[i] = 1;
  col_used_[a] = 1;
}

void PartialSolution::remove(int p) {
  check_vertex(p);
  auto it = std::find(selected_.begin(), selected_.end(), p);
  if (it == selected_.end()) throw ContractViolation("vertex " + std::to_string(p) + " is not selected");
  selected_.erase(it);
  row_used_[p / n2_] = 0;
  col_used_[p % n2_] = 0;
}

std::vector<int> PartialSolution::sorted() const {
  std::vector<int> s = selected_;
  std::sort(s.begin(), s.end());
  return s;
}

std::vector<std::pair<int, int>> PartialSolution::pairs() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(selected_.size());
  for (int p : sorted()) out.emplace_back(p / n2_, p % n2_);
  return out;
}

Eigen::VectorXd PartialSolution::indicator() const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n1_) * n2_);
  for (int p : selected_) x[p] = 1.0;
  return x;
}

bool PartialSolution::operator==(const PartialSolution& o) const {
  return n1_ == o.n1_ && n2_ == o.n2_ && sorted() == o.sorted();
}

// --- objectives -------------------------------------------------------------

namespace {
void check_dims(const AffinityMatrix& k, const PartialSolution& u) {
  if (k.n1() != u.n1() || k.n2() != u.n2()) throw ContractViolation("solution and affinity dimensions differ");
}
}  // namespace

double objective_score(const AffinityMatrix& k, const PartialSolution& u) {
  check_dims(k, u);
  double s = 0.0;
  for (int p : u.selected())
    for (int q : u.selected()) s += k(p, q);
  return s;
}

double objective_from_set(const AssociationView& view, const PartialSolution& u) {
  if (view.n1 != u.n1() || view.n2 != u.n2()) throw ContractViolation("solution and view dimensions differ");
  double s = 0.0;
  for (int p : u.selected()) {
    s += view.f[p];
    for (int q : u.selected())
      if (q != p) s += view.w(p, q);
  }
  return s;
}

double add_gain(const AffinityMatrix& k, const PartialSolution& u, int p) {
  check_dims(k, u);
  double g = k(p, p);
  for (int q : u.selected()) g += 2.0 * k(p, q);
  return g;
}

double remove_loss(const AffinityMatrix& k, const PartialSolution& u, int p) {
  check_dims(k, u);
  double g = -k(p, p);
  for (int q : u.selected())
    if (q != p) g -= 2.0 * k(p, q);
  return g;
}

// --- metrics ----------------------------------------------------------------

F1Metrics f1_metrics(const PartialSolution& pred, const PartialSolution& gt) {
  if (pred.n1() != gt.n1() || pred.n2() != gt.n2()) throw ContractViolation("f1_metrics: dimension mismatch");
  const auto ps = pred.sorted();
  const auto gs = gt.sorted();
  std::vector<int> common;
  std::set_intersection(ps.begin(), ps.end(), gs.begin(), gs.end(), std::back_inserter(common));
  const double hit = static_cast<double>(common.size());
  F1Metrics m;
  m.recall = gs.empty() ? 0.0 : hit / static_cast<double>(gs.size());
  m.precision = ps.empty() ? 0.0 : hit / static_cast<double>(ps.size());
  m.f1 = (m.recall + m.precision) == 0.0 ? 0.0 : 2.0 * m.recall * m.precision / (m.recall + m.precision);
  return m;
}

double objective_ratio(const PartialSolution& pred, const PartialSolution& gt, const AffinityMatrix& k) {
  const double denom = objective_score(k, gt);
  if (denom == 0.0) throw DomainError("objective_ratio: ground-truth score is zero");
  return objective_score(k, pred) / denom;
}

double optimal_gap(double pred_score, double optimal) {
  if (!(optimal > 0.0)) throw ContractViolation("optimal_gap: optimum must be positive");
  return (pred_score - optimal) / optimal;
}

}  // namespace rgm

#include "rgm/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "rgm/util.hpp"

namespace rgm {

namespace {

double choose(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

double factorial(int k) {
  double r = 1.0;
  for (int i = 2; i <= k; ++i) r *= i;
  return r;
}

class Search {
 public:
  Search(const AffinityMatrix& k, std::optional<int> card, const std::optional<RegFn>& f)
      : k_(k), card_(card), f_(f), current_(k.n1(), k.n2()) {}

  BruteForceResult run() {
    visit(0, 0.0);
    BruteForceResult r;
    r.best = PartialSolution::from_vertices(k_.n1(), k_.n2(), best_);
    r.score = best_score_;
    r.evaluated = evaluated_;
    return r;
  }

 private:
  void consider(double raw) {
    ++evaluated_;
    const int size = current_.size();
    if (card_ && size != *card_) return;
    const double value = f_ ? regularized_value(raw, size, *f_) : raw;
    const double keyed = signed_for_max(value, k_.sense());
    std::vector<int> sorted = current_.sorted();
    if (!found_ || keyed > best_key_ || (keyed == best_key_ && sorted < best_)) {
      found_ = true;
      best_key_ = keyed;
      best_score_ = value;
      best_ = std::move(sorted);
    }
  }

  // Decide G1 node i: leave it unmatched or match it to a free G2 node.
  void visit(int i, double raw) {
    const int size = current_.size();
    const int remaining = k_.n1() - i;
    if (card_ && (size > *card_ || size + remaining < *card_)) return;
    if (i == k_.n1()) {
      consider(raw);
      return;
    }
    visit(i + 1, raw);
    if (card_ && size == *card_) return;
    for (int a = 0; a < k_.n2(); ++a) {
      if (current_.col_used(a)) continue;
      const int p = i * k_.n2() + a;
      const double gain = add_gain(k_, current_, p);
      current_.add(p);
      visit(i + 1, raw + gain);
      current_.remove(p);
    }
  }

  const AffinityMatrix& k_;
  std::optional<int> card_;
  std::optional<RegFn> f_;
  PartialSolution current_;
  bool found_ = false;
  double best_key_ = 0.0;
  double best_score_ = 0.0;
  std::vector<int> best_;
  long long evaluated_ = 0;
};

}  // namespace

double brute_force_space(int n1, int n2, std::optional<int> cardinality) {
  const int top = std::min(n1, n2);
  double total = 0.0;
  for (int k = 0; k <= top; ++k)
    if (!cardinality || *cardinality == k) total += choose(n1, k) * choose(n2, k) * factorial(k);
  return total;
}

BruteForceResult brute_force(const AffinityMatrix& k, std::optional<int> cardinality, const std::optional<RegFn>& f,
                             double limit) {
  if (cardinality && (*cardinality < 0 || *cardinality > std::min(k.n1(), k.n2())))
    throw ContractViolation("brute_force: cardinality out of range");
  const double space = brute_force_space(k.n1(), k.n2(), cardinality);
  if (space > limit)
    throw SearchSpaceError("brute force would enumerate " + format_double(space) + " candidates (limit " +
                               format_double(limit) + ")",
                           space);
  return Search(k, cardinality, f).run();
}

SpectralResult spectral_match(const AffinityMatrix& k, const SpectralOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const int n = k.size();
  Eigen::MatrixXd m = k.sense() == Sense::Minimize ? Eigen::MatrixXd(-k.k()) : k.k();
  const double lowest = m.minCoeff();
  if (lowest < 0.0) {
    log_info("spectral_match: shifting affinity by " + format_double(-lowest) + " to make it non-negative");
    m.array() -= lowest;
  }
  // For a non-negative matrix every eigenvalue has modulus at most the
  // largest row sum, so M + rI is positive semidefinite. Iterating on it
  // has the same leading eigenvector and a monotone Rayleigh quotient.
  const double shift = m.rowwise().sum().maxCoeff();

  SpectralResult out;
  Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  auto rayleigh = [&m](const Eigen::VectorXd& x) { return x.dot(m * x) / x.squaredNorm(); };
  if (opts.traceRayleigh) out.rayleigh.push_back(rayleigh(v));
  for (int it = 0; it < opts.maxIterations; ++it) {
    Eigen::VectorXd next = m * v + shift * v;
    const double norm = next.norm();
    if (norm == 0.0) break;
    next /= norm;
    const double delta = (next - v).norm();
    v = std::move(next);
    out.iterations = it + 1;
    if (opts.traceRayleigh) out.rayleigh.push_back(rayleigh(v));
    if (delta < opts.tolerance) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged) log_warning("spectral_match: power iteration did not converge; using last iterate");

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&v](int a, int b) { return v[a] > v[b]; });
  PartialSolution sol(k.n1(), k.n2());
  const int cap = opts.maxPairs.value_or(std::min(k.n1(), k.n2()));
  for (int p : order) {
    if (sol.size() >= cap) break;
    if (sol.available(p)) sol.add(p);
  }
  out.eigenvector = v;
  out.match.solution = sol;
  out.match.rawScore = objective_score(k, sol);
  out.match.steps = out.iterations;
  out.match.wallTime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace rgm

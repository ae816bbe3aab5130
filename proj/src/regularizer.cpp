#include "rgm/regularizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace rgm {

std::string to_string(RegFn::Kind kind) {
  switch (kind) {
    case RegFn::Kind::F1Linear:
      return "f1";
    case RegFn::Kind::F2Rational:
      return "f2";
    case RegFn::Kind::F3InverseSquare:
      return "f3";
  }
  return "?";
}

RegFn::Kind parse_reg_fn(const std::string& s) {
  if (s == "f1") return RegFn::Kind::F1Linear;
  if (s == "f2") return RegFn::Kind::F2Rational;
  if (s == "f3") return RegFn::Kind::F3InverseSquare;
  throw ConfigError("unknown regularization function '" + s + "' (expected f1, f2 or f3)");
}

double reg_fn_eval(const RegFn& f, int n) {
  if (n < f.min_n()) throw DomainError(to_string(f.kind) + " is undefined at n = " + std::to_string(n));
  const double x = n;
  switch (f.kind) {
    case RegFn::Kind::F1Linear: {
      const double m3 = 3.0 * std::max(f.n1, f.n2);
      return (m3 - x) / m3;
    }
    case RegFn::Kind::F2Rational:
      return (1.0 + x) / (1.0 + 3.0 * x);
    case RegFn::Kind::F3InverseSquare:
      return 1.0 / (x * x);
  }
  return 0.0;
}

double regularized_value(double raw, int size, const RegFn& f) {
  if (size == 0) return 0.0;
  return raw * reg_fn_eval(f, size);
}

double regularized_objective(const AffinityMatrix& k, const PartialSolution& u, const RegFn& f) {
  return regularized_value(objective_score(k, u), u.size(), f);
}

namespace {

// Gaussian elimination with partial pivoting on a 3x3 system.
std::array<double, 3> solve3(std::array<std::array<double, 4>, 3> m) {
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (m[piv][col] == 0.0) throw FitError("singular normal equations");
    std::swap(m[piv], m[col]);
    for (int r = col + 1; r < 3; ++r) {
      const double factor = m[r][col] / m[col][col];
      for (int c = col; c < 4; ++c) m[r][c] -= factor * m[col][c];
    }
  }
  std::array<double, 3> x{};
  for (int r = 2; r >= 0; --r) {
    double s = m[r][3];
    for (int c = r + 1; c < 3; ++c) s -= m[r][c] * x[c];
    x[r] = s / m[r][r];
  }
  return x;
}

}  // namespace

QuadFit quad_fit_target(const std::function<double(int)>& target, int lo, int hi) {
  if (hi - lo + 1 < 3)
    throw FitError("quadratic fit needs at least 3 points, range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                   "] has " + std::to_string(std::max(0, hi - lo + 1)));
  // Fit in the centred variable m = n - mid to keep the normal equations
  // well conditioned, then expand back to powers of n.
  const double mid = 0.5 * (lo + hi);
  std::array<double, 5> pow_sums{};  // sum m^0..m^4
  std::array<double, 3> rhs{};       // sum t*m^0..t*m^2
  for (int n = lo; n <= hi; ++n) {
    const double m = n - mid;
    const double t = target(n);
    double mp = 1.0;
    for (int k = 0; k < 5; ++k) {
      pow_sums[k] += mp;
      if (k < 3) rhs[k] += t * mp;
      mp *= m;
    }
  }
  // Unknowns ordered (alpha, beta, gamma) for alpha m^2 + beta m + gamma.
  std::array<std::array<double, 4>, 3> sys{{
      {pow_sums[4], pow_sums[3], pow_sums[2], rhs[2]},
      {pow_sums[3], pow_sums[2], pow_sums[1], rhs[1]},
      {pow_sums[2], pow_sums[1], pow_sums[0], rhs[0]},
  }};
  const auto [alpha, beta, gamma] = solve3(sys);

  QuadFit fit;
  fit.a = alpha;
  fit.b = beta - 2.0 * alpha * mid;
  fit.c = alpha * mid * mid - beta * mid + gamma;
  fit.lo = lo;
  fit.hi = hi;
  for (int n = lo; n <= hi; ++n) {
    const double m = n - mid;
    const double g = (alpha * m + beta) * m + gamma;
    fit.maxResidual = std::max(fit.maxResidual, std::abs(g - target(n)));
  }
  return fit;
}

QuadFit quad_fit(const RegFn& f, int currentSize, int halfWidth) {
  if (currentSize < 0) throw ContractViolation("quad_fit: negative current size");
  if (halfWidth < 0) throw ContractViolation("quad_fit: negative half width");
  int lo = currentSize - halfWidth;
  int hi = currentSize + halfWidth;
  if (lo < f.min_n()) {
    hi += f.min_n() - lo;
    lo = f.min_n();
  }
  return quad_fit_target([&f](int n) { return 1.0 - reg_fn_eval(f, n); }, lo, hi);
}

AffinityMatrix regularized_affinity(const AffinityMatrix& k, double cx, const QuadFit& fit) {
  if (!std::isfinite(cx)) throw ContractViolation("regularized_affinity: Cx must be finite");
  Eigen::MatrixXd out = k.k().array() - fit.a * cx;
  out.diagonal().array() -= fit.b * cx;
  return AffinityMatrix(k.n1(), k.n2(), std::move(out), k.sense());
}

}  // namespace rgm

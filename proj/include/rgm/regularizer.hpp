// Affinity regularization. A decreasing weight f(n) on the number of matched
// pairs turns J(U) into J(U) * f(|U|); a local quadratic fit of 1 - f lets
// the product be written back as a plain QAP with a shifted affinity K-hat.
#pragma once

#include <functional>
#include <span>
#include <string>

#include "rgm/core.hpp"

namespace rgm {

struct RegFn {
  enum class Kind { F1Linear, F2Rational, F3InverseSquare };

  Kind kind = Kind::F1Linear;
  int n1 = 1;
  int n2 = 1;

  /// Smallest n at which the function is defined.
  int min_n() const { return kind == Kind::F3InverseSquare ? 1 : 0; }
};

std::string to_string(RegFn::Kind kind);
RegFn::Kind parse_reg_fn(const std::string& s);

/// f1(n) = (3m - n) / 3m with m = max(n1, n2); f2(n) = (1 + n) / (1 + 3n);
/// f3(n) = 1 / n^2. Throws DomainError for n below min_n().
double reg_fn_eval(const RegFn& f, int n);

/// J(U) * f(|U|). The empty selection scores 0 for every f (J is 0 there).
double regularized_objective(const AffinityMatrix& k, const PartialSolution& u, const RegFn& f);
/// Same, from a precomputed raw score.
double regularized_value(double raw, int size, const RegFn& f);

struct QuadFit {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  int lo = 0;
  int hi = 0;
  double maxResidual = 0.0;

  double operator()(double n) const { return (a * n + b) * n + c; }
};

/// Least-squares g(n) = a n^2 + b n + c over the integers of [lo, hi]
/// against target(n). Throws FitError with fewer than 3 points.
QuadFit quad_fit_target(const std::function<double(int)>& target, int lo, int hi);

/// Fit of 1 - f(n) over S = [currentSize - halfWidth, currentSize + halfWidth],
/// shifted up to start at f.min_n() when it would fall below it.
QuadFit quad_fit(const RegFn& f, int currentSize, int halfWidth = 2);

/// K - a*Cx*ones - b*Cx*I. Sense is preserved.
AffinityMatrix regularized_affinity(const AffinityMatrix& k, double cx, const QuadFit& fit);

}  // namespace rgm

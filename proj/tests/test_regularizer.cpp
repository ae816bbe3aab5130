#include "doctest.h"

#include "helpers.hpp"
#include "rgm/instances.hpp"
#include "rgm/regularizer.hpp"

using namespace rgm;

TEST_CASE("regularization functions") {
  CHECK(reg_fn_eval({RegFn::Kind::F3InverseSquare, 5, 5}, 2) == 0.25);
  CHECK(reg_fn_eval({RegFn::Kind::F2Rational, 5, 5}, 1) == 0.5);
  CHECK(reg_fn_eval({RegFn::Kind::F1Linear, 10, 10}, 10) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(reg_fn_eval({RegFn::Kind::F1Linear, 4, 7}, 0) == 1.0);
  CHECK_THROWS_AS(reg_fn_eval({RegFn::Kind::F3InverseSquare, 5, 5}, 0), DomainError);
  CHECK_THROWS_AS(reg_fn_eval({RegFn::Kind::F1Linear, 5, 5}, -1), DomainError);
  for (auto kind : {RegFn::Kind::F1Linear, RegFn::Kind::F2Rational, RegFn::Kind::F3InverseSquare}) {
    const RegFn f{kind, 8, 9};
    for (int n = 1; n < 9; ++n) CHECK(reg_fn_eval(f, n + 1) < reg_fn_eval(f, n));
  }
  CHECK(parse_reg_fn("f2") == RegFn::Kind::F2Rational);
  CHECK_THROWS_AS(parse_reg_fn("f4"), ConfigError);
}

TEST_CASE("regularized objective") {
  SyntheticSpec spec;
  spec.nInliers = 6;
  spec.nOutliers1 = spec.nOutliers2 = 2;
  spec.rngSeed = 4;
  const SyntheticInstance inst = gen_synthetic(spec);
  const RegFn f1{RegFn::Kind::F1Linear, 8, 8};
  CHECK(regularized_objective(inst.k, inst.gt, f1) ==
        objective_score(inst.k, inst.gt) * reg_fn_eval(f1, 6));
  CHECK(regularized_objective(inst.k, PartialSolution(8, 8), f1) == 0.0);
  CHECK(regularized_objective(inst.k, PartialSolution(8, 8), {RegFn::Kind::F3InverseSquare, 8, 8}) == 0.0);
}

TEST_CASE("over-matching threshold for f3") {
  // Adding one pair to gt lowers J*f3 exactly when the relative raw gain is
  // below ((k+1)/k)^2 - 1.
  int below = 0, above = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    SyntheticSpec spec;
    spec.nInliers = 4;
    spec.nOutliers1 = spec.nOutliers2 = 1;
    spec.deltaS = 0.1;
    spec.sigma1 = 0.05 + 0.05 * static_cast<double>(seed % 10);
    spec.rngSeed = seed;
    const SyntheticInstance inst = gen_synthetic(spec);
    const RegFn f3{RegFn::Kind::F3InverseSquare, 5, 5};
    const double j = objective_score(inst.k, inst.gt);
    const double threshold = 25.0 / 16.0 - 1.0;
    for (int p = 0; p < inst.k.size(); ++p) {
      if (!inst.gt.available(p)) continue;
      PartialSolution over = inst.gt;
      over.add(p);
      const double ratio = (objective_score(inst.k, over) - j) / j;
      const bool lower = regularized_objective(inst.k, over, f3) < regularized_objective(inst.k, inst.gt, f3);
      if (std::abs(ratio - threshold) < 1e-12) continue;
      CHECK(lower == (ratio < threshold));
      (ratio < threshold ? below : above)++;
    }
  }
  CHECK(below > 0);
}

TEST_CASE("quadratic fit") {
  const QuadFit exact = quad_fit_target([](int n) { return 0.1 * n * n + 0.2 * n + 0.3; }, 0, 6);
  CHECK(exact.a == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(std::abs(exact.a - 0.1) <= 1e-9);
  CHECK(std::abs(exact.b - 0.2) <= 1e-9);
  CHECK(std::abs(exact.c - 0.3) <= 1e-9);
  CHECK(exact.maxResidual <= 1e-9);
  CHECK_THROWS_AS(quad_fit_target([](int) { return 0.0; }, 2, 3), FitError);

  // Independent least-squares solve (numpy lstsq) for 1 - 1/n^2 over {2..6}.
  const QuadFit f3 = quad_fit({RegFn::Kind::F3InverseSquare, 10, 10}, 4);
  CHECK(f3.lo == 2);
  CHECK(f3.hi == 6);
  CHECK(std::abs(f3.a - -0.01996031746031755) <= 1e-9);
  CHECK(std::abs(f3.b - 0.2112380952380961) <= 1e-9);
  CHECK(std::abs(f3.c - 0.4160555555555541) <= 1e-9);
  CHECK(std::abs(f3.maxResidual - 0.018761904761904313) <= 1e-9);

  for (int m : {4, 10, 13}) {
    const QuadFit lin = quad_fit({RegFn::Kind::F1Linear, m, m - 1}, 5);
    CHECK(std::abs(lin.a) <= 1e-9);
    CHECK(std::abs(lin.b - 1.0 / (3.0 * m)) <= 1e-9);
    CHECK(std::abs(lin.c) <= 1e-9);
    CHECK(lin.maxResidual <= 1e-9);
  }

  for (int size : {0, 1, 2}) {
    const QuadFit clipped = quad_fit({RegFn::Kind::F3InverseSquare, 6, 6}, size);
    CHECK(clipped.lo == 1);
    CHECK(clipped.hi == 5);
  }
  const QuadFit f1_low = quad_fit({RegFn::Kind::F1Linear, 6, 6}, 1);
  CHECK(f1_low.lo == 0);
  CHECK(f1_low.hi == 4);

  // Targets closer to quadratic fit at least as well.
  const QuadFit wide = quad_fit_target([](int n) { return 0.1 * n * n + 0.05 * n * n * n; }, 2, 6);
  const QuadFit narrow = quad_fit_target([](int n) { return 0.1 * n * n + 0.01 * n * n * n; }, 2, 6);
  CHECK(narrow.maxResidual <= wide.maxResidual);
}

TEST_CASE("regularized affinity") {
  const AffinityMatrix k = testing::random_affinity(3, 3, 21);
  QuadFit zero;
  CHECK(regularized_affinity(k, 5.0, zero) == k);

  QuadFit one;
  one.a = 1;
  one.b = 1;
  const AffinityMatrix z = regularized_affinity(AffinityMatrix::zeros(2, 2), 1.0, one);
  for (int p = 0; p < 4; ++p)
    for (int q = 0; q < 4; ++q) CHECK(z(p, q) == (p == q ? -2.0 : -1.0));

  // Full permutations: vec^T Khat vec = Cx_actual - Cx (a n^2 + b n).
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const AffinityMatrix kk = testing::random_affinity(4, 4, 300 + trial);
    const QuadFit fit = quad_fit({RegFn::Kind::F2Rational, 4, 4}, 4);
    const PartialSolution u = testing::random_solution(4, 4, rng, 4);
    const double cx = rng.uniform(0.5, 3.0);
    const AffinityMatrix kh = regularized_affinity(kk, cx, fit);
    CHECK((kh.k() - kh.k().transpose()).cwiseAbs().maxCoeff() == 0.0);
    const double n = u.size();
    CHECK(testing::close_rel(objective_score(kh, u), objective_score(kk, u) - cx * (fit.a * n * n + fit.b * n), 1e-12));
  }
}

TEST_CASE("regularization fidelity") {
  Rng rng(31);
  for (auto kind : {RegFn::Kind::F1Linear, RegFn::Kind::F2Rational, RegFn::Kind::F3InverseSquare}) {
    for (int trial = 0; trial < 50; ++trial) {
      const AffinityMatrix k = testing::random_affinity(6, 6, 1000 + trial, -0.5, 1.0);
      const RegFn f{kind, 6, 6};
      const int center = 1 + static_cast<int>(rng.below(5));
      const QuadFit fit = quad_fit(f, center);
      const int size = fit.lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(fit.hi - fit.lo + 1)));
      if (size > 6) continue;
      const PartialSolution u = testing::random_solution(6, 6, rng, size);
      REQUIRE(u.size() == size);
      const double cx = objective_score(k, u);
      const AffinityMatrix kh = regularized_affinity(k, cx, fit);
      const double approx = objective_score(kh, u) - fit.c * cx;
      CHECK(std::abs(approx - regularized_objective(k, u, f)) <= std::abs(cx) * fit.maxResidual + 1e-9);
    }
  }
}

TEST_CASE("monotone penalty along a chain of tiny gains") {
  const double eps = 1e-6;
  const int n = 6;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n * n, n * n);
  for (int i = 0; i < n; ++i) m(i * n + i, i * n + i) = i == 0 ? 1.0 : eps;
  const AffinityMatrix k(n, n, m);
  const RegFn f3{RegFn::Kind::F3InverseSquare, n, n};
  PartialSolution u(n, n);
  u.add(0);
  double prev = regularized_objective(k, u, f3);
  for (int i = 1; i < n; ++i) {
    u.add(i * n + i);
    const double cur = regularized_objective(k, u, f3);
    CHECK(cur < prev);
    prev = cur;
  }
}

#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "fhmg/core.hpp"
#include "fhmg/errors.hpp"
#include "support.hpp"

using namespace fhmg;

namespace {

AreaLevelDataset three_area(Vector y) {
  Vector d(3);
  d << 1.0, 2.0, 4.0;
  return AreaLevelDataset(std::move(y), d, Matrix::Ones(3, 1));
}

}  // namespace

TEST_SUITE("core") {
  TEST_CASE("shrinkage examples") {
    CHECK(shrinkage(1.0, 1.0) == doctest::Approx(0.5));
    CHECK(shrinkage(0.0, 3.0) == 1.0);
    CHECK(shrinkage(3.0, 1.0) == doctest::Approx(0.25));
    CHECK_THROWS_AS(shrinkage(1.0, 0.0), DomainError);
    CHECK_THROWS_AS(shrinkage(1.0, -1.0), DomainError);
    CHECK_THROWS_AS(shrinkage(-1.0, 1.0), DomainError);
  }

  TEST_CASE("shrinkage is strictly decreasing in A") {
    for (double d : {0.1, 1.0, 7.5}) {
      double prev = shrinkage(0.0, d);
      for (double a = 1e-6; a < 1e6; a *= 3.7) {
        const double b = shrinkage(a, d);
        CHECK(b < prev);
        CHECK(b > 0.0);
        prev = b;
      }
    }
  }

  TEST_CASE("trace_v_inv_pow examples") {
    Vector d2(2);
    d2 << 1.0, 3.0;
    AreaLevelDataset two(Vector::Zero(2), d2, Matrix::Ones(2, 1));
    CHECK(trace_v_inv_pow(two, 1.0, 2) == doctest::Approx(0.3125).epsilon(1e-15));

    const auto bal = test::balanced_dataset(1, 9, 2.0);
    CHECK(trace_v_inv_pow(bal, 0.5, 2) == doctest::Approx(9.0 / 6.25).epsilon(1e-14));

    Vector d3(3);
    d3 << 0.5, 1.0, 2.0;
    AreaLevelDataset three(Vector::Zero(3), d3, Matrix::Ones(3, 1));
    CHECK(trace_v_inv_pow(three, 0.5, 3) == doctest::Approx(1.0 + 1.0 / 3.375 + 1.0 / 15.625).epsilon(1e-14));
  }

  TEST_CASE("trace_v_inv_pow decreases in A for every k") {
    const auto data = test::random_dataset(3, 12, 2);
    for (int k = 1; k <= 3; ++k) {
      double prev = trace_v_inv_pow(data, 0.0, k);
      for (double a = 0.01; a < 1e4; a *= 2.0) {
        const double t = trace_v_inv_pow(data, a, k);
        CHECK(t < prev);
        prev = t;
      }
    }
  }

  TEST_CASE("gls_beta: intercept on balanced data is the sample mean") {
    const auto bal = test::balanced_dataset(5, 15);
    CHECK(gls_beta(bal, 0.7).beta[0] == doctest::Approx(bal.y().mean()).epsilon(1e-13));
  }

  TEST_CASE("gls_beta: scalar V reduces to ordinary least squares") {
    auto rnd = test::random_dataset(8, 20, 3);
    AreaLevelDataset data(rnd.y(), Vector::Constant(20, 1.3), rnd.x());
    const Vector ols = rnd.x().colPivHouseholderQr().solve(rnd.y());
    const Vector b = gls_beta(data, 2.0).beta;
    CHECK((b - ols).norm() < 1e-12 * (1.0 + ols.norm()));
  }

  TEST_CASE("gls_beta: hand-weighted mean") {
    Vector y(3);
    y << 1.0, 2.0, 3.0;
    const auto data = three_area(y);
    const auto est = gls_beta(data, 0.0);
    CHECK(est.beta[0] == doctest::Approx(2.75 / 1.75).epsilon(1e-14));
    CHECK(est.cov(0, 0) == doctest::Approx(1.0 / 1.75).epsilon(1e-14));
  }

  TEST_CASE("gls_beta: invariance under permutation of areas") {
    const auto data = test::random_dataset(11, 17, 3);
    std::vector<int> perm(17);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::rotate(perm.begin(), perm.begin() + 5, perm.end());
    Vector y(17), d(17);
    Matrix x(17, 3);
    for (int i = 0; i < 17; ++i) {
      y[i] = data.y()[perm[i]];
      d[i] = data.d()[perm[i]];
      x.row(i) = data.x().row(perm[i]);
    }
    AreaLevelDataset permuted(y, d, x);
    for (double a : {0.0, 0.3, 4.0}) {
      const Vector b1 = gls_beta(data, a).beta;
      const Vector b2 = gls_beta(permuted, a).beta;
      CHECK((b1 - b2).norm() < 1e-12 * (1.0 + b1.norm()));
    }
  }

  TEST_CASE("gls_beta: covariance symmetric with nonnegative eigenvalues") {
    const auto data = test::random_dataset(12, 30, 4);
    const Matrix cov = gls_beta(data, 1.1).cov;
    CHECK((cov - cov.transpose()).norm() <= 1e-14 * cov.norm());
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * es.eigenvalues().maxCoeff());
  }

  TEST_CASE("rank deficiency reports the condition number") {
    Matrix x(5, 2);
    x.col(0).setOnes();
    x.col(1).setConstant(2.0);
    CHECK_THROWS_AS(AreaLevelDataset(Vector::Zero(5), Vector::Ones(5), x), SingularDesignError);

    Matrix near(5, 2);
    near.col(0).setOnes();
    near.col(1) = Vector::Ones(5) + 1e-15 * Vector::LinSpaced(5, 0.0, 1.0);
    try {
      AreaLevelDataset data(Vector::Zero(5), Vector::Ones(5), near);
      (void)gls_beta(data, 1.0);
      FAIL("expected a singular design error");
    } catch (const SingularDesignError& e) {
      CHECK(e.condition_number() > kMaxConditionNumber);
    }
  }

  TEST_CASE("dataset validation") {
    CHECK_THROWS_AS(AreaLevelDataset(Vector::Zero(3), Vector::Zero(3), Matrix::Ones(3, 1)), DomainError);
    CHECK_THROWS_AS(AreaLevelDataset(Vector::Zero(3), Vector::Ones(2), Matrix::Ones(3, 1)), DomainError);
    CHECK_THROWS_AS(AreaLevelDataset(Vector::Zero(2), Vector::Ones(2), Matrix::Ones(2, 3)), DomainError);
    Vector bad = Vector::Zero(3);
    bad[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(AreaLevelDataset(bad, Vector::Ones(3), Matrix::Ones(3, 1)), DomainError);
    CHECK_THROWS_AS(AreaLevelDataset(Vector::Zero(2), Vector::Ones(2), Matrix::Ones(2, 1), {"a", "a"}), DomainError);
    const AreaLevelDataset ok(Vector::Zero(4), Vector::Ones(4), Matrix::Ones(4, 1));
    CHECK(ok.area_ids() == std::vector<std::string>{"1", "2", "3", "4"});
    CHECK(ok.supports_multi_goal());
    CHECK_FALSE(AreaLevelDataset(Vector::Zero(3), Vector::Ones(3), Matrix::Ones(3, 1)).supports_multi_goal());
  }

  TEST_CASE("blup: limits and hand computation") {
    Vector y(3);
    y << 0.0, 1.0, 2.0;
    const auto data = three_area(y);
    const double beta0 = gls_beta(data, 0.0).beta[0];
    for (std::size_t i = 0; i < 3; ++i) CHECK(blup(data, 0.0, i) == doctest::Approx(beta0).epsilon(1e-14));
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(blup(data, 1e10, i) - y[static_cast<int>(i)]) < 1e-6);

    // A = 1: weights 1/2, 1/3, 1/5.
    const double beta1 = (0.0 / 2 + 1.0 / 3 + 2.0 / 5) / (1.0 / 2 + 1.0 / 3 + 1.0 / 5);
    CHECK(blup(data, 1.0, 0) == doctest::Approx(0.5 * 0.0 + 0.5 * beta1).epsilon(1e-14));
    CHECK(blup(data, 1.0, 2) == doctest::Approx(0.2 * 2.0 + 0.8 * beta1).epsilon(1e-14));
  }

  TEST_CASE("blup lies between y_i and the synthetic estimate") {
    const auto data = test::random_dataset(21, 25, 3);
    for (double a : {0.0, 0.05, 1.0, 30.0}) {
      const Vector beta = gls_beta(data, a).beta;
      for (std::size_t i = 0; i < data.num_areas(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double synth = data.x().row(r).dot(beta);
        const double lo = std::min(synth, data.y()[r]) - 1e-12;
        const double hi = std::max(synth, data.y()[r]) + 1e-12;
        const double b = blup(data, a, i);
        CHECK(b >= lo);
        CHECK(b <= hi);
      }
    }
  }

  TEST_CASE("gls_beta_heterogeneous") {
    const auto data = test::random_dataset(4, 10, 2);
    std::vector<double> same(10, 0.8);
    const Vector b1 = gls_beta_heterogeneous(data, same).beta;
    const Vector b2 = gls_beta(data, 0.8).beta;
    CHECK((b1 - b2).norm() < 1e-13 * (1.0 + b2.norm()));

    const auto bal = test::balanced_dataset(6, 8);
    std::vector<double> constant(8, 2.5);
    CHECK(gls_beta_heterogeneous(bal, constant).beta[0] == doctest::Approx(bal.y().mean()).epsilon(1e-13));

    Vector y(3);
    y << 1.0, -1.0, 4.0;
    const auto small = three_area(y);
    std::vector<double> a{0.5, 1.0, 3.0};
    const double w0 = 1.0 / 1.5, w1 = 1.0 / 3.0, w2 = 1.0 / 7.0;
    const double expected = (w0 * 1.0 - w1 * 1.0 + w2 * 4.0) / (w0 + w1 + w2);
    CHECK(gls_beta_heterogeneous(small, a).beta[0] == doctest::Approx(expected).epsilon(1e-14));

    std::vector<double> bad{0.5, 0.0, 3.0};
    CHECK_THROWS_AS(gls_beta_heterogeneous(small, bad), DomainError);
  }
}

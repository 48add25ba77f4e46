#include <doctest.h>

#include <cmath>

#include "fhmg/errors.hpp"
#include "fhmg/estimators.hpp"
#include "fhmg/likelihood.hpp"
#include "support.hpp"

using namespace fhmg;

namespace {

// Dense m x m evaluation of l_RE and its derivatives through P explicitly.
struct DenseReml {
  double value, d1, d2, d3;
};

DenseReml dense_reml(const AreaLevelDataset& data, double A) {
  const Matrix& x = data.x();
  const Vector& y = data.y();
  const Matrix vinv = (data.d().array() + A).inverse().matrix().asDiagonal();
  const Matrix info = x.transpose() * vinv * x;
  const Matrix p = vinv - vinv * x * info.inverse() * x.transpose() * vinv;
  const Matrix p2 = p * p, p3 = p2 * p, p4 = p3 * p;
  DenseReml r;
  r.value = -0.5 * ((data.d().array() + A).log().sum() + std::log(info.determinant()) + y.dot(p * y));
  r.d1 = -0.5 * p.trace() + 0.5 * y.dot(p2 * y);
  r.d2 = 0.5 * p2.trace() - y.dot(p3 * y);
  r.d3 = -p3.trace() + 3.0 * y.dot(p4 * y);
  return r;
}

}  // namespace

TEST_SUITE("likelihood") {
  TEST_CASE("balanced closed form of l_RE") {
    const int m = 12;
    const auto data = test::balanced_dataset(2, m, 1.5);
    const double s = test::sum_sq_dev(data.y());
    auto closed = [&](double a) { return -0.5 * ((m - 1) * std::log(a + 1.5) + s / (a + 1.5)); };
    const double base = log_residual_likelihood(data, 0.3) - closed(0.3);
    for (double a : {0.0, 0.01, 1.0, 5.0, 100.0}) {
      CHECK(log_residual_likelihood(data, a) - closed(a) == doctest::Approx(base).epsilon(1e-12));
    }
  }

  TEST_CASE("residual quadratic form vanishes on the column space of X") {
    const auto rnd = test::random_dataset(5, 10, 3);
    const Vector y = rnd.x() * Vector::LinSpaced(3, -1.0, 2.0);
    const auto data = rnd.with_response(y);
    for (double a : {0.0, 0.5, 20.0}) CHECK(std::abs(evaluate_model(data, a).quadratic_form) < 1e-10);
  }

  TEST_CASE("l_RE is invariant under y -> y + X c") {
    const auto data = test::random_dataset(6, 14, 3);
    const auto shifted = data.with_response(data.y() + data.x() * Vector::LinSpaced(3, 3.0, -7.0));
    for (double a : {0.0, 0.2, 3.0}) {
      CHECK(log_residual_likelihood(shifted, a) == doctest::Approx(log_residual_likelihood(data, a)).epsilon(1e-11));
    }
  }

  TEST_CASE("trace recursions agree with the dense m x m evaluation") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto data = test::random_dataset(seed, 9, static_cast<int>(1 + seed % 3));
      for (double a : {0.05, 0.9, 12.0}) {
        const auto dense = dense_reml(data, a);
        const auto fast = residual_likelihood_derivatives(data, a);
        CHECK(fast.value == doctest::Approx(dense.value).epsilon(1e-10));
        CHECK(fast.d1 == doctest::Approx(dense.d1).epsilon(1e-9));
        CHECK(fast.d2 == doctest::Approx(dense.d2).epsilon(1e-9));
        CHECK(fast.d3 == doctest::Approx(dense.d3).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("analytic derivatives match central differences") {
    for (std::uint64_t seed = 10; seed < 16; ++seed) {
      const auto data = test::random_dataset(seed, 20, 2);
      for (double a : {0.1, 1.0, 6.0}) {
        const double h = 1e-4 * (1.0 + a);
        for (int k = 1; k <= 3; ++k) {
          auto lower = [&](double t) {
            return k == 1 ? log_residual_likelihood(data, t) : log_residual_likelihood_derivative(data, t, k - 1);
          };
          const double fd = test::central_difference(lower, a, h);
          const double an = log_residual_likelihood_derivative(data, a, k);
          CHECK(std::abs(an - fd) <= 1e-5 * std::max(1.0, std::abs(an)));
        }
      }
    }
  }

  TEST_CASE("derivatives require A > 0") {
    const auto data = test::random_dataset(1, 8, 1);
    CHECK_THROWS_AS(log_residual_likelihood_derivative(data, 0.0, 1), DomainError);
    CHECK_THROWS_AS(log_residual_likelihood_derivative(data, 1.0, 4), DomainError);
    CHECK_THROWS_AS(log_residual_likelihood(data, -1.0), DomainError);
  }

  TEST_CASE("first derivative vanishes at an interior REML maximizer") {
    const auto data = test::random_dataset(17, 30, 2);
    const double a = maximize_adjusted_likelihood(data, FitMethod::reml(), 0).argmax;
    REQUIRE(a > 0.0);
    CHECK(std::abs(log_residual_likelihood_derivative(data, a, 1)) < 1e-8);
  }

  TEST_CASE("adjustment examples") {
    Vector d(3);
    d << 1.0, 2.0, 4.0;
    const AreaLevelDataset data(Vector::Zero(3), d, Matrix::Ones(3, 1));
    const AdjustmentSpec power = PowerAdjustment{1.0, 0};
    CHECK(log_adjustment(power, data, 1.0) == doctest::Approx(std::log(2.0)));
    CHECK(log_adjustment_derivative(power, data, 1.0) == doctest::Approx(0.5));
    CHECK(log_adjustment(RemlAdjustment{}, data, 3.0) == 0.0);
    CHECK(log_adjustment_derivative(RemlAdjustment{}, data, 3.0) == 0.0);

    const AdjustmentSpec mg = MultiGoalAdjustment{1};
    CHECK(std::isinf(log_adjustment(mg, data, 0.0)));
    CHECK(log_adjustment(mg, data, 0.0) < 0.0);
    CHECK(vanishes_at_zero(mg));
    CHECK_FALSE(vanishes_at_zero(power));
    CHECK(is_area_specific(mg));
    CHECK_FALSE(is_area_specific(MlAdjustment{}));
  }

  TEST_CASE("log h_plus derivative is O(1/m)") {
    const auto data = test::random_dataset(3, 100, 1);
    const double g = log_h_plus_derivative(data, 1.0);
    CHECK(g > 0.0);
    CHECK(g * 100 < 1.0);
    const auto small = test::random_dataset(3, 10, 1);
    CHECK(log_h_plus_derivative(small, 1.0) > g);
  }

  TEST_CASE("adjustment derivatives match central differences") {
    const auto data = test::random_dataset(31, 15, 3);
    const std::vector<AdjustmentSpec> specs{MlAdjustment{}, PowerAdjustment{0.7, 4}, MultiGoalAdjustment{9}};
    for (const auto& spec : specs) {
      for (double a : {0.05, 0.8, 9.0}) {
        const double fd = test::central_difference([&](double t) { return log_adjustment(spec, data, t); }, a,
                                                   1e-5 * (1.0 + a));
        const double an = log_adjustment_derivative(spec, data, a);
        CHECK(std::abs(an - fd) <= 1e-6 * std::max(1.0, std::abs(an)));
      }
    }
  }

  TEST_CASE("custom adjustments") {
    const auto data = test::random_dataset(2, 8, 1);
    const AdjustmentSpec shifted = CustomAdjustment{[](double a) { return std::log1p(a) + 3.0; },
                                                    [](double a) { return 1.0 / (1.0 + a); }};
    const AdjustmentSpec plain = CustomAdjustment{[](double a) { return std::log1p(a); },
                                                  [](double a) { return 1.0 / (1.0 + a); }};
    CHECK(log_adjustment(shifted, data, 2.0) - log_adjustment(plain, data, 2.0) == doctest::Approx(3.0));
    CHECK(log_adjustment_derivative(shifted, data, 2.0) == log_adjustment_derivative(plain, data, 2.0));
    const AdjustmentSpec broken = CustomAdjustment{[](double) { return std::nan(""); }, [](double) { return 0.0; }};
    CHECK_THROWS_AS(log_adjustment(broken, data, 1.0), NonFiniteError);
  }

  TEST_CASE("prior examples") {
    const auto bal = test::balanced_dataset(4, 10, 2.0);
    const double c = log_prior(MultiGoalPrior{3}, bal, 0.1);
    for (double a : {0.5, 3.0, 50.0}) CHECK(log_prior(MultiGoalPrior{3}, bal, a) == doctest::Approx(c).epsilon(1e-13));
    CHECK(log_prior(FlatPrior{}, bal, 2.0) == 0.0);

    Vector d(2);
    d << 1.0, 3.0;
    const AreaLevelDataset two(Vector::Zero(2), d, Matrix::Ones(2, 1));
    CHECK(log_prior(MultiGoalPrior{0}, two, 1.0) == doctest::Approx(2.0 * std::log(2.0) + std::log(0.3125)));
  }

  TEST_CASE("multi-goal prior equals the general prior with s = 1 up to a constant") {
    const auto data = test::random_dataset(7, 12, 2);
    const PriorSpec general = GeneralMultiGoalPrior{PowerAdjustment{1.0, 5}, 5};
    const double c = log_prior(MultiGoalPrior{5}, data, 1.0) - log_prior(general, data, 1.0);
    for (double a : {0.01, 0.3, 7.0, 300.0}) {
      CHECK(log_prior(MultiGoalPrior{5}, data, a) - log_prior(general, data, a) == doctest::Approx(c).epsilon(1e-12));
    }
  }

  TEST_CASE("rho1 of the multi-goal prior") {
    const auto data = test::random_dataset(8, 16, 2);
    for (double a : {0.2, 1.5}) {
      const double di = data.d()[4];
      const double expected =
          2.0 / (a + di) - 2.0 * trace_v_inv_pow(data, a, 3) / trace_v_inv_pow(data, a, 2);
      CHECK(log_prior_derivative(MultiGoalPrior{4}, data, a) == doctest::Approx(expected).epsilon(1e-13));
    }
  }

  TEST_CASE("prior derivatives match central differences") {
    const auto data = test::random_dataset(9, 11, 2);
    const std::vector<PriorSpec> priors{FlatPrior{}, MultiGoalPrior{2},
                                        GeneralMultiGoalPrior{MultiGoalAdjustment{6}, 6},
                                        GaneshLahiriPrior::uniform(11)};
    for (const auto& prior : priors) {
      for (double a : {0.05, 1.0, 10.0}) {
        const double fd = test::central_difference([&](double t) { return log_prior(prior, data, t); }, a,
                                                   1e-5 * (1.0 + a));
        const double an = log_prior_derivative(prior, data, a);
        CHECK(std::abs(an - fd) <= 1e-6 * std::max(1.0, std::abs(an)));
      }
    }
  }

  TEST_CASE("Ganesh-Lahiri weights are validated") {
    const auto data = test::random_dataset(9, 4, 1);
    CHECK_THROWS_AS(log_prior(GaneshLahiriPrior{{0.5, 0.5, 0.5, -0.5}}, data, 1.0), DomainError);
    CHECK_THROWS_AS(log_prior(GaneshLahiriPrior{{0.5, 0.5}}, data, 1.0), DomainError);
    CHECK_THROWS_AS(log_prior(GaneshLahiriPrior{{0.3, 0.3, 0.3, 0.3}}, data, 1.0), DomainError);
    CHECK(std::isfinite(log_prior(GaneshLahiriPrior{{0.0, 0.0, 0.0, 1.0}}, data, 1.0)));
  }

  TEST_CASE("propriety truth table") {
    auto check = [](double s, int m, int p, bool raw, bool general) {
      const auto r = check_propriety(s, m, p);
      CHECK(r.proper_as_raw_adjustment == raw);
      CHECK(r.proper_as_general_mg_prior == general);
    };
    check(2.0, 10, 2, true, true);
    check(3.0, 10, 2, false, true);
    check(4.0, 10, 2, false, false);
    check(2.999999, 10, 2, true, true);
    CHECK_THROWS_AS(check_propriety(1.0, 3, 3), DomainError);
    CHECK_THROWS_AS(check_propriety(-1.0, 10, 2), DomainError);

    const auto data = test::random_dataset(1, 10, 2);
    CHECK(check_propriety(PowerAdjustment{2.0, 0}, data).proper_as_raw_adjustment);
    CHECK_THROWS_AS(check_propriety(MultiGoalAdjustment{0}, data), DomainError);
  }
}

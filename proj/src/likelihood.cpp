#include "fhmg/likelihood.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "fhmg/errors.hpp"
#include "overloaded.hpp"

namespace fhmg {

namespace {

using detail::overloaded;

Vector inverse_variances(const AreaLevelDataset& data, double A) {
  return (data.d().array() + A).inverse();
}

Matrix weighted_cross_product(const Matrix& x, const Vector& w) {
  return x.transpose() * w.asDiagonal() * x;
}

void require_area(const AreaLevelDataset& data, std::size_t area, const char* where) {
  if (area >= data.num_areas()) {
    std::ostringstream os;
    os << where << ": area index " << area << " out of range (m = " << data.num_areas() << ")";
    throw DomainError(os.str());
  }
}

double checked(double v, const char* what) {
  if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
    throw NonFiniteError(std::string(what) + " is not finite");
  }
  return v;
}

}  // namespace

ModelEvaluation evaluate_model(const AreaLevelDataset& data, double A) {
  if (!(A >= 0.0) || !std::isfinite(A)) throw DomainError("l_RE: A must be finite and nonnegative");
  const Vector w = inverse_variances(data, A);
  ModelEvaluation ev;
  ev.A = A;
  ev.gls = weighted_gls(data, w);
  ev.residual = data.y() - data.x() * ev.gls.beta;
  ev.quadratic_form = (w.array() * ev.residual.array().square()).sum();
  const double log_det_v = -w.array().log().sum();
  ev.log_likelihood = -0.5 * (log_det_v + ev.gls.log_det_information + ev.quadratic_form);
  return ev;
}

double log_residual_likelihood(const AreaLevelDataset& data, double A) {
  return evaluate_model(data, A).log_likelihood;
}

ResidualLikelihoodDerivatives residual_likelihood_derivatives(const AreaLevelDataset& data, double A) {
  if (!(A > 0.0)) throw DomainError("l_RE derivatives are defined for A > 0 only");
  const Matrix& x = data.x();
  const Vector w = inverse_variances(data, A);
  const GlsEstimate gls = weighted_gls(data, w);
  const Matrix& q = gls.cov;

  // P v = W v - W X Q X'W v, applied without forming the m x m matrix.
  auto apply_p = [&](const Vector& v) -> Vector {
    const Vector wv = w.cwiseProduct(v);
    return wv - w.cwiseProduct(x * (q * (x.transpose() * wv)));
  };

  const Vector residual = data.y() - x * gls.beta;
  const Vector py = w.cwiseProduct(residual);
  const Vector p2y = apply_p(py);
  const double y_p2_y = py.squaredNorm();
  const double y_p3_y = py.dot(p2y);
  const double y_p4_y = p2y.squaredNorm();

  const Vector w2 = w.cwiseProduct(w);
  const Vector w3 = w2.cwiseProduct(w);
  const Vector w4 = w3.cwiseProduct(w);
  const Matrix qg2 = q * weighted_cross_product(x, w2);
  const Matrix qg3 = q * weighted_cross_product(x, w3);
  const Matrix qg4 = q * weighted_cross_product(x, w4);

  const double tr_p = w.sum() - qg2.trace();
  const double tr_p2 = w2.sum() - 2.0 * qg3.trace() + (qg2 * qg2).trace();
  const double tr_p3 =
      w3.sum() - 3.0 * qg4.trace() + 3.0 * (qg2 * qg3).trace() - (qg2 * qg2 * qg2).trace();

  ResidualLikelihoodDerivatives out;
  out.value = -0.5 * (-w.array().log().sum() + gls.log_det_information + residual.dot(py));
  out.d1 = -0.5 * tr_p + 0.5 * y_p2_y;
  out.d2 = 0.5 * tr_p2 - y_p3_y;
  out.d3 = -tr_p3 + 3.0 * y_p4_y;
  return out;
}

double log_residual_likelihood_derivative(const AreaLevelDataset& data, double A, int order) {
  if (order < 1 || order > 3) throw DomainError("l_RE derivative order must be 1, 2 or 3");
  if (order == 1) {
    // First derivative only needs tr(P) and |Py|^2.
    if (!(A > 0.0)) throw DomainError("l_RE derivatives are defined for A > 0 only");
    const Vector w = inverse_variances(data, A);
    const GlsEstimate gls = weighted_gls(data, w);
    const Vector py = w.cwiseProduct(data.y() - data.x() * gls.beta);
    const double tr_p = w.sum() - (gls.cov * weighted_cross_product(data.x(), w.cwiseProduct(w))).trace();
    return -0.5 * tr_p + 0.5 * py.squaredNorm();
  }
  const auto all = residual_likelihood_derivatives(data, A);
  return order == 2 ? all.d2 : all.d3;
}

// ---------------------------------------------------------------------------

double log_h_plus(const AreaLevelDataset& data, double A) {
  if (!(A >= 0.0)) throw DomainError("h_+: A must be nonnegative");
  const double m = static_cast<double>(data.num_areas());
  double s = 0.0;
  for (double d : data.d()) s += A / (A + d);
  if (s == 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(std::atan(s)) / m;
}

double log_h_plus_derivative(const AreaLevelDataset& data, double A) {
  if (!(A > 0.0)) throw DomainError("h_+ derivative requires A > 0");
  const double m = static_cast<double>(data.num_areas());
  double s = 0.0;
  double ds = 0.0;
  for (double d : data.d()) {
    s += A / (A + d);
    ds += d / ((A + d) * (A + d));
  }
  return ds / ((1.0 + s * s) * std::atan(s) * m);
}

double log_adjustment(const AdjustmentSpec& spec, const AreaLevelDataset& data, double A) {
  if (!(A >= 0.0)) throw DomainError("log_adjustment: A must be nonnegative");
  return std::visit(
      overloaded{
          [](const RemlAdjustment&) { return 0.0; },
          [&](const MlAdjustment&) { return 0.5 * gls_beta(data, A).log_det_information; },
          [&](const PowerAdjustment& p) {
            require_area(data, p.area, "power adjustment");
            return p.s * std::log(A + data.d()[static_cast<Eigen::Index>(p.area)]);
          },
          [&](const MultiGoalAdjustment& mg) {
            require_area(data, mg.area, "multi-goal adjustment");
            return log_h_plus(data, A) + std::log(A + data.d()[static_cast<Eigen::Index>(mg.area)]);
          },
          [&](const CustomAdjustment& c) {
            const double v = c.log_h(A);
            if (!std::isfinite(v)) throw NonFiniteError("custom log h(A) is not finite");
            return v;
          },
      },
      spec);
}

double log_adjustment_derivative(const AdjustmentSpec& spec, const AreaLevelDataset& data, double A) {
  if (!(A >= 0.0)) throw DomainError("log_adjustment_derivative: A must be nonnegative");
  return std::visit(
      overloaded{
          [](const RemlAdjustment&) { return 0.0; },
          [&](const MlAdjustment&) {
            const Vector w = inverse_variances(data, A);
            const GlsEstimate gls = weighted_gls(data, w);
            return -0.5 * (gls.cov * weighted_cross_product(data.x(), w.cwiseProduct(w))).trace();
          },
          [&](const PowerAdjustment& p) {
            require_area(data, p.area, "power adjustment");
            return p.s / (A + data.d()[static_cast<Eigen::Index>(p.area)]);
          },
          [&](const MultiGoalAdjustment& mg) {
            require_area(data, mg.area, "multi-goal adjustment");
            return log_h_plus_derivative(data, A) + 1.0 / (A + data.d()[static_cast<Eigen::Index>(mg.area)]);
          },
          [&](const CustomAdjustment& c) {
            if (!c.log_h_derivative) throw DomainError("custom adjustment has no derivative evaluator");
            const double v = c.log_h_derivative(A);
            if (!std::isfinite(v)) throw NonFiniteError("custom d log h / dA is not finite");
            return v;
          },
      },
      spec);
}

bool is_area_specific(const AdjustmentSpec& spec) {
  return std::holds_alternative<PowerAdjustment>(spec) || std::holds_alternative<MultiGoalAdjustment>(spec);
}

AdjustmentSpec with_area(const AdjustmentSpec& spec, std::size_t area) {
  if (auto* p = std::get_if<PowerAdjustment>(&spec)) return PowerAdjustment{p->s, area};
  if (std::holds_alternative<MultiGoalAdjustment>(spec)) return MultiGoalAdjustment{area};
  return spec;
}

bool vanishes_at_zero(const AdjustmentSpec& spec) {
  return std::holds_alternative<MultiGoalAdjustment>(spec);
}

// ---------------------------------------------------------------------------

GaneshLahiriPrior GaneshLahiriPrior::uniform(std::size_t m) {
  return GaneshLahiriPrior{std::vector<double>(m, 1.0 / static_cast<double>(m))};
}

namespace {

void validate_weights(const GaneshLahiriPrior& gl, const AreaLevelDataset& data) {
  if (gl.weights.size() != data.num_areas()) {
    throw DomainError("Ganesh-Lahiri prior: need one weight per area");
  }
  double total = 0.0;
  for (double v : gl.weights) {
    if (!(v >= 0.0)) throw DomainError("Ganesh-Lahiri prior: weights must be nonnegative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("Ganesh-Lahiri prior: weights must sum to 1");
}

struct WeightedTraces {
  double num2 = 0.0;  // sum w_i D_i^2 (A + D_i)^{-2}
  double num3 = 0.0;  // sum w_i D_i^2 (A + D_i)^{-3}
};

WeightedTraces weighted_traces(const GaneshLahiriPrior& gl, const AreaLevelDataset& data, double A) {
  WeightedTraces t;
  for (std::size_t i = 0; i < data.num_areas(); ++i) {
    const double d = data.d()[static_cast<Eigen::Index>(i)];
    const double v = A + d;
    t.num2 += gl.weights[i] * d * d / (v * v);
    t.num3 += gl.weights[i] * d * d / (v * v * v);
  }
  return t;
}

}  // namespace

double log_prior(const PriorSpec& prior, const AreaLevelDataset& data, double A) {
  if (!(A >= 0.0)) throw DomainError("log_prior: A must be nonnegative");
  const double value = std::visit(
      overloaded{
          [](const FlatPrior&) { return 0.0; },
          [&](const MultiGoalPrior& mg) {
            require_area(data, mg.area, "multi-goal prior");
            const double v = A + data.d()[static_cast<Eigen::Index>(mg.area)];
            return 2.0 * std::log(v) + std::log(trace_v_inv_pow(data, A, 2));
          },
          [&](const GeneralMultiGoalPrior& g) {
            require_area(data, g.area, "general multi-goal prior");
            const double v = A + data.d()[static_cast<Eigen::Index>(g.area)];
            return log_adjustment(with_area(g.adjustment, g.area), data, A) + std::log(v) +
                   std::log(trace_v_inv_pow(data, A, 2));
          },
          [&](const GaneshLahiriPrior& gl) {
            validate_weights(gl, data);
            return std::log(trace_v_inv_pow(data, A, 2)) - std::log(weighted_traces(gl, data, A).num2);
          },
      },
      prior);
  return checked(value, "log prior");
}

double log_prior_derivative(const PriorSpec& prior, const AreaLevelDataset& data, double A) {
  if (!(A > 0.0)) throw DomainError("log_prior_derivative: A must be positive");
  const double ratio = 2.0 * trace_v_inv_pow(data, A, 3) / trace_v_inv_pow(data, A, 2);
  const double value = std::visit(
      overloaded{
          [](const FlatPrior&) { return 0.0; },
          [&](const MultiGoalPrior& mg) {
            require_area(data, mg.area, "multi-goal prior");
            return 2.0 / (A + data.d()[static_cast<Eigen::Index>(mg.area)]) - ratio;
          },
          [&](const GeneralMultiGoalPrior& g) {
            require_area(data, g.area, "general multi-goal prior");
            return log_adjustment_derivative(with_area(g.adjustment, g.area), data, A) +
                   1.0 / (A + data.d()[static_cast<Eigen::Index>(g.area)]) - ratio;
          },
          [&](const GaneshLahiriPrior& gl) {
            validate_weights(gl, data);
            const auto t = weighted_traces(gl, data, A);
            return -ratio + 2.0 * t.num3 / t.num2;
          },
      },
      prior);
  return checked(value, "log prior derivative");
}

const char* prior_name(const PriorSpec& prior) {
  return std::visit(overloaded{
                        [](const FlatPrior&) { return "flat"; },
                        [](const MultiGoalPrior&) { return "multi-goal"; },
                        [](const GeneralMultiGoalPrior&) { return "general-multi-goal"; },
                        [](const GaneshLahiriPrior&) { return "ganesh-lahiri"; },
                    },
                    prior);
}

ProprietyCheck check_propriety(double s, int m, int p) {
  if (p < 1 || m <= p) throw DomainError("check_propriety: need m > p >= 1");
  if (!(s > 0.0)) throw DomainError("check_propriety: s must be positive");
  ProprietyCheck out;
  out.proper_as_raw_adjustment = s < (m - p - 2) / 2.0;
  out.proper_as_general_mg_prior = s < (m - p) / 2.0;
  return out;
}

ProprietyCheck check_propriety(const AdjustmentSpec& spec, const AreaLevelDataset& data) {
  const auto* power = std::get_if<PowerAdjustment>(&spec);
  if (power == nullptr) {
    throw DomainError("propriety conditions are only established for power adjustments (A + D_i)^s");
  }
  return check_propriety(power->s, static_cast<int>(data.num_areas()),
                         static_cast<int>(data.num_covariates()));
}

}  // namespace fhmg

#include "fhmg/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "fhmg/errors.hpp"
#include "fhmg/parallel.hpp"

namespace fhmg {

namespace {

constexpr int kGridPoints = 71;
constexpr double kLogSpan = 35.0;
constexpr double kMinLogA = -700.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

class SearchState {
 public:
  SearchState(const HalfLineObjective& f, SearchDiagnostics& diag) : f_(f), diag_(diag) {}

  double value(double A) {
    ++diag_.evaluations;
    const double v = f_.value(A);
    if (std::isnan(v)) return -kInf;
    if (v == kInf) throw NonFiniteError("objective evaluated to +inf");
    return v;
  }

  double derivative(double A) {
    ++diag_.evaluations;
    return f_.derivative(A);
  }

 private:
  const HalfLineObjective& f_;
  SearchDiagnostics& diag_;
};

struct Candidate {
  double A = 0.0;
  double value = -kInf;
};

std::size_t first_argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

// Brent on [lo, hi] in the variable u with A = to_a(u); returns the best point seen.
template <class ToA>
Candidate brent(SearchState& state, double lo, double hi, ToA to_a) {
  std::uintmax_t max_iter = 200;
  auto neg = [&](double u) { return -state.value(to_a(u)); };
  const auto [u, fu] = boost::math::tools::brent_find_minima(neg, lo, hi,
                                                              std::numeric_limits<double>::digits / 2, max_iter);
  return Candidate{to_a(u), -fu};
}

// Refine a Brent maximizer by solving f'(A) = 0 on a sign-changing bracket.
Candidate polish(SearchState& state, double a_lo, double a_hi, const Candidate& brent_point) {
  if (!(a_lo > 0.0)) {
    if (!(brent_point.A > 0.0)) return brent_point;
    a_lo = brent_point.A * 0.5;
  }
  double g_lo = 0.0;
  double g_hi = 0.0;
  try {
    g_lo = state.derivative(a_lo);
    g_hi = state.derivative(a_hi);
  } catch (const std::exception&) {
    return brent_point;
  }
  if (!(g_lo > 0.0 && g_hi < 0.0)) return brent_point;

  std::uintmax_t max_iter = 100;
  auto grad = [&](double A) { return state.derivative(A); };
  const auto [r_lo, r_hi] = boost::math::tools::toms748_solve(
      grad, a_lo, a_hi, g_lo, g_hi, boost::math::tools::eps_tolerance<double>(52), max_iter);
  const double root = 0.5 * (r_lo + r_hi);
  const double f_root = state.value(root);
  // Prefer the stationary point unless it is measurably worse.
  if (f_root >= brent_point.value - 1e-12 * (1.0 + std::abs(brent_point.value))) {
    return Candidate{root, f_root};
  }
  return brent_point;
}

Maximum search_once(const HalfLineObjective& objective, double upper, BoundaryPolicy policy) {
  Maximum out;
  SearchDiagnostics& diag = out.diagnostics;
  diag.upper_bound = upper;
  SearchState state(objective, diag);

  const double t_top = std::log(upper);
  const double step = kLogSpan / (kGridPoints - 1);
  std::vector<double> ts;
  std::vector<double> fs;
  auto scan = [&](double t_lo) {
    std::vector<double> new_t;
    std::vector<double> new_f;
    for (int k = 0; k < kGridPoints; ++k) {
      const double t = t_lo + step * k;
      if (!ts.empty() && t >= ts.front() - 0.5 * step) break;
      new_t.push_back(t);
      new_f.push_back(state.value(std::exp(t)));
    }
    ts.insert(ts.begin(), new_t.begin(), new_t.end());
    fs.insert(fs.begin(), new_f.begin(), new_f.end());
  };
  scan(t_top - kLogSpan);
  std::size_t best = first_argmax(fs);

  const bool allow_zero = policy == BoundaryPolicy::allow_zero;
  const double f_zero = allow_zero ? state.value(0.0) : -kInf;

  if (!allow_zero) {
    // Keep extending downward while the best probe is the smallest one.
    while (best == 0 && ts.front() - kLogSpan > kMinLogA && std::isfinite(fs.front())) {
      scan(ts.front() - kLogSpan);
      best = first_argmax(fs);
    }
  }
  if (!std::isfinite(fs[best]) && !std::isfinite(f_zero)) {
    throw NonFiniteError("objective is non-finite over the whole search bracket");
  }

  Candidate result;
  if (allow_zero && (f_zero >= fs[best] || best == 0)) {
    const double a_hi = std::exp(ts[std::min<std::size_t>(1, ts.size() - 1)]);
    diag.bracket_lo = 0.0;
    diag.bracket_hi = a_hi;
    const Candidate b = brent(state, 0.0, a_hi, [](double a) { return a; });
    result = b.value > f_zero ? polish(state, 0.0, a_hi, b) : Candidate{0.0, f_zero};
    if (!(result.value > f_zero)) result = Candidate{0.0, f_zero};
  } else {
    const std::size_t lo = best == 0 ? 0 : best - 1;
    const std::size_t hi = std::min(best + 1, ts.size() - 1);
    diag.bracket_lo = std::exp(ts[lo]);
    diag.bracket_hi = std::exp(ts[hi]);
    const Candidate b = brent(state, ts[lo], ts[hi], [](double t) { return std::exp(t); });
    result = polish(state, diag.bracket_lo, diag.bracket_hi, b);
    if (fs[best] > result.value) result = Candidate{std::exp(ts[best]), fs[best]};
    diag.hit_upper_bound = best + 1 == ts.size() && result.A >= 0.999 * upper;
  }

  out.argmax = result.A;
  diag.objective = result.value;
  diag.at_zero = result.A == 0.0;
  if (result.A > 0.0) {
    try {
      diag.gradient = objective.derivative(result.A);
    } catch (const std::exception&) {
      diag.gradient = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

}  // namespace

Maximum maximize_on_half_line(const HalfLineObjective& objective, double upper_bound,
                              BoundaryPolicy policy, int max_escalations) {
  if (!(upper_bound > 0.0) || !std::isfinite(upper_bound)) {
    throw DomainError("search upper bound must be positive and finite");
  }
  int evaluations = 0;
  for (int escalation = 0;; ++escalation) {
    Maximum m = search_once(objective, upper_bound, policy);
    evaluations += m.diagnostics.evaluations;
    m.diagnostics.evaluations = evaluations;
    m.diagnostics.escalations = escalation;
    if (!m.diagnostics.hit_upper_bound || escalation >= max_escalations) return m;
    upper_bound *= 10.0;
  }
}

// ---------------------------------------------------------------------------

FitMethod FitMethod::reml() { return FitMethod{}; }

FitMethod FitMethod::ml() {
  FitMethod m;
  m.adjustment = MlAdjustment{};
  return m;
}

FitMethod FitMethod::power(double s) {
  if (!(s > 0.0)) throw DomainError("power adjustment needs s > 0");
  FitMethod m;
  m.adjustment = PowerAdjustment{s, 0};
  return m;
}

FitMethod FitMethod::multi_goal() {
  FitMethod m;
  m.adjustment = MultiGoalAdjustment{0};
  m.boundary_policy = BoundaryPolicy::strictly_positive;
  return m;
}

std::string FitMethod::name() const {
  if (std::holds_alternative<RemlAdjustment>(adjustment)) return "reml";
  if (std::holds_alternative<MlAdjustment>(adjustment)) return "ml";
  if (const auto* p = std::get_if<PowerAdjustment>(&adjustment)) {
    std::ostringstream os;
    os << "adj-power(" << p->s << ")";
    return os.str();
  }
  if (std::holds_alternative<MultiGoalAdjustment>(adjustment)) return "mg";
  return "custom";
}

double search_upper_bound(const AreaLevelDataset& data, double factor) {
  if (!(factor > 0.0)) throw DomainError("search_bound_factor must be positive");
  return factor * (data.response_variance() + data.d().maxCoeff());
}

namespace {

void validate_method(const AreaLevelDataset& data, const FitMethod& method) {
  if (vanishes_at_zero(method.adjustment) && method.boundary_policy != BoundaryPolicy::strictly_positive) {
    throw DomainError("an adjustment vanishing at A = 0 requires a strictly positive search");
  }
  if (std::holds_alternative<MultiGoalAdjustment>(method.adjustment) && !data.supports_multi_goal()) {
    std::ostringstream os;
    os << "multi-goal estimation needs m > p + 2 (m = " << data.num_areas()
       << ", p = " << data.num_covariates() << ")";
    throw DomainError(os.str());
  }
}

HalfLineObjective adjusted_objective(const AreaLevelDataset& data, const AdjustmentSpec& adjustment) {
  HalfLineObjective f;
  f.value = [&data, adjustment](double A) {
    const double lh = log_adjustment(adjustment, data, A);
    if (lh == -kInf) return -kInf;
    return lh + log_residual_likelihood(data, A);
  };
  f.derivative = [&data, adjustment](double A) {
    return log_adjustment_derivative(adjustment, data, A) + log_residual_likelihood_derivative(data, A, 1);
  };
  return f;
}

}  // namespace

double adjusted_log_likelihood(const AreaLevelDataset& data, const FitMethod& method, std::size_t area,
                               double A) {
  return adjusted_objective(data, with_area(method.adjustment, area)).value(A);
}

Maximum maximize_adjusted_likelihood(const AreaLevelDataset& data, const FitMethod& method,
                                     std::size_t area) {
  validate_method(data, method);
  if (area >= data.num_areas()) throw DomainError("area index out of range");
  const auto objective = adjusted_objective(data, with_area(method.adjustment, area));
  return maximize_on_half_line(objective, search_upper_bound(data, method.search_bound_factor),
                               method.boundary_policy);
}

std::vector<double> FitResult::a_values() const {
  std::vector<double> out;
  out.reserve(areas.size());
  for (const auto& a : areas) out.push_back(a.A_hat);
  return out;
}

namespace {

AreaFit make_area_fit(const AreaLevelDataset& data, std::size_t i, const Maximum& max, Vector beta) {
  AreaFit a;
  a.area_id = data.area_ids()[i];
  a.A_hat = max.argmax;
  a.B_hat = shrinkage(a.A_hat, data.d()[static_cast<Eigen::Index>(i)]);
  a.theta_hat = blup(data, a.A_hat, i, beta);
  a.beta_hat = std::move(beta);
  a.diagnostics = max.diagnostics;
  return a;
}

}  // namespace

FitResult fit(const AreaLevelDataset& data, const FitMethod& method, unsigned threads) {
  validate_method(data, method);
  const std::size_t m = data.num_areas();
  FitResult out;
  out.method = method;
  out.areas.resize(m);
  out.shared_estimate = !is_area_specific(method.adjustment);

  if (out.shared_estimate) {
    const Maximum max = maximize_adjusted_likelihood(data, method, 0);
    out.beta_hat = gls_beta(data, max.argmax).beta;
    for (std::size_t i = 0; i < m; ++i) out.areas[i] = make_area_fit(data, i, max, out.beta_hat);
    return out;
  }

  parallel_for(m, threads, [&](std::size_t i) {
    const Maximum max = maximize_adjusted_likelihood(data, method, i);
    out.areas[i] = make_area_fit(data, i, max, gls_beta(data, max.argmax).beta);
  });
  Vector w(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    w[static_cast<Eigen::Index>(i)] = 1.0 / (out.areas[i].A_hat + data.d()[static_cast<Eigen::Index>(i)]);
  }
  out.beta_hat = weighted_gls(data, w).beta;
  return out;
}

Theorem1Gap theorem1_gap(const AreaLevelDataset& data, const FitMethod& method, std::size_t area) {
  Theorem1Gap gap;
  FitMethod reml = FitMethod::reml();
  reml.search_bound_factor = method.search_bound_factor;
  gap.a_reml = maximize_adjusted_likelihood(data, reml, area).argmax;
  gap.a_adjusted = maximize_adjusted_likelihood(data, method, area).argmax;
  gap.observed = gap.a_adjusted - gap.a_reml;
  gap.reml_at_boundary = !(gap.a_reml > 0.0);
  if (gap.reml_at_boundary) {
    gap.predicted = std::numeric_limits<double>::quiet_NaN();
    return gap;
  }
  const AdjustmentSpec spec = with_area(method.adjustment, area);
  gap.predicted = 2.0 * log_adjustment_derivative(spec, data, gap.a_reml) / trace_v_inv_pow(data, gap.a_reml, 2);
  return gap;
}

}  // namespace fhmg

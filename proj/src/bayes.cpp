#include "fhmg/bayes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "fhmg/errors.hpp"
#include "fhmg/estimators.hpp"
#include "fhmg/parallel.hpp"

namespace fhmg {

double marginal_log_posterior(const AreaLevelDataset& data, const PriorSpec& prior, double A) {
  if (!(A > 0.0)) throw DomainError("marginal_log_posterior: A must be positive");
  return log_residual_likelihood(data, A) + log_prior(prior, data, A);
}

PriorSpec prior_for_area(const PriorSpec& prior, std::size_t area) {
  if (std::holds_alternative<MultiGoalPrior>(prior)) return MultiGoalPrior{area};
  if (const auto* g = std::get_if<GeneralMultiGoalPrior>(&prior)) {
    return GeneralMultiGoalPrior{with_area(g->adjustment, area), area};
  }
  return prior;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Integrand components, all multiplied by the unnormalized weight w(t).
enum Component : std::size_t { kW, kWB, kWB2, kWTheta, kWTheta2, kWG12, kComponents };
using Values = std::array<double, kComponents>;

struct Node {
  double log_f = kNegInf;  // log of L_RE(A) pi(A) A at A = e^t
  double b = 0.0;
  double theta = 0.0;
  double g12 = 0.0;
};

struct Leaf {
  double a = 0.0;
  double b = 0.0;
  std::array<Node, 5> nodes;
};

class PosteriorIntegrand {
 public:
  PosteriorIntegrand(const AreaLevelDataset& data, const PriorSpec& prior, std::size_t area)
      : data_(data), prior_(prior), area_(static_cast<Eigen::Index>(area)) {}

  double log_f(double t) const {
    const double A = std::exp(t);
    return log_residual_likelihood(data_, A) + log_prior(prior_, data_, A) + t;
  }

  Node node(double t) const {
    const double A = std::exp(t);
    const ModelEvaluation ev = evaluate_model(data_, A);
    Node n;
    n.log_f = ev.log_likelihood + log_prior(prior_, data_, A) + t;
    const double d = data_.d()[area_];
    n.b = d / (A + d);
    const auto xi = data_.x().row(area_);
    const double synthetic = xi.dot(ev.gls.beta);
    n.theta = (1.0 - n.b) * data_.y()[area_] + n.b * synthetic;
    n.g12 = A * n.b + n.b * n.b * xi.dot(ev.gls.cov * xi.transpose());
    return n;
  }

  HalfLineObjective mode_objective() const {
    HalfLineObjective f;
    f.value = [this](double A) {
      return log_residual_likelihood(data_, A) + log_prior(prior_, data_, A) + std::log(A);
    };
    f.derivative = [this](double A) {
      return log_residual_likelihood_derivative(data_, A, 1) + log_prior_derivative(prior_, data_, A) + 1.0 / A;
    };
    return f;
  }

 private:
  const AreaLevelDataset& data_;
  const PriorSpec& prior_;
  Eigen::Index area_;
};

Values weighted(const Node& n, double log_scale) {
  const double w = n.log_f == kNegInf ? 0.0 : std::exp(n.log_f - log_scale);
  return {w, w * n.b, w * n.b * n.b, w * n.theta, w * n.theta * n.theta, w * n.g12};
}

// Simpson on the 3 outer nodes and on all 5 nodes of a panel.
template <class F>
std::pair<double, double> simpson_pair(const Leaf& leaf, F&& f) {
  const double h = leaf.b - leaf.a;
  const double f0 = f(leaf.nodes[0]), f1 = f(leaf.nodes[1]), f2 = f(leaf.nodes[2]), f3 = f(leaf.nodes[3]),
               f4 = f(leaf.nodes[4]);
  const double coarse = h / 6.0 * (f0 + 4.0 * f2 + f4);
  const double fine = h / 12.0 * (f0 + 4.0 * f1 + 2.0 * f2 + 4.0 * f3 + f4);
  return {coarse, fine};
}

// Boole's rule, the Richardson extrapolation of the two Simpson estimates.
template <class F>
double boole(const Leaf& leaf, F&& f) {
  const double h = (leaf.b - leaf.a) / 4.0;
  return 2.0 * h / 45.0 *
         (7.0 * f(leaf.nodes[0]) + 32.0 * f(leaf.nodes[1]) + 12.0 * f(leaf.nodes[2]) + 32.0 * f(leaf.nodes[3]) +
          7.0 * f(leaf.nodes[4]));
}

class AdaptiveSimpson {
 public:
  AdaptiveSimpson(const PosteriorIntegrand& integrand, double log_scale, int max_depth)
      : integrand_(integrand), log_scale_(log_scale), max_depth_(max_depth) {}

  Leaf make_leaf(double a, double b, const Node& left, const Node& mid, const Node& right) const {
    Leaf leaf;
    leaf.a = a;
    leaf.b = b;
    leaf.nodes = {left, integrand_.node(a + 0.25 * (b - a)), mid, integrand_.node(a + 0.75 * (b - a)), right};
    return leaf;
  }

  // Bisects until every component's Simpson pair agrees to 15 * tolerance.
  void refine(const Leaf& leaf, const Values& tolerance, int depth, std::vector<Leaf>& out) {
    std::array<Values, 5> v;
    for (std::size_t j = 0; j < 5; ++j) v[j] = weighted(leaf.nodes[j], log_scale_);
    const double h = leaf.b - leaf.a;
    bool accept = true;
    for (std::size_t k = 0; k < kComponents; ++k) {
      const double coarse = h / 6.0 * (v[0][k] + 4.0 * v[2][k] + v[4][k]);
      const double fine = h / 12.0 * (v[0][k] + 4.0 * v[1][k] + 2.0 * v[2][k] + 4.0 * v[3][k] + v[4][k]);
      if (std::abs(fine - coarse) > 15.0 * tolerance[k]) accept = false;
    }
    if (accept || depth >= max_depth_) {
      if (!accept) stalled_ = true;
      out.push_back(leaf);
      return;
    }
    Values half;
    for (std::size_t k = 0; k < kComponents; ++k) half[k] = 0.5 * tolerance[k];
    const double mid = 0.5 * (leaf.a + leaf.b);
    refine(make_leaf(leaf.a, mid, leaf.nodes[0], leaf.nodes[1], leaf.nodes[2]), half, depth + 1, out);
    refine(make_leaf(mid, leaf.b, leaf.nodes[2], leaf.nodes[3], leaf.nodes[4]), half, depth + 1, out);
  }

  bool stalled() const { return stalled_; }

 private:
  const PosteriorIntegrand& integrand_;
  double log_scale_;
  int max_depth_;
  bool stalled_ = false;
};

// Walks away from the mode until log f drops below the threshold, then
// bisects the crossing. Returns nullopt when the tail never decays.
std::optional<double> find_truncation(const PosteriorIntegrand& integrand, double t_mode, double threshold,
                                      double direction, double max_span) {
  double inside = t_mode;
  double step = 1.0;
  for (;;) {
    const double t = t_mode + direction * step;
    if (integrand.log_f(t) < threshold) {
      double outside = t;
      for (int k = 0; k < 20; ++k) {
        const double mid = 0.5 * (inside + outside);
        (integrand.log_f(mid) < threshold ? outside : inside) = mid;
      }
      return outside;
    }
    inside = t;
    if (step >= max_span) return std::nullopt;
    step = std::min(2.0 * step, max_span);
  }
}

}  // namespace

PosteriorSummary posterior_summary(const AreaLevelDataset& data, const PriorSpec& prior, std::size_t area,
                                   const QuadratureOptions& options) {
  if (area >= data.num_areas()) throw DomainError("posterior_summary: area index out of range");
  if (options.initial_panels < 1) throw DomainError("posterior_summary: need at least one panel");
  const PosteriorIntegrand integrand(data, prior, area);
  PosteriorSummary out;
  out.area_id = data.area_ids()[area];
  QuadratureDiagnostics& diag = out.diagnostics;

  auto improper = [&](const char* which) {
    diag.divergence_flag = true;
    std::ostringstream os;
    os << "posterior under the " << prior_name(prior) << " prior is improper or numerically divergent ("
       << which << " tail does not decay)";
    throw ImproperPosteriorError(os.str());
  };

  // Mode of the log-scale integrand, reusing the likelihood maximizer.
  const Maximum mode = maximize_on_half_line(integrand.mode_objective(), search_upper_bound(data, 100.0),
                                             BoundaryPolicy::strictly_positive);
  if (mode.diagnostics.hit_upper_bound) improper("right");
  const double t_mode = std::log(mode.argmax);
  const double log_max = integrand.log_f(t_mode);
  diag.mode = mode.argmax;

  double t_lo = 0.0;
  double t_hi = 0.0;
  if (options.window) {
    const auto [a_lo, a_hi] = *options.window;
    if (!(a_lo > 0.0) || !(a_hi > a_lo)) throw DomainError("posterior_summary: invalid window");
    t_lo = std::log(a_lo);
    t_hi = std::log(a_hi);
  } else {
    const double threshold = log_max - options.truncation_nats;
    const auto hi = find_truncation(integrand, t_mode, threshold, +1.0, options.max_tail_span);
    if (!hi) improper("right");
    const auto lo = find_truncation(integrand, t_mode, threshold, -1.0, options.max_tail_span);
    if (!lo) improper("left");
    t_lo = *lo;
    t_hi = *hi;
  }
  diag.truncation_lo = std::exp(t_lo);
  diag.truncation_hi = std::exp(t_hi);

  // Initial uniform pass fixes the per-component error scales.
  const int panels = options.initial_panels;
  const double width = (t_hi - t_lo) / panels;
  AdaptiveSimpson engine(integrand, log_max, options.max_depth);
  std::vector<Node> grid(static_cast<std::size_t>(2 * panels + 1));
  for (std::size_t k = 0; k < grid.size(); ++k) grid[k] = integrand.node(t_lo + 0.5 * width * static_cast<double>(k));
  std::vector<Leaf> initial;
  initial.reserve(static_cast<std::size_t>(panels));
  for (int k = 0; k < panels; ++k) {
    const double a = t_lo + width * k;
    const auto base = static_cast<std::size_t>(2 * k);
    initial.push_back(engine.make_leaf(a, a + width, grid[base], grid[base + 1], grid[base + 2]));
  }

  Values scale{};
  for (const Leaf& leaf : initial) {
    for (const Node& n : leaf.nodes) {
      const Values v = weighted(n, log_max);
      const double w = v[kW];
      const double spread = std::sqrt(std::max(n.g12, 0.0));
      const double h = (leaf.b - leaf.a) / 5.0;
      scale[kW] += h * w;
      scale[kWB] += h * w * n.b;
      scale[kWB2] += h * w * n.b * n.b;
      scale[kWTheta] += h * w * (std::abs(n.theta) + spread);
      scale[kWTheta2] += h * w * (n.theta * n.theta + n.g12);
      scale[kWG12] += h * w * n.g12;
    }
  }
  if (!(scale[kW] > 0.0)) throw QuadratureError("posterior weight vanishes on the integration window", 1.0);

  const double total_width = t_hi - t_lo;
  std::vector<Leaf> leaves;
  for (const Leaf& leaf : initial) {
    Values tol;
    for (std::size_t k = 0; k < kComponents; ++k) {
      tol[k] = options.relative_tolerance * scale[k] * (leaf.b - leaf.a) / total_width;
    }
    engine.refine(leaf, tol, 0, leaves);
  }

  // Final pass: Boole's rule per leaf; variances from centred integrands.
  auto integrate = [&](auto&& f, double& error) {
    std::vector<double> parts(leaves.size());
    std::vector<double> errs(leaves.size());
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      parts[k] = boole(leaves[k], f);
      const auto [coarse, fine] = simpson_pair(leaves[k], f);
      errs[k] = std::abs(fine - coarse) / 15.0;
    }
    error = pairwise_sum(errs);
    return pairwise_sum(parts);
  };
  auto w_of = [&](const Node& n) { return weighted(n, log_max)[kW]; };

  double err_z = 0.0, err_b = 0.0, err_theta = 0.0, err_vb = 0.0, err_vt = 0.0, err_g = 0.0;
  const double z = integrate(w_of, err_z);
  out.e_b = integrate([&](const Node& n) { return w_of(n) * n.b; }, err_b) / z;
  out.e_theta = integrate([&](const Node& n) { return w_of(n) * n.theta; }, err_theta) / z;
  out.v_b = integrate([&](const Node& n) { return w_of(n) * (n.b - out.e_b) * (n.b - out.e_b); }, err_vb) / z;
  const double between =
      integrate([&](const Node& n) { return w_of(n) * (n.theta - out.e_theta) * (n.theta - out.e_theta); }, err_vt) / z;
  out.e_g1_g2 = integrate([&](const Node& n) { return w_of(n) * n.g12; }, err_g) / z;
  out.v_theta = out.e_g1_g2 + between;

  const double rel_z = err_z / z;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  out.err_e_b = err_b / z + std::abs(out.e_b) * rel_z + eps * std::abs(out.e_b);
  out.err_e_theta = err_theta / z + std::abs(out.e_theta) * rel_z + eps * std::abs(out.e_theta);
  out.err_v_b = err_vb / z + out.v_b * rel_z + 2.0 * out.err_e_b * out.err_e_b + eps * out.v_b;
  out.err_v_theta = (err_vt + err_g) / z + out.v_theta * rel_z + eps * out.v_theta;

  diag.node_count = 4 * leaves.size() + 1;
  diag.log_normalization = std::log(z) + log_max;
  diag.achieved_tolerance = rel_z;
  if (engine.stalled() && rel_z > options.relative_tolerance) {
    throw QuadratureError("adaptive quadrature did not reach the requested tolerance", rel_z);
  }
  return out;
}

std::vector<PosteriorSummary> posterior_summaries(const AreaLevelDataset& data, const PriorSpec& prior,
                                                  const QuadratureOptions& options, unsigned threads) {
  std::vector<PosteriorSummary> out(data.num_areas());
  parallel_for(out.size(), threads, [&](std::size_t i) {
    out[i] = posterior_summary(data, prior_for_area(prior, i), i, options);
  });
  return out;
}

DattaExpansion datta_expansion_check(const AreaLevelDataset& data, const PriorSpec& prior, std::size_t area) {
  if (area >= data.num_areas()) throw DomainError("datta_expansion_check: area index out of range");
  DattaExpansion out;
  out.a_reml = maximize_adjusted_likelihood(data, FitMethod::reml(), area).argmax;
  if (!(out.a_reml > 0.0)) {
    out.at_boundary = true;
    out.expansion_e_b = out.expansion_theta = out.g1pi = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const double a = out.a_reml;
  const double m = static_cast<double>(data.num_areas());
  const auto i = static_cast<Eigen::Index>(area);
  const double d = data.d()[i];
  const double v = a + d;
  const double b = d / v;
  const double b1 = -d / (v * v);
  const double b2 = 2.0 * d / (v * v * v);
  const auto lre = residual_likelihood_derivatives(data, a);
  const double h2 = -lre.d2 / m;
  const double h3 = -lre.d3 / m;
  out.rho1 = log_prior_derivative(prior_for_area(prior, area), data, a);

  out.expansion_e_b = b + (b2 - (h3 / h2) * b1) / (2.0 * m * h2) + b1 * out.rho1 / (m * h2);
  out.g1pi = b * b / (m * h2) * (out.rho1 - 1.0 / v - h3 / (2.0 * h2));
  const double residual = data.y()[i] - data.x().row(i).dot(gls_beta(data, a).beta);
  out.expansion_theta = data.y()[i] - b * residual + out.g1pi / d * residual;
  return out;
}

double flat_prior_bias_term(const AreaLevelDataset& data, double A, std::size_t area) {
  if (!(A > 0.0)) throw DomainError("flat_prior_bias_term: A must be positive");
  const double d = data.d()[static_cast<Eigen::Index>(area)];
  const double v = A + d;
  const double t2 = trace_v_inv_pow(data, A, 2);
  const double t3 = trace_v_inv_pow(data, A, 3);
  return 4.0 * d / (t2 * v * v) * (1.0 / v - t3 / t2);
}

}  // namespace fhmg

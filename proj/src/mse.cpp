#include "fhmg/mse.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "fhmg/errors.hpp"
#include "fhmg/parallel.hpp"
#include "fhmg/random.hpp"

namespace fhmg {

MseComponents g_components(const AreaLevelDataset& data, double A, std::size_t area) {
  if (!(A > 0.0)) throw DomainError("g_components: A must be positive");
  if (area >= data.num_areas()) throw DomainError("g_components: area index out of range");
  const auto i = static_cast<Eigen::Index>(area);
  const double d = data.d()[i];
  const double v = A + d;
  const double b = d / v;
  const GlsEstimate gls = gls_beta(data, A);
  const auto xi = data.x().row(i);

  MseComponents g;
  g.g1 = A * d / v;
  g.g2 = b * b * xi.dot(gls.cov * xi.transpose());
  g.g3 = 2.0 * d * d / (v * v * v * trace_v_inv_pow(data, A, 2));
  g.taylor_total = g.g1 + g.g2 + g.g3;
  return g;
}

double var_b_hat(const AreaLevelDataset& data, double A, std::size_t area) {
  if (!(A > 0.0)) throw DomainError("var_b_hat: A must be positive");
  if (area >= data.num_areas()) throw DomainError("var_b_hat: area index out of range");
  const double d = data.d()[static_cast<Eigen::Index>(area)];
  const double v = A + d;
  const double b1 = -d / (v * v);
  return b1 * b1 * 2.0 / trace_v_inv_pow(data, A, 2);
}

double taylor_mse(const AreaLevelDataset& data, const FitResult& fit, std::size_t area) {
  if (area >= fit.areas.size()) throw DomainError("taylor_mse: area index out of range");
  return g_components(data, fit.areas[area].A_hat, area).taylor_total;
}

BootstrapResult bootstrap_mse(const AreaLevelDataset& data, const FitResult& fit, const BootstrapConfig& cfg) {
  const std::size_t m = data.num_areas();
  const std::size_t reps = cfg.replicates;
  if (reps == 0) throw DomainError("bootstrap needs at least one replicate");
  if (cfg.antithetic && reps % 2 != 0) throw DomainError("antithetic bootstrap needs an even replicate count");
  if (fit.areas.size() != m) throw DomainError("fit does not match the dataset");
  const std::vector<double> a_hat = fit.a_values();
  for (double a : a_hat) {
    if (!(a > 0.0)) throw DomainError("bootstrap needs every A-hat_i > 0");
  }

  // Generating means, one column per target area for the area-specific plug-in.
  const bool per_target = cfg.beta_plugin == BetaPlugin::area_specific;
  Matrix means(static_cast<Eigen::Index>(m), per_target ? static_cast<Eigen::Index>(m) : 1);
  if (per_target) {
    for (std::size_t i = 0; i < m; ++i) {
      means.col(static_cast<Eigen::Index>(i)) = data.x() * fit.areas[i].beta_hat;
    }
  } else {
    means.col(0) = data.x() * gls_beta_heterogeneous(data, a_hat).beta;
  }

  const Vector sd_u = Eigen::Map<const Vector>(a_hat.data(), static_cast<Eigen::Index>(m)).cwiseSqrt();
  const Vector sd_e = data.d().cwiseSqrt();
  const bool shared_refit = fit.shared_estimate;

  // squared_error(i, r); NaN marks an excluded refit.
  Matrix squared_error(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(reps));

  parallel_for(reps, cfg.threads, [&](std::size_t r) {
    const std::size_t stream = cfg.antithetic ? r - r % 2 : r;
    const double sign = cfg.antithetic && r % 2 == 1 ? -1.0 : 1.0;
    NormalStream rng(cfg.seed, stream);
    Vector u(static_cast<Eigen::Index>(m));
    Vector e(static_cast<Eigen::Index>(m));
    for (Eigen::Index j = 0; j < u.size(); ++j) u[j] = sign * rng.normal();
    for (Eigen::Index j = 0; j < e.size(); ++j) e[j] = sign * rng.normal();
    const Vector random_effect = sd_u.cwiseProduct(u);
    const Vector noise = sd_e.cwiseProduct(e);

    auto col = static_cast<Eigen::Index>(r);
    std::optional<AreaLevelDataset> shared_data;
    std::optional<FitResult> shared_fit;
    for (std::size_t i = 0; i < m; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const Vector theta = means.col(per_target ? ii : 0) + random_effect;
      try {
        double prediction = 0.0;
        if (cfg.oracle) {
          const double b = data.d()[ii] / (a_hat[i] + data.d()[ii]);
          prediction = (1.0 - b) * (theta[ii] + noise[ii]) + b * means(ii, per_target ? ii : 0);
        } else if (shared_refit) {
          if (!shared_data || per_target) {
            shared_data.emplace(data.with_response(theta + noise));
            shared_fit.emplace(fhmg::fit(*shared_data, fit.method));
          }
          prediction = shared_fit->areas[i].theta_hat;
        } else {
          if (!shared_data || per_target) shared_data.emplace(data.with_response(theta + noise));
          const Maximum refit = maximize_adjusted_likelihood(*shared_data, fit.method, i);
          prediction = blup(*shared_data, refit.argmax, i);
        }
        const double err = prediction - theta[ii];
        squared_error(ii, col) = err * err;
      } catch (const std::exception&) {
        squared_error(ii, col) = std::numeric_limits<double>::quiet_NaN();
      }
    }
  });

  BootstrapResult out;
  out.replicates = reps;
  out.areas.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    // Units of replication: single replicates, or antithetic pair means.
    std::vector<double> units;
    units.reserve(reps);
    const std::size_t width = cfg.antithetic ? 2 : 1;
    for (std::size_t r = 0; r < reps; r += width) {
      double s = 0.0;
      bool ok = true;
      for (std::size_t k = 0; k < width; ++k) {
        const double v = squared_error(ii, static_cast<Eigen::Index>(r + k));
        if (std::isnan(v)) {
          ok = false;
          ++out.excluded_refits;
        }
        s += v;
      }
      if (ok) units.push_back(s / static_cast<double>(width));
    }
    BootstrapAreaEstimate& est = out.areas[i];
    est.area_id = data.area_ids()[i];
    if (units.empty()) {
      throw std::runtime_error("bootstrap: every refit failed for area " + est.area_id);
    }
    const double n = static_cast<double>(units.size());
    est.estimate = pairwise_sum(units) / n;
    if (units.size() > 1) {
      std::vector<double> dev(units.size());
      for (std::size_t k = 0; k < units.size(); ++k) dev[k] = (units[k] - est.estimate) * (units[k] - est.estimate);
      est.mc_stderr = std::sqrt(pairwise_sum(dev) / (n - 1.0) / n);
    }
  }
  const double failure_rate = static_cast<double>(out.excluded_refits) / static_cast<double>(m * reps);
  if (failure_rate > 0.01) {
    std::ostringstream os;
    os << "bootstrap: " << out.excluded_refits << " of " << m * reps << " refits failed (> 1%)";
    throw std::runtime_error(os.str());
  }
  return out;
}

}  // namespace fhmg

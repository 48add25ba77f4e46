#include "fhmg/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "fhmg/errors.hpp"
#include "fhmg/mse.hpp"
#include "fhmg/nerm.hpp"
#include "fhmg/parallel.hpp"
#include "fhmg/verify.hpp"

namespace fhmg::cli {

using nlohmann::ordered_json;

namespace {

const std::vector<std::string> kCommands{"fit", "bayes", "bootstrap", "figures", "simulate", "synth", "nerm-grad",
                                         "propriety"};

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

void require(bool ok, const std::string& message) {
  if (!ok) throw InputError(message, 0);
}

bool uses_input(const std::string& c) {
  return c == "fit" || c == "bayes" || c == "bootstrap" || c == "figures";
}

bool uses_method(const std::string& c) { return c == "fit" || c == "bootstrap"; }

}  // namespace

void RunConfig::validate() const {
  require(contains(kCommands, command), "unknown command '" + command + "'");
  if (uses_input(command)) require(!input.empty(), command + ": --input is required");
  if (uses_method(command)) {
    require(method == "ml" || method == "reml" || method == "adj-power" || method == "mg",
            "method must be ml, reml, adj-power or mg");
    if (method == "adj-power") require(power_s > 0.0, "adj-power needs s > 0");
  }
  if (command == "bayes") {
    require(!priors.empty(), "bayes: at least one prior is required");
    for (const auto& p : priors) {
      require(p == "flat" || p == "mg" || p == "general-mg" || p == "ganesh-lahiri",
              "prior must be flat, mg, general-mg or ganesh-lahiri");
    }
    if (contains(priors, "general-mg")) require(prior_s > 0.0, "general-mg needs --prior-s > 0");
  }
  if (command == "bootstrap" || command == "figures") {
    require(seed.has_value(), command + ": --seed is required");
    require(bootstrap_replicates >= 1, "bootstrap replicates must be >= 1");
    require(!antithetic || bootstrap_replicates % 2 == 0, "antithetic bootstrap needs an even replicate count");
    require(beta_plugin == "heterogeneous" || beta_plugin == "area-specific",
            "beta plug-in must be heterogeneous or area-specific");
  }
  if (command == "simulate") require(!simulation_config.empty(), "simulate: --config is required");
  if (command == "synth") {
    require(seed.has_value(), "synth: --seed is required");
    require(synth_m >= 7, "synth: m must be >= 7");
  }
  if (command == "nerm-grad") {
    require(!nerm_n.empty(), "nerm-grad: --n is required");
    require(nerm_area < nerm_n.size(), "nerm-grad: --area out of range");
    require(nerm_k.empty() || nerm_k.size() == 2, "nerm-grad: --k needs two values");
  }
  if (quadrature_tolerance) {
    require(*quadrature_tolerance > 0.0 && *quadrature_tolerance < 1.0, "quadrature tolerance must lie in (0, 1)");
  }
  require(threads >= 1, "threads must be >= 1");
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["command"] = command;
  if (uses_input(command)) j["input"] = input;
  if (uses_method(command) || command == "figures") {
    j["method"] = command == "figures" ? std::string("mg") : method;
    if (method == "adj-power" && command != "figures") j["s"] = power_s;
  }
  if (command == "bayes") {
    j["priors"] = priors;
    if (contains(priors, "general-mg")) j["prior_s"] = prior_s;
    if (contains(priors, "ganesh-lahiri")) j["ganesh_lahiri_weights"] = gl_weights;
  }
  if (command == "bayes" || command == "figures") {
    j["quadrature_tolerance"] = quadrature_tolerance.value_or(QuadratureOptions{}.relative_tolerance);
  }
  if (command == "bootstrap" || command == "figures") {
    j["bootstrap_replicates"] = bootstrap_replicates;
    j["antithetic"] = antithetic;
    j["beta_plugin"] = beta_plugin;
  }
  if (command == "simulate") j["simulation_config"] = simulation_config;
  if (command == "synth") j["m"] = synth_m;
  if (command == "nerm-grad") {
    j["n"] = nerm_n;
    j["sigma_v2"] = sigma_v2;
    j["sigma_e2"] = sigma_e2;
    j["area"] = nerm_area;
    j["k"] = nerm_k.empty() ? std::vector<double>{} : nerm_k;
  }
  if (command == "propriety") {
    j["s"] = prop_s;
    j["m"] = prop_m;
    j["p"] = prop_p;
  }
  j["seed"] = seed ? ordered_json(*seed) : ordered_json();
  j["format"] = format == io::Format::json ? "json" : "csv";
  return j;
}

FitMethod make_method(const RunConfig& cfg) {
  if (cfg.method == "ml") return FitMethod::ml();
  if (cfg.method == "reml") return FitMethod::reml();
  if (cfg.method == "adj-power") return FitMethod::power(cfg.power_s);
  return FitMethod::multi_goal();
}

PriorSpec make_prior(const RunConfig& cfg, const std::string& name, const AreaLevelDataset& data) {
  if (name == "flat") return FlatPrior{};
  if (name == "mg") return MultiGoalPrior{0};
  if (name == "general-mg") return GeneralMultiGoalPrior{PowerAdjustment{cfg.prior_s, 0}, 0};
  if (name != "ganesh-lahiri") throw InputError("unknown prior '" + name + "'", 0);
  if (cfg.gl_weights == "uniform") return GaneshLahiriPrior::uniform(data.num_areas());
  std::ifstream in(cfg.gl_weights);
  if (!in) throw InputError("cannot open " + cfg.gl_weights, 0);
  std::vector<double> w;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      w.push_back(std::stod(line, &used));
      if (line.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument("trailing text");
    } catch (const std::logic_error&) {
      throw InputError("line " + std::to_string(line_no) + ": invalid weight", line_no);
    }
  }
  if (w.size() != data.num_areas()) throw InputError("ganesh-lahiri weights: need one weight per area", 0);
  return GaneshLahiriPrior{std::move(w)};
}

QuadratureOptions make_quadrature(const RunConfig& cfg) {
  QuadratureOptions q;
  if (cfg.quadrature_tolerance) q.relative_tolerance = *cfg.quadrature_tolerance;
  return q;
}

namespace {

io::Report new_report(const RunConfig& cfg, const AreaLevelDataset* data) {
  io::Report r;
  r.command = cfg.command;
  r.config = cfg.to_json();
  if (data) {
    r.extra["m"] = data->num_areas();
    r.extra["p"] = data->num_covariates();
  }
  return r;
}

ordered_json vector_json(const Vector& v) {
  ordered_json j = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

const double kNaN = std::numeric_limits<double>::quiet_NaN();

BootstrapConfig bootstrap_config(const RunConfig& cfg) {
  BootstrapConfig bc;
  bc.replicates = cfg.bootstrap_replicates;
  bc.seed = *cfg.seed;
  bc.antithetic = cfg.antithetic;
  bc.threads = cfg.threads;
  bc.beta_plugin = cfg.beta_plugin == "area-specific" ? BetaPlugin::area_specific : BetaPlugin::heterogeneous;
  return bc;
}

struct AreaPosterior {
  std::optional<PosteriorSummary> summary;
  std::string error;
};

std::vector<AreaPosterior> area_posteriors(const AreaLevelDataset& data, const PriorSpec& prior,
                                           const QuadratureOptions& options, unsigned threads) {
  std::vector<AreaPosterior> out(data.num_areas());
  parallel_for(out.size(), threads, [&](std::size_t i) {
    try {
      out[i].summary = posterior_summary(data, prior_for_area(prior, i), i, options);
    } catch (const std::exception& e) {
      out[i].error = error_record(e);
    }
  });
  return out;
}

}  // namespace

CommandOutput cmd_fit(const RunConfig& cfg) {
  const auto data = io::ingest_csv(cfg.input);
  CommandOutput out{new_report(cfg, &data), 0};
  const FitResult result = fit(data, make_method(cfg), cfg.threads);
  io::Table t{"fit",
              {"area_id", "A_hat", "B_hat", "theta_hat", "g1", "g2", "g3", "mse_taylor", "hit_upper_bound"},
              {}};
  ordered_json warnings = ordered_json::array();
  for (std::size_t i = 0; i < data.num_areas(); ++i) {
    const auto& a = result.areas[i];
    MseComponents g{kNaN, kNaN, kNaN, kNaN};
    if (a.A_hat > 0.0) g = g_components(data, a.A_hat, i);
    if (a.diagnostics.hit_upper_bound) warnings.push_back("A-hat at the search bound for area " + a.area_id);
    t.rows.push_back({a.area_id, a.A_hat, a.B_hat, a.theta_hat, g.g1, g.g2, g.g3, g.taylor_total,
                      std::int64_t{a.diagnostics.hit_upper_bound ? 1 : 0}});
  }
  if (result.shared_estimate && result.areas.front().A_hat == 0.0) {
    warnings.push_back("A-hat = 0: MSE components are undefined");
  }
  out.report.extra["method"] = result.method.name();
  out.report.extra["beta_hat"] = vector_json(result.beta_hat);
  out.report.extra["warnings"] = warnings;
  out.report.tables.push_back(std::move(t));
  return out;
}

CommandOutput cmd_bayes(const RunConfig& cfg) {
  const auto data = io::ingest_csv(cfg.input);
  CommandOutput out{new_report(cfg, &data), 0};
  const auto options = make_quadrature(cfg);
  io::Table t{"posterior",
              {"area_id", "prior", "e_b", "v_b", "e_theta", "v_theta", "err_e_b", "err_v_b", "err_e_theta",
               "err_v_theta", "node_count", "mode", "status"},
              {}};
  for (const auto& name : cfg.priors) {
    const PriorSpec prior = make_prior(cfg, name, data);
    const auto posts = area_posteriors(data, prior, options, cfg.threads);
    for (std::size_t i = 0; i < posts.size(); ++i) {
      const auto& id = data.area_ids()[i];
      if (!posts[i].summary) {
        ++out.failures;
        t.rows.push_back({id, name, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, std::int64_t{0}, kNaN,
                          posts[i].error});
        continue;
      }
      const auto& s = *posts[i].summary;
      t.rows.push_back({id, name, s.e_b, s.v_b, s.e_theta, s.v_theta, s.err_e_b, s.err_v_b, s.err_e_theta,
                        s.err_v_theta, static_cast<std::int64_t>(s.diagnostics.node_count), s.diagnostics.mode,
                        std::string("ok")});
    }
  }
  out.report.tables.push_back(std::move(t));
  return out;
}

CommandOutput cmd_bootstrap(const RunConfig& cfg) {
  const auto data = io::ingest_csv(cfg.input);
  CommandOutput out{new_report(cfg, &data), 0};
  const FitResult result = fit(data, make_method(cfg), cfg.threads);
  const auto boot = bootstrap_mse(data, result, bootstrap_config(cfg));
  io::Table t{"bootstrap", {"area_id", "A_hat", "mse_taylor", "mse_boot", "mc_stderr"}, {}};
  for (std::size_t i = 0; i < data.num_areas(); ++i) {
    const auto& b = boot.areas[i];
    t.rows.push_back({b.area_id, result.areas[i].A_hat, taylor_mse(data, result, i), b.estimate,
                      b.mc_stderr.value_or(kNaN)});
  }
  out.report.extra["method"] = result.method.name();
  out.report.extra["replicates"] = boot.replicates;
  out.report.extra["excluded_refits"] = boot.excluded_refits;
  out.report.tables.push_back(std::move(t));
  return out;
}

CommandOutput cmd_figures(const RunConfig& cfg) {
  const auto data = io::ingest_csv(cfg.input);
  CommandOutput out{new_report(cfg, &data), 0};
  const std::size_t m = data.num_areas();
  const FitResult mg = fit(data, FitMethod::multi_goal(), cfg.threads);
  const auto boot = bootstrap_mse(data, mg, bootstrap_config(cfg));
  const auto options = make_quadrature(cfg);
  const auto post_mg = area_posteriors(data, MultiGoalPrior{0}, options, cfg.threads);
  const auto post_flat = area_posteriors(data, FlatPrior{}, options, cfg.threads);

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mg.areas[a].B_hat > mg.areas[b].B_hat; });

  auto field = [&](const AreaPosterior& p, double PosteriorSummary::*member) {
    return p.summary ? (*p.summary).*member : kNaN;
  };
  io::Table t1{"table-1", {"area_id", "MGF", "MGP", "SHP"}, {}};
  io::Table t2{"table-2", {"area_id", "PB.MG", "MGF", "MGP", "SHP"}, {}};
  for (std::size_t i : order) {
    const auto& id = data.area_ids()[i];
    t1.rows.push_back({id, mg.areas[i].B_hat, field(post_mg[i], &PosteriorSummary::e_b),
                       field(post_flat[i], &PosteriorSummary::e_b)});
    t2.rows.push_back({id, boot.areas[i].estimate, taylor_mse(data, mg, i),
                       field(post_mg[i], &PosteriorSummary::v_theta), field(post_flat[i], &PosteriorSummary::v_theta)});
  }
  ordered_json errors = ordered_json::array();
  for (std::size_t i = 0; i < m; ++i) {
    for (const auto* p : {&post_mg[i], &post_flat[i]}) {
      if (!p->summary) {
        ++out.failures;
        errors.push_back({{"area_id", data.area_ids()[i]}, {"prior", p == &post_mg[i] ? "mg" : "flat"},
                          {"error", ordered_json::parse(p->error)}});
      }
    }
  }
  out.report.extra["columns"] = {
      {"MGF", "table-1: B_i at the multi-goal estimate; table-2: Taylor MSE at the multi-goal estimate"},
      {"MGP", "table-1: E[B_i|y], multi-goal prior; table-2: V[theta_i|y], multi-goal prior"},
      {"SHP", "table-1: E[B_i|y], flat prior on A; table-2: V[theta_i|y], flat prior on A"},
      {"PB.MG", "parametric bootstrap MSE of the multi-goal EBLUP"}};
  out.report.extra["bootstrap_excluded_refits"] = boot.excluded_refits;
  out.report.extra["errors"] = errors;
  out.report.tables.push_back(std::move(t1));
  out.report.tables.push_back(std::move(t2));
  return out;
}

CommandOutput cmd_simulate(const RunConfig& cfg) {
  auto file = io::read_simulation_config(cfg.simulation_config);
  file.config.threads = cfg.threads;
  CommandOutput out{new_report(cfg, nullptr), 0};
  out.report.config["seed"] = file.config.seed;

  const auto& c = file.config;
  ordered_json sim;
  sim["studies"] = file.studies;
  sim["m"] = c.m;
  sim["p"] = c.p;
  sim["true_beta"] = c.true_beta;
  sim["true_A"] = c.true_A;
  sim["d_values"] = vector_json(verify::sampling_variances(c));
  sim["replications"] = c.replications;
  sim["m_ladder"] = c.m_ladder;
  sim["adjustment_power"] = c.adjustment_power;
  sim["bootstrap_replicates"] = c.bootstrap_replicates;
  out.report.config["simulation"] = sim;

  io::Table rows{"summary", {"study", "m", "area_class", "quantity", "n", "mean", "median", "std_error"}, {}};
  io::Table checks{"checks", {"study", "check", "verdict", "detail"}, {}};
  io::Table excluded{"excluded", {"study", "m", "excluded_rate"}, {}};
  io::Table records{"records", {"study", "m", "replicate", "area_class", "quantity", "value"}, {}};
  for (const auto& study : file.studies) {
    verify::StudyReport r;
    if (study == "bias") {
      r = verify::bias_study(c);
    } else if (study == "theorem1") {
      r = verify::theorem_study(c, verify::Theorem::theorem1);
    } else if (study == "theorem2") {
      r = verify::theorem_study(c, verify::Theorem::theorem2);
    } else if (study == "corollary1") {
      r = verify::theorem_study(c, verify::Theorem::corollary1);
    } else if (study == "properties") {
      r = verify::theorem_study(c, verify::Theorem::properties);
    } else {
      throw InputError("unknown study '" + study + "'", 0);
    }
    for (const auto& row : r.rows) {
      rows.rows.push_back({study, std::int64_t{row.m}, row.area_class, row.quantity,
                           static_cast<std::int64_t>(row.n), row.mean, row.median, row.std_error});
    }
    for (const auto& ck : r.checks) checks.rows.push_back({study, ck.name, ck.verdict, ck.detail});
    for (const auto& [m, rate] : r.excluded_rate) excluded.rows.push_back({study, std::int64_t{m}, rate});
    for (const auto& rec : r.records) {
      records.rows.push_back({study, std::int64_t{rec.m}, static_cast<std::int64_t>(rec.replicate), rec.area_class,
                              rec.quantity, rec.value});
    }
  }
  out.report.tables.push_back(std::move(rows));
  out.report.tables.push_back(std::move(checks));
  out.report.tables.push_back(std::move(excluded));
  if (c.keep_records) out.report.tables.push_back(std::move(records));
  return out;
}

void cmd_synth(const RunConfig& cfg, std::ostream& out) {
  io::SyntheticConfig sc;
  sc.m = cfg.synth_m;
  sc.seed = *cfg.seed;
  io::write_dataset_csv(out, io::synthetic_saipe(sc));
}

CommandOutput cmd_nerm_grad(const RunConfig& cfg) {
  CommandOutput out{new_report(cfg, nullptr), 0};
  const nerm::NermDesign design(cfg.nerm_n);
  const nerm::Psi psi{cfg.sigma_v2, cfg.sigma_e2};
  const int n_i = cfg.nerm_n[cfg.nerm_area];
  const auto inv = nerm::fisher_inverse(design, psi);
  const auto grad = nerm::shrinkage_gradient(psi, n_i);
  const auto hess = nerm::shrinkage_hessian(psi, n_i);
  const double h = nerm::curvature_h(design, psi, cfg.nerm_area);
  const nerm::Vec2 k = cfg.nerm_k.empty() ? nerm::Vec2{1.0, 1.0} : nerm::Vec2{cfg.nerm_k[0], cfg.nerm_k[1]};
  const auto adj = nerm::adjustment_gradient(design, psi, cfg.nerm_area, k);
  io::Table t{"nerm", {"quantity", "row", "col", "value"}, {}};
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) t.rows.push_back({std::string("fisher_inverse"), std::int64_t{r}, std::int64_t{c}, inv[r][c]});
  }
  t.rows.push_back({std::string("shrinkage"), std::int64_t{0}, std::int64_t{0}, nerm::shrinkage(psi, n_i)});
  for (int r = 0; r < 2; ++r) t.rows.push_back({std::string("shrinkage_gradient"), std::int64_t{r}, std::int64_t{0}, grad[r]});
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) t.rows.push_back({std::string("shrinkage_hessian"), std::int64_t{r}, std::int64_t{c}, hess[r][c]});
  }
  t.rows.push_back({std::string("curvature_h"), std::int64_t{0}, std::int64_t{0}, h});
  for (int r = 0; r < 2; ++r) t.rows.push_back({std::string("adjustment_gradient"), std::int64_t{r}, std::int64_t{0}, adj[r]});
  out.report.config["k"] = std::vector<double>{k[0], k[1]};
  out.report.tables.push_back(std::move(t));
  return out;
}

CommandOutput cmd_propriety(const RunConfig& cfg) {
  CommandOutput out{new_report(cfg, nullptr), 0};
  const auto check = check_propriety(cfg.prop_s, cfg.prop_m, cfg.prop_p);
  io::Table t{"propriety", {"s", "m", "p", "proper_as_raw_adjustment", "proper_as_general_mg_prior"}, {}};
  t.rows.push_back({cfg.prop_s, std::int64_t{cfg.prop_m}, std::int64_t{cfg.prop_p},
                    std::int64_t{check.proper_as_raw_adjustment ? 1 : 0},
                    std::int64_t{check.proper_as_general_mg_prior ? 1 : 0}});
  out.report.tables.push_back(std::move(t));
  return out;
}

std::string error_record(const std::exception& e) {
  ordered_json j;
  std::string type = "error";
  if (const auto* in = dynamic_cast<const InputError*>(&e)) {
    type = "input_error";
    if (in->line() > 0) j["line"] = in->line();
  } else if (const auto* s = dynamic_cast<const SingularDesignError*>(&e)) {
    type = "singular_design";
    j["condition_number"] = std::isfinite(s->condition_number()) ? ordered_json(s->condition_number()) : ordered_json();
  } else if (dynamic_cast<const ImproperPosteriorError*>(&e)) {
    type = "improper_posterior";
  } else if (const auto* q = dynamic_cast<const QuadratureError*>(&e)) {
    type = "quadrature_error";
    j["achieved_tolerance"] = q->achieved_tolerance();
  } else if (dynamic_cast<const NonFiniteError*>(&e)) {
    type = "non_finite";
  } else if (dynamic_cast<const DomainError*>(&e)) {
    type = "domain_error";
  }
  ordered_json rec;
  rec["error"] = type;
  rec["message"] = e.what();
  for (const auto& [k, v] : j.items()) rec[k] = v;
  return rec.dump();
}

int run(const RunConfig& cfg, std::ostream& err) {
  try {
    cfg.validate();
    if (cfg.command == "synth") {
      if (cfg.output.empty()) {
        cmd_synth(cfg, std::cout);
      } else {
        std::ofstream out(cfg.output, std::ios::binary);
        if (!out) throw InputError("cannot write " + cfg.output, 0);
        cmd_synth(cfg, out);
      }
      return 0;
    }
    CommandOutput result;
    if (cfg.command == "fit") result = cmd_fit(cfg);
    else if (cfg.command == "bayes") result = cmd_bayes(cfg);
    else if (cfg.command == "bootstrap") result = cmd_bootstrap(cfg);
    else if (cfg.command == "figures") result = cmd_figures(cfg);
    else if (cfg.command == "simulate") result = cmd_simulate(cfg);
    else if (cfg.command == "nerm-grad") result = cmd_nerm_grad(cfg);
    else result = cmd_propriety(cfg);
    io::write_report(result.report, cfg.format, cfg.output);
    if (result.failures > 0) {
      err << ordered_json{{"error", "area_failures"}, {"count", result.failures}}.dump() << '\n';
      return 1;
    }
    return 0;
  } catch (const InputError& e) {
    err << error_record(e) << '\n';
    return 2;
  } catch (const DomainError& e) {
    err << error_record(e) << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << error_record(e) << '\n';
    return 3;
  }
}

}  // namespace fhmg::cli

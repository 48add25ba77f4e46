#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "fhmg/commands.hpp"

int main(int argc, char** argv) {
  fhmg::cli::RunConfig cfg;
  CLI::App app{"Fay-Herriot estimation with adjusted likelihoods and multi-goal priors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fhmg 1.0.0");

  std::uint64_t seed = 0;
  const std::map<std::string, fhmg::io::Format> formats{{"json", fhmg::io::Format::json},
                                                         {"csv", fhmg::io::Format::csv}};
  auto common = [&](CLI::App* sub, bool seeded) {
    sub->add_option("-o,--output", cfg.output, "Output file (stdout when omitted)");
    sub->add_option("--format", cfg.format, "Report format")
        ->transform(CLI::CheckedTransformer(formats, CLI::ignore_case));
    sub->add_option("--threads", cfg.threads, "Worker threads; results do not depend on it")
        ->check(CLI::Range(1u, 1024u));
    if (seeded) sub->add_option("--seed", seed, "Random seed (required)");
  };
  auto input = [&](CLI::App* sub) {
    sub->add_option("-i,--input", cfg.input, "CSV with header area_id,y,D,x1,...,xp")->required();
  };
  auto method = [&](CLI::App* sub) {
    sub->add_option("--method", cfg.method, "ml, reml, adj-power or mg")
        ->check(CLI::IsMember({"ml", "reml", "adj-power", "mg"}));
    sub->add_option("--s", cfg.power_s, "Exponent s of the adj-power adjustment");
  };
  auto bootstrap = [&](CLI::App* sub) {
    sub->add_option("--replicates", cfg.bootstrap_replicates, "Bootstrap replicates");
    sub->add_flag("--antithetic", cfg.antithetic, "Pair replicates with negated draws");
    sub->add_option("--beta-plugin", cfg.beta_plugin, "heterogeneous or area-specific")
        ->check(CLI::IsMember({"heterogeneous", "area-specific"}));
  };
  auto quadrature = [&](CLI::App* sub) {
    sub->add_option("--quadrature-tolerance", cfg.quadrature_tolerance, "Relative quadrature tolerance");
  };

  auto* fit = app.add_subcommand("fit", "Estimate A, shrinkage, EBLUP and Taylor MSE per area");
  input(fit);
  method(fit);
  common(fit, false);

  auto* bayes = app.add_subcommand("bayes", "Posterior summaries of B_i and theta_i per area and prior");
  input(bayes);
  bayes->add_option("--prior", cfg.priors, "flat, mg, general-mg or ganesh-lahiri (repeatable)")
      ->check(CLI::IsMember({"flat", "mg", "general-mg", "ganesh-lahiri"}));
  bayes->add_option("--prior-s", cfg.prior_s, "Exponent s of the general-mg power adjustment");
  bayes->add_option("--gl-weights", cfg.gl_weights, "'uniform' or a file with one weight per area");
  quadrature(bayes);
  common(bayes, false);

  auto* boot = app.add_subcommand("bootstrap", "Parametric bootstrap MSE");
  input(boot);
  method(boot);
  bootstrap(boot);
  common(boot, true);

  auto* figures = app.add_subcommand("figures", "Shrinkage and MSE comparison tables");
  input(figures);
  bootstrap(figures);
  quadrature(figures);
  common(figures, true);

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo studies from a key-value config file");
  simulate->add_option("-c,--config", cfg.simulation_config, "Simulation config file")->required();
  common(simulate, false);

  auto* synth = app.add_subcommand("synth", "Write a synthetic area-level dataset");
  synth->add_option("--m", cfg.synth_m, "Number of areas");
  synth->add_option("-o,--output", cfg.output, "Output CSV (stdout when omitted)");
  synth->add_option("--seed", seed, "Random seed (required)");

  auto* nerm = app.add_subcommand("nerm-grad", "Nested error regression model quantities at one psi");
  nerm->add_option("--n", cfg.nerm_n, "Units per area, e.g. --n 3 3 5")->required();
  nerm->add_option("--sigma-v2", cfg.sigma_v2, "Area-effect variance")->required();
  nerm->add_option("--sigma-e2", cfg.sigma_e2, "Unit-error variance")->required();
  nerm->add_option("--area", cfg.nerm_area, "Area index (0-based)");
  nerm->add_option("--k", cfg.nerm_k, "Direction of the adjustment gradient (two values)")->expected(2);
  common(nerm, false);

  auto* prop = app.add_subcommand("propriety", "Propriety of a power adjustment and its general-mg prior");
  prop->add_option("--s", cfg.prop_s, "Exponent s")->required();
  prop->add_option("--m", cfg.prop_m, "Number of areas")->required();
  prop->add_option("--p", cfg.prop_p, "Number of covariates")->required();
  common(prop, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (auto* sub : app.get_subcommands()) {
    cfg.command = sub->get_name();
    if (auto* opt = sub->get_option_no_throw("--seed"); opt && opt->count() > 0) cfg.seed = seed;
  }
  return fhmg::cli::run(cfg, std::cerr);
}

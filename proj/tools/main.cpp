// Command-line front end: simulate | vem | fit | eval | diagnose.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "plnpca/errors.hpp"
#include "plnpca/pipeline.hpp"

namespace {

// "180x250,20x1" -> phases of (epochs, batch size).
std::vector<plnpca::BatchPhase> parse_schedule(const std::string& text) {
  std::vector<plnpca::BatchPhase> phases;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    const auto x = token.find('x');
    if (x == std::string::npos) {
      throw plnpca::SchemaError("schedule entry '" + token + "' is not EPOCHSxBATCH");
    }
    plnpca::BatchPhase phase;
    try {
      phase.epochs = std::stoull(token.substr(0, x));
      phase.batch_size = std::stoull(token.substr(x + 1));
    } catch (const std::exception&) {
      throw plnpca::SchemaError("schedule entry '" + token + "' is not EPOCHSxBATCH");
    }
    phases.push_back(phase);
  }
  if (phases.empty()) throw plnpca::SchemaError("empty schedule");
  return phases;
}

void add_dataset_options(CLI::App* cmd, std::string& y, std::string& x, std::string& o) {
  cmd->add_option("--y", y, "counts CSV (header row)")->required();
  cmd->add_option("--x", x, "covariates CSV")->required();
  cmd->add_option("--o", o, "offsets CSV (default: zero offsets)");
}

void add_vem_options(CLI::App* cmd, plnpca::VemConfig& vem) {
  cmd->add_option("--vem-iters", vem.max_iters, "VEM iteration cap");
  cmd->add_option("--vem-lr", vem.learning_rate, "VEM initial ascent rate");
  cmd->add_option("--vem-tol", vem.tol, "VEM relative ELBO tolerance");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rank-constrained Poisson log-normal model fitting by "
               "importance-sampling gradient descent"};
  app.require_subcommand(1);

  plnpca::SimulateConfig sim;
  std::string sim_out, sim_theta;
  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim_cmd->set_config("--config");
  sim_cmd->add_option("--out", sim_out, "output directory")->required();
  sim_cmd->add_option("--n", sim.n, "individuals");
  sim_cmd->add_option("--p", sim.p, "variables");
  sim_cmd->add_option("--q", sim.q, "latent rank");
  sim_cmd->add_option("--d", sim.d, "covariates (intercept included)");
  sim_cmd->add_option("--seed", sim.seed, "rng seed");
  sim_cmd->add_option("--theta", sim_theta, "true-parameter CSV (otherwise drawn)");

  plnpca::VemRunConfig vem_cfg;
  std::string vem_y, vem_x, vem_o, vem_out;
  auto* vem_cmd = app.add_subcommand("vem", "variational EM fit");
  vem_cmd->set_config("--config");
  add_dataset_options(vem_cmd, vem_y, vem_x, vem_o);
  vem_cmd->add_option("--out", vem_out, "output directory")->required();
  vem_cmd->add_option("--q", vem_cfg.q, "latent rank");
  add_vem_options(vem_cmd, vem_cfg.vem);

  plnpca::FitRunConfig fit_cfg;
  std::string fit_y, fit_x, fit_o, fit_out, fit_schedule = "20x1", fit_proposal = "hessian",
              fit_init_theta;
  auto* fit_cmd = app.add_subcommand("fit", "projected SGD maximum-likelihood fit");
  fit_cmd->set_config("--config");
  add_dataset_options(fit_cmd, fit_y, fit_x, fit_o);
  fit_cmd->add_option("--out", fit_out, "output directory")->required();
  fit_cmd->add_option("--q", fit_cfg.q, "latent rank");
  fit_cmd->add_option("--gamma0", fit_cfg.opt.gamma0, "initial learning rate");
  fit_cmd->add_option("--iterations", fit_cfg.opt.iterations,
                      "T in gamma = gamma0/sqrt(T); 0 derives it from the schedule");
  fit_cmd->add_option("-N,--particles", fit_cfg.opt.particles, "SNIS draws per estimate");
  fit_cmd->add_option("--schedule", fit_schedule, "phases as EPOCHSxBATCH[,EPOCHSxBATCH...]");
  fit_cmd->add_option("--alpha", fit_cfg.opt.alpha, "defensive mixture weight");
  fit_cmd->add_option("--delta", fit_cfg.opt.delta, "defensive component variance (> 1)");
  fit_cmd->add_option("--proposal", fit_proposal, "vem | vem-mix | snis | hessian");
  fit_cmd->add_option("--diag-eta", fit_cfg.opt.diag_eta, "gradient-mapping step size");
  fit_cmd->add_option("--diag-particles", fit_cfg.opt.diag_particles,
                      "draws per diagnostic (0: 4N)");
  fit_cmd->add_option("--diag-every", fit_cfg.opt.diag_every,
                      "diagnostic cadence in iterations (0: T/20)");
  fit_cmd->add_option("--seed", fit_cfg.opt.seed, "rng seed");
  fit_cmd->add_option("--radius", fit_cfg.radius, "box constraint half-width");
  fit_cmd->add_option("--init", fit_cfg.init, "vem | heuristic | file");
  fit_cmd->add_option("--init-theta", fit_init_theta, "theta CSV when --init file");
  add_vem_options(fit_cmd, fit_cfg.vem);

  plnpca::EvalConfig eval_cfg;
  std::string eval_y, eval_x, eval_o, eval_a, eval_b, eval_true, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "compare two parameter values");
  eval_cmd->set_config("--config");
  add_dataset_options(eval_cmd, eval_y, eval_x, eval_o);
  eval_cmd->add_option("--theta-a", eval_a, "first parameter CSV")->required();
  eval_cmd->add_option("--theta-b", eval_b, "second parameter CSV")->required();
  eval_cmd->add_option("--theta-true", eval_true, "true parameter CSV (for RMSE)");
  eval_cmd->add_option("--out", eval_out, "output directory")->required();
  eval_cmd->add_option("-N,--particles", eval_cfg.particles, "draws per individual");
  eval_cmd->add_option("--alpha", eval_cfg.alpha, "defensive mixture weight");
  eval_cmd->add_option("--delta", eval_cfg.delta, "defensive component variance");
  eval_cmd->add_option("--seed", eval_cfg.seed, "rng seed");

  plnpca::DiagnoseConfig diag_cfg;
  std::string diag_y, diag_x, diag_o, diag_theta, diag_out;
  auto* diag_cmd = app.add_subcommand("diagnose", "proposal-quality metrics per kind");
  diag_cmd->set_config("--config");
  add_dataset_options(diag_cmd, diag_y, diag_x, diag_o);
  diag_cmd->add_option("--theta", diag_theta, "parameter CSV")->required();
  diag_cmd->add_option("--out", diag_out, "output directory")->required();
  diag_cmd->add_option("-N,--particles", diag_cfg.particles, "draws per individual");
  diag_cmd->add_option("--alpha", diag_cfg.alpha, "defensive mixture weight");
  diag_cmd->add_option("--delta", diag_cfg.delta, "wide component variance (> 0 here)");
  diag_cmd->add_option("--seed", diag_cfg.seed, "rng seed");
  diag_cmd->add_option("--kinds", diag_cfg.kinds, "subset of vem,vem-mix,snis,hessian")
      ->delimiter(',');
  add_vem_options(diag_cmd, diag_cfg.vem);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim_cmd->parsed()) {
      sim.out_dir = sim_out;
      sim.theta_path = sim_theta;
      plnpca::run_simulate(sim);
      return 0;
    }
    if (vem_cmd->parsed()) {
      vem_cfg.y_path = vem_y;
      vem_cfg.x_path = vem_x;
      vem_cfg.o_path = vem_o;
      vem_cfg.out_dir = vem_out;
      plnpca::run_vem(vem_cfg);
      return 0;
    }
    if (fit_cmd->parsed()) {
      fit_cfg.y_path = fit_y;
      fit_cfg.x_path = fit_x;
      fit_cfg.o_path = fit_o;
      fit_cfg.out_dir = fit_out;
      fit_cfg.init_theta_path = fit_init_theta;
      fit_cfg.opt.schedule = parse_schedule(fit_schedule);
      fit_cfg.opt.proposal = plnpca::proposal_kind_from_string(fit_proposal);
      return plnpca::run_fit(fit_cfg);
    }
    if (eval_cmd->parsed()) {
      eval_cfg.y_path = eval_y;
      eval_cfg.x_path = eval_x;
      eval_cfg.o_path = eval_o;
      eval_cfg.theta_a_path = eval_a;
      eval_cfg.theta_b_path = eval_b;
      eval_cfg.theta_true_path = eval_true;
      eval_cfg.out_dir = eval_out;
      plnpca::run_eval(eval_cfg);
      return 0;
    }
    if (diag_cmd->parsed()) {
      diag_cfg.y_path = diag_y;
      diag_cfg.x_path = diag_x;
      diag_cfg.o_path = diag_o;
      diag_cfg.theta_path = diag_theta;
      diag_cfg.out_dir = diag_out;
      plnpca::run_diagnose(diag_cfg);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "plnpca: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

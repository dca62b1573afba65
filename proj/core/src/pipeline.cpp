#include "plnpca/pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>

#include <nlohmann/json.hpp>

#include "plnpca/errors.hpp"
#include "plnpca/io.hpp"
#include "plnpca/numeric.hpp"
#include "plnpca/rng.hpp"
#include "plnpca/snis.hpp"

namespace plnpca {

namespace {

using ordered_json = nlohmann::ordered_json;

bool verbose() {
  const char* env = std::getenv("PLNPCA_VERBOSE");
  return env != nullptr && env[0] != '\0' && env[0] != '0';
}

void ensure_dir(const std::filesystem::path& dir) {
  if (dir.empty()) throw SchemaError("output directory not set");
  std::filesystem::create_directories(dir);
}

void write_json(const std::filesystem::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

ordered_json record_to_json(const IterationRecord& rec) {
  ordered_json j;
  j["iteration"] = rec.iteration;
  j["epoch"] = rec.epoch;
  j["batch"] = rec.batch;
  j["loss_estimate"] = rec.loss_estimate;
  j["mean_ess"] = rec.mean_ess;
  if (rec.mean_forward_kl) {
    j["mean_forward_kl"] = *rec.mean_forward_kl;
  } else {
    j["mean_forward_kl"] = nullptr;
  }
  j["mean_reverse_kl"] = rec.mean_reverse_kl;
  j["step_norm"] = rec.step_norm;
  j["projected"] = rec.projected;
  if (rec.grad_mapping_norm) {
    j["grad_mapping_norm"] = *rec.grad_mapping_norm;
  } else {
    j["grad_mapping_norm"] = nullptr;
  }
  j["dropped"] = rec.dropped;
  return j;
}

ordered_json opt_config_to_json(const OptConfig& opt) {
  ordered_json j;
  j["gamma0"] = opt.gamma0;
  j["iterations"] = opt.iterations;
  j["particles"] = opt.particles;
  ordered_json sched = ordered_json::array();
  for (const auto& phase : opt.schedule) {
    sched.push_back({{"epochs", phase.epochs}, {"batch_size", phase.batch_size}});
  }
  j["schedule"] = sched;
  j["alpha"] = opt.alpha;
  j["delta"] = opt.delta;
  j["proposal"] = to_string(opt.proposal);
  j["diag_eta"] = opt.diag_eta;
  j["diag_particles"] = opt.diag_particles;
  j["diag_every"] = opt.diag_every;
  j["seed"] = opt.seed;
  return j;
}

}  // namespace

void run_simulate(const SimulateConfig& config) {
  ensure_dir(config.out_dir);

  ModelParams truth;
  if (!config.theta_path.empty()) {
    truth = io::load_theta(config.theta_path);
    if (truth.variables() != config.p || truth.rank() != config.q ||
        truth.covariates() != config.d) {
      throw SchemaError("simulate: provided theta does not match requested dimensions");
    }
  } else {
    auto stream = rng::substream(config.seed, 0x545255);  // truth draw
    std::normal_distribution<double> normal(0.0, 1.0);
    truth = ModelParams::zeros(config.d, config.p, config.q);
    for (arma::uword c = 0; c < truth.B.n_cols; ++c) {
      truth.B(0, c) = 1.0 + 0.3 * normal(stream);
      for (arma::uword r = 1; r < truth.B.n_rows; ++r) truth.B(r, c) = 0.3 * normal(stream);
    }
    const double scale = 0.7 / std::sqrt(static_cast<double>(config.q));
    for (arma::uword k = 0; k < truth.C.n_elem; ++k) truth.C(k) = scale * normal(stream);
  }
  truth.validate();

  arma::mat x(config.n, config.d, arma::fill::ones);
  {
    auto stream = rng::substream(config.seed, 0x434f56);  // covariate draw
    std::normal_distribution<double> normal(0.0, 1.0);
    for (arma::uword c = 1; c < x.n_cols; ++c) {
      for (arma::uword r = 0; r < x.n_rows; ++r) x(r, c) = normal(stream);
    }
  }
  const arma::mat offsets = arma::zeros(config.n, config.p);

  const Dataset data = simulate(truth, x, offsets, config.seed);

  io::save_csv_matrix(config.out_dir / "Y.csv", data.Y, "y");
  io::save_csv_matrix(config.out_dir / "X.csv", data.X, "x");
  io::save_csv_matrix(config.out_dir / "O.csv", data.O, "o");
  io::save_theta(config.out_dir / "theta_true.csv", truth);

  ordered_json meta;
  meta["seed"] = config.seed;
  meta["n"] = config.n;
  meta["p"] = config.p;
  meta["q"] = config.q;
  meta["d"] = config.d;
  write_json(config.out_dir / "meta.json", meta);
}

void run_vem(const VemRunConfig& config) {
  ensure_dir(config.out_dir);
  const Dataset data = io::load_dataset(config.y_path, config.x_path, config.o_path);
  const ModelParams start = init_heuristic(data, config.q);
  const VemResult res = vem_fit(data, start, config.vem);

  io::save_theta(config.out_dir / "theta_vem.csv", res.params);
  io::save_csv_matrix(config.out_dir / "vem_m.csv", res.vp.M, "m");
  io::save_csv_matrix(config.out_dir / "vem_logs.csv", res.vp.LogS, "logs");

  ordered_json summary;
  summary["converged"] = res.converged;
  summary["iterations"] = res.elbo_path.size() - 1;
  summary["final_elbo"] = res.elbo_path.back();
  write_json(config.out_dir / "vem_summary.json", summary);
}

int run_fit(const FitRunConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(config.out_dir);

  ordered_json summary;
  summary["mode"] = "fit";
  summary["init"] = config.init;
  summary["q"] = config.q;
  summary["radius"] = config.radius;
  summary["opt"] = opt_config_to_json(config.opt);
  ordered_json errors = ordered_json::array();

  try {
    ordered_json hashes;
    hashes["y"] = io::file_content_hash(config.y_path);
    hashes["x"] = io::file_content_hash(config.x_path);
    if (!config.o_path.empty()) hashes["o"] = io::file_content_hash(config.o_path);
    summary["input_hashes"] = hashes;

    const Dataset data = io::load_dataset(config.y_path, config.x_path, config.o_path);

    const bool needs_vp = config.opt.proposal == ProposalKind::vem ||
                          config.opt.proposal == ProposalKind::vem_mix;
    ModelParams theta0;
    std::optional<VariationalParams> vp;
    if (config.init == "vem") {
      if (verbose()) std::cerr << "plnpca: running VEM initializer\n";
      const VemResult vem = vem_fit(data, init_heuristic(data, config.q), config.vem);
      theta0 = vem.params;
      vp = vem.vp;
    } else if (config.init == "heuristic") {
      theta0 = init_heuristic(data, config.q);
    } else if (config.init == "file") {
      theta0 = io::load_theta(config.init_theta_path);
    } else {
      throw SchemaError("fit: unknown init mode '" + config.init + "'");
    }
    if (needs_vp && !vp) {
      vp = fit_variational(data, theta0, config.vem).vp;
    }

    const ConstraintSet cset{config.radius};
    theta0 = project(theta0, cset);
    io::save_theta(config.out_dir / "theta_init.csv", theta0);

    std::ofstream trace_out(config.out_dir / "trace.jsonl", std::ios::binary);
    if (!trace_out) throw SchemaError("cannot write trace.jsonl");
    std::size_t lines = 0;
    double last_loss = std::numeric_limits<double>::quiet_NaN();
    auto on_iteration = [&](const IterationRecord& rec) {
      trace_out << record_to_json(rec).dump() << '\n';
      trace_out.flush();
      last_loss = rec.loss_estimate;
      ++lines;
      if (verbose() && rec.iteration % 500 == 0) {
        std::cerr << "plnpca: iteration " << rec.iteration << " loss " << rec.loss_estimate
                  << "\n";
      }
    };

    const FitResult res = fit(data, theta0, cset, config.opt,
                              vp ? &*vp : nullptr, on_iteration);
    io::save_theta(config.out_dir / "theta_hat.csv", res.params);
    summary["iterations_run"] = lines;
    summary["final_loss_estimate"] = last_loss;
  } catch (const std::exception& e) {
    errors.push_back(e.what());
  }

  summary["errors"] = errors;
  summary["runtime_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(config.out_dir / "summary.json", summary);
  return errors.empty() ? 0 : 1;
}

namespace {

double rmse(const arma::mat& a, const arma::mat& b) {
  return std::sqrt(arma::accu(arma::square(a - b)) / static_cast<double>(a.n_elem));
}

struct SampleDiag {
  bool ok = false;
  double mll = 0.0;
  double ess_value = 0.0;
  std::optional<double> fkl;
  double rkl = 0.0;
};

SampleDiag weigh(const ModelParams& theta, const Dataset& data, std::size_t i,
                 const GaussianMixtureProposal& prop, const arma::mat& particles) {
  SampleDiag out;
  try {
    const WeightedParticles wp = compute_weights(theta, data, i, prop, particles);
    out.ok = true;
    out.mll = marginal_loglik_estimate(wp);
    out.ess_value = ess(wp);
    out.rkl = reverse_kl_estimate(wp);
    if (wp.norm_weights.min() > 0.0) out.fkl = forward_kl_estimate(wp);
  } catch (const DegenerateWeightsError&) {
  }
  return out;
}

void emit_diag(ordered_json& j, const std::string& suffix, const SampleDiag& d) {
  if (!d.ok) {
    j["ess_" + suffix] = nullptr;
    j["forward_kl_" + suffix] = nullptr;
    j["reverse_kl_" + suffix] = nullptr;
    return;
  }
  j["ess_" + suffix] = d.ess_value;
  j["forward_kl_" + suffix] = d.fkl ? ordered_json(*d.fkl) : ordered_json(nullptr);
  j["reverse_kl_" + suffix] = d.rkl;
}

}  // namespace

void run_eval(const EvalConfig& config) {
  ensure_dir(config.out_dir);
  const Dataset data = io::load_dataset(config.y_path, config.x_path, config.o_path);
  const ModelParams theta_a = io::load_theta(config.theta_a_path);
  const ModelParams theta_b = io::load_theta(config.theta_b_path);
  const std::size_t n = data.individuals();

  double log_ratio = 0.0;
  std::size_t excluded = 0;
  ordered_json per_individual = ordered_json::array();

  for (std::size_t i = 0; i < n; ++i) {
    GaussianMixtureProposal prop = [&] {
      try {
        return adapt_hessian(theta_b, data, i, conditional_mode(theta_b, data, i),
                             config.alpha, config.delta);
      } catch (const Error&) {
        const std::size_t q = theta_b.rank();
        return GaussianMixtureProposal::make(arma::zeros(q), arma::eye(q, q), config.alpha,
                                             config.delta);
      }
    }();
    auto stream = rng::substream(config.seed, 0x4556, i);  // shared across both thetas
    const arma::mat particles = prop.sample(config.particles, stream);

    const SampleDiag da = weigh(theta_a, data, i, prop, particles);
    const SampleDiag db = weigh(theta_b, data, i, prop, particles);
    if (da.ok && db.ok) {
      log_ratio += da.mll - db.mll;
    } else {
      ++excluded;
    }
    ordered_json j;
    j["individual"] = i;
    emit_diag(j, "a", da);
    emit_diag(j, "b", db);
    per_individual.push_back(std::move(j));
  }

  ordered_json out;
  out["individuals"] = n;
  out["particles"] = config.particles;
  out["seed"] = config.seed;
  out["proposal"] = "hessian mixture adapted at theta_b";
  out["shared_particles"] = true;
  out["log_likelihood_ratio_a_over_b"] = log_ratio;
  out["excluded_individuals"] = excluded;
  if (!config.theta_true_path.empty()) {
    const ModelParams truth = io::load_theta(config.theta_true_path);
    ordered_json r;
    r["sigma_a"] = rmse(theta_a.C * theta_a.C.t(), truth.C * truth.C.t());
    r["sigma_b"] = rmse(theta_b.C * theta_b.C.t(), truth.C * truth.C.t());
    r["b_a"] = rmse(theta_a.B, truth.B);
    r["b_b"] = rmse(theta_b.B, truth.B);
    out["rmse"] = r;
  } else {
    out["rmse"] = nullptr;
  }
  out["per_individual"] = per_individual;
  write_json(config.out_dir / "eval.json", out);
}

void run_diagnose(const DiagnoseConfig& config) {
  ensure_dir(config.out_dir);
  if (!(config.delta > 0.0)) throw SchemaError("diagnose: delta must be positive");
  const Dataset data = io::load_dataset(config.y_path, config.x_path, config.o_path);
  const ModelParams theta = io::load_theta(config.theta_path);
  const std::size_t n = data.individuals();
  const std::size_t q = theta.rank();

  bool needs_vp = false;
  for (const auto& kind : config.kinds) {
    if (kind == "vem" || kind == "vem-mix") needs_vp = true;
  }
  std::optional<VariationalParams> vp;
  if (needs_vp) vp = fit_variational(data, theta, config.vem).vp;

  std::ofstream out(config.out_dir / "diagnostics.csv", std::ios::binary);
  if (!out) throw SchemaError("cannot write diagnostics.csv");
  out << "kind,individual,particles,ess,forward_kl,reverse_kl\n";

  for (std::size_t kind_idx = 0; kind_idx < config.kinds.size(); ++kind_idx) {
    const std::string& kind = config.kinds[kind_idx];
    for (std::size_t i = 0; i < n; ++i) {
      arma::vec mu;
      arma::mat s;
      double alpha = config.alpha;
      if (kind == "vem" || kind == "vem-mix") {
        mu = vp->mean(i);
        s = arma::diagmat(vp->variances(i));
        if (kind == "vem") alpha = 1e-12;
      } else if (kind == "hessian") {
        mu = conditional_mode(theta, data, i);
        s = hessian_covariance(theta, data, i, mu);
      } else if (kind == "snis") {
        const arma::vec mode = conditional_mode(theta, data, i);
        const auto pilot_prop = GaussianMixtureProposal::make_relaxed(
            mode, hessian_covariance(theta, data, i, mode), config.alpha,
            std::max(config.delta, 1.0 + 1e-9));
        auto pilot_stream = rng::substream(config.seed, 0x504C54, i);
        const arma::mat pilot = pilot_prop.sample(config.particles, pilot_stream);
        const PosteriorMoments moments =
            snis_moments(compute_weights(theta, data, i, pilot_prop, pilot));
        mu = moments.mean;
        s = repair_spd(moments.cov);
      } else {
        throw SchemaError("diagnose: unknown proposal kind '" + kind + "'");
      }

      // Relaxed construction so that diagnostic settings like delta = 1 are
      // representable; fits always go through the validated path.
      const auto prop = GaussianMixtureProposal::make_relaxed(mu, s, alpha, config.delta);
      auto stream = rng::substream(config.seed, 0x4447 + kind_idx, i);
      const arma::mat particles = prop.sample(config.particles, stream);
      const SampleDiag diag = weigh(theta, data, i, prop, particles);

      out << kind << ',' << i << ',' << config.particles << ',';
      if (diag.ok) {
        out << io::format_double(diag.ess_value) << ',';
        out << (diag.fkl ? io::format_double(*diag.fkl) : "") << ',';
        out << io::format_double(diag.rkl) << '\n';
      } else {
        out << ",,\n";
      }
    }
  }
  if (!out) throw SchemaError("write failed for diagnostics.csv");
}

}  // namespace plnpca

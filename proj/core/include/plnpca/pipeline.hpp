#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "plnpca/optimizer.hpp"
#include "plnpca/vem.hpp"

namespace plnpca {

struct SimulateConfig {
  std::size_t n = 100;
  std::size_t p = 10;
  std::size_t q = 2;
  std::size_t d = 1;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir;
  std::filesystem::path theta_path;  // optional: read the truth instead of drawing one
};

/// Writes Y.csv, X.csv, O.csv, theta_true.csv and meta.json into out_dir.
/// Byte-identical files for identical configs.
void run_simulate(const SimulateConfig& config);

struct VemRunConfig {
  std::filesystem::path y_path, x_path, o_path;  // o optional
  std::filesystem::path out_dir;
  std::size_t q = 2;
  VemConfig vem;
};

/// Heuristic start + variational EM; writes theta_vem.csv, vem_m.csv,
/// vem_logs.csv and vem_summary.json.
void run_vem(const VemRunConfig& config);

struct FitRunConfig {
  std::filesystem::path y_path, x_path, o_path;  // o optional
  std::filesystem::path out_dir;
  OptConfig opt;
  std::size_t q = 2;  // latent rank (ignored when init == "file")
  double radius = 12.0;
  std::string init = "vem";  // vem | heuristic | file
  std::filesystem::path init_theta_path;
  VemConfig vem;
};

/// Full pipeline: initialize, fit, and stream the trace. Writes
/// theta_init.csv, theta_hat.csv, trace.jsonl and summary.json. Returns the
/// process exit code (0 iff summary.json carries no error records); a fit
/// abort still flushes the partial trace and summary.
int run_fit(const FitRunConfig& config);

struct EvalConfig {
  std::filesystem::path y_path, x_path, o_path;
  std::filesystem::path theta_a_path, theta_b_path;
  std::filesystem::path theta_true_path;  // optional
  std::filesystem::path out_dir;
  std::size_t particles = 1000;
  double alpha = 0.001;
  double delta = 1.1;
  std::uint64_t seed = 1;
};

/// SNIS likelihood-ratio estimate between two parameter values with shared
/// per-individual particles, plus RMSE against the truth when provided and
/// per-individual sampling diagnostics at both values. Writes eval.json.
void run_eval(const EvalConfig& config);

struct DiagnoseConfig {
  std::filesystem::path y_path, x_path, o_path;
  std::filesystem::path theta_path;
  std::filesystem::path out_dir;
  std::size_t particles = 1000;
  double alpha = 0.001;
  double delta = 1.1;  // > 0; values <= 1 are allowed for diagnostics only
  std::uint64_t seed = 1;
  std::vector<std::string> kinds = {"vem", "vem-mix", "snis", "hessian"};
  VemConfig vem;
};

/// Proposal-quality study at a fixed theta: forward/reverse KL and ESS per
/// proposal kind and individual. Writes diagnostics.csv (box-plot-ready).
void run_diagnose(const DiagnoseConfig& config);

}  // namespace plnpca

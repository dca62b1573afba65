#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "plnpca/model.hpp"
#include "plnpca/proposal.hpp"
#include "plnpca/snis.hpp"
#include "plnpca/vem.hpp"

namespace plnpca {

/// Coordinate-wise box of half-width `radius` on the flattened theta: a
/// compact convex constraint set with an exact O(dim) projection.
struct ConstraintSet {
  double radius = 12.0;

  bool contains(const ModelParams& theta) const;
};

/// Orthogonal projection onto the box: clamp every coordinate to
/// [-radius, radius]. Idempotent and non-expansive.
ModelParams project(const ModelParams& theta, const ConstraintSet& cset);

enum class ProposalKind { vem, vem_mix, snis, hessian };

const char* to_string(ProposalKind kind);
ProposalKind proposal_kind_from_string(const std::string& name);

/// One stretch of the run: `epochs` passes over the data at a fixed batch
/// size. Batch size 1 draws individuals uniformly with replacement
/// (n iterations per epoch); larger batches partition a fresh shuffle.
struct BatchPhase {
  std::size_t epochs = 1;
  std::size_t batch_size = 1;
};

struct OptConfig {
  double gamma0 = 0.01;
  /// Iteration count entering the learning-rate formula gamma = gamma0 /
  /// sqrt(T). 0 derives it from the schedule: the total number of
  /// batch-size-1 iterations, or all iterations when there is no such phase.
  std::size_t iterations = 0;
  std::size_t particles = 500;  // N draws per SNIS estimate
  std::vector<BatchPhase> schedule{{20, 1}};
  double alpha = 0.001;
  double delta = 1.1;
  ProposalKind proposal = ProposalKind::hessian;
  double diag_eta = 0.5;
  std::size_t diag_particles = 0;  // 0: 4 * particles
  std::size_t diag_every = 0;      // 0: max(1, T / 20)
  std::uint64_t seed = 0;

  void validate() const;
};

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based, strictly increasing
  std::size_t epoch = 0;
  std::vector<std::size_t> batch;
  double loss_estimate = 0.0;  // mean negative marginal log-lik estimate
  double mean_ess = 0.0;
  std::optional<double> mean_forward_kl;  // missing when any weight is zero
  double mean_reverse_kl = 0.0;
  double step_norm = 0.0;
  bool projected = false;
  std::optional<double> grad_mapping_norm;  // sparse diagnostic
  std::size_t dropped = 0;  // individuals removed for degenerate weights
};

struct FitTrace {
  std::vector<IterationRecord> records;
};

/// Mutable loop state shared across sgd_step calls: the per-individual cache
/// of the last successful proposal and moment estimates, plus counters.
/// Owned by a single logical thread (the optimizer loop).
struct SgdState {
  std::uint64_t seed = 0;
  std::size_t iteration = 0;  // completed iterations
  std::size_t epoch = 0;
  double gamma = 0.0;
  const VariationalParams* vem = nullptr;

  struct IndividualCache {
    std::optional<PosteriorMoments> moments;       // last SNIS estimates
    std::optional<PosteriorMoments> proposal_used; // last accepted (mu, S)
  };
  std::vector<IndividualCache> cache;

  static SgdState init(const OptConfig& config, double gamma, std::size_t n,
                       const VariationalParams* vem);
};

/// One projected SGD update over `batch`: adapt each proposal, draw N
/// particles, average the negated SNIS scores, step and project. Individuals
/// with degenerate weights are dropped from the mean; if all of them are,
/// throws FitError.
std::pair<ModelParams, IterationRecord> sgd_step(const ModelParams& theta,
                                                 const std::vector<std::size_t>& batch,
                                                 const Dataset& data,
                                                 const ConstraintSet& cset,
                                                 const OptConfig& config, SgdState& state);

/// Norm of the gradient mapping ||theta - P(theta - eta g)|| / eta with g the
/// full-data SNIS gradient estimate (big_n particles per individual, proposals
/// rebuilt at theta from the conditional mode and curvature).
double gradient_mapping_norm(const ModelParams& theta, const Dataset& data,
                             const ConstraintSet& cset, double eta, std::size_t big_n,
                             std::uint64_t seed, double alpha = 0.001,
                             double delta = 1.1);

struct FitResult {
  ModelParams params;
  FitTrace trace;
};

/// Runs the batch schedule (Algorithm 1 within batch-size-1 phases) with the
/// constant learning rate gamma0 / sqrt(T). Fully deterministic given the
/// seed. `on_iteration`, when set, sees each record as soon as it is
/// complete, so a partial trace survives an aborted run.
FitResult fit(const Dataset& data, const ModelParams& theta_init,
              const ConstraintSet& cset, const OptConfig& config,
              const VariationalParams* vem = nullptr,
              const std::function<void(const IterationRecord&)>& on_iteration = {});

}  // namespace plnpca

#include "plnpca/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "plnpca/errors.hpp"
#include "plnpca/numeric.hpp"
#include "plnpca/rng.hpp"

namespace plnpca {

namespace {

// Substream labels so that particle draws, batch picks and diagnostics never
// collide on the same generator state.
enum StreamTag : std::uint64_t {
  kTagParticles = 1,
  kTagPick = 2,
  kTagShuffle = 3,
  kTagDiagnostic = 4,
};

}  // namespace

bool ConstraintSet::contains(const ModelParams& theta) const {
  const double m = std::max(arma::abs(theta.B).max(), arma::abs(theta.C).max());
  return m <= radius;
}

ModelParams project(const ModelParams& theta, const ConstraintSet& cset) {
  if (!(cset.radius > 0.0) || !std::isfinite(cset.radius)) {
    throw DimensionError("ConstraintSet: radius must be positive and finite");
  }
  ModelParams out;
  out.B = arma::clamp(theta.B, -cset.radius, cset.radius);
  out.C = arma::clamp(theta.C, -cset.radius, cset.radius);
  return out;
}

const char* to_string(ProposalKind kind) {
  switch (kind) {
    case ProposalKind::vem: return "vem";
    case ProposalKind::vem_mix: return "vem-mix";
    case ProposalKind::snis: return "snis";
    case ProposalKind::hessian: return "hessian";
  }
  return "?";
}

ProposalKind proposal_kind_from_string(const std::string& name) {
  if (name == "vem") return ProposalKind::vem;
  if (name == "vem-mix" || name == "vemmix") return ProposalKind::vem_mix;
  if (name == "snis") return ProposalKind::snis;
  if (name == "hessian") return ProposalKind::hessian;
  throw SchemaError("unknown proposal kind '" + name + "'");
}

void OptConfig::validate() const {
  if (!(gamma0 > 0.0) || !std::isfinite(gamma0)) {
    throw SchemaError("OptConfig: gamma0 must be positive");
  }
  if (particles < 2) throw SchemaError("OptConfig: need at least 2 particles");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw SchemaError("OptConfig: alpha must be in (0, 1]");
  if (!(delta > 1.0)) throw SchemaError("OptConfig: delta must be > 1");
  if (!(diag_eta > 0.0)) throw SchemaError("OptConfig: diag_eta must be positive");
  for (const auto& phase : schedule) {
    if (phase.batch_size < 1) throw SchemaError("OptConfig: batch sizes must be >= 1");
  }
}

SgdState SgdState::init(const OptConfig& config, double gamma, std::size_t n,
                        const VariationalParams* vem) {
  SgdState state;
  state.seed = config.seed;
  state.gamma = gamma;
  state.vem = vem;
  state.cache.resize(n);
  return state;
}

namespace {

GaussianMixtureProposal build_proposal(const ModelParams& theta, const Dataset& data,
                                       std::size_t i, const OptConfig& config,
                                       SgdState& state) {
  auto& cache = state.cache[i];
  try {
    switch (config.proposal) {
      case ProposalKind::vem:
      case ProposalKind::vem_mix: {
        if (state.vem == nullptr) {
          throw AdaptationError("VEM proposal requested without variational parameters");
        }
        const bool defensive = config.proposal == ProposalKind::vem_mix;
        return adapt_vem(state.vem->mean(i), state.vem->variances(i), config.alpha,
                         config.delta, defensive);
      }
      case ProposalKind::snis: {
        if (cache.moments) {
          return adapt_snis(cache.moments->mean, cache.moments->cov, config.alpha,
                            config.delta);
        }
        const arma::vec mode = conditional_mode(theta, data, i);
        return adapt_hessian(theta, data, i, mode, config.alpha, config.delta);
      }
      case ProposalKind::hessian: {
        const arma::vec mean =
            cache.moments ? cache.moments->mean : conditional_mode(theta, data, i);
        return adapt_hessian(theta, data, i, mean, config.alpha, config.delta);
      }
    }
    throw AdaptationError("unreachable proposal kind");
  } catch (const Error&) {
    if (cache.proposal_used) {
      return GaussianMixtureProposal::make(cache.proposal_used->mean,
                                           cache.proposal_used->cov, config.alpha,
                                           config.delta);
    }
    // Nothing cached yet: fall back to the latent prior shape.
    const std::size_t q = theta.rank();
    return GaussianMixtureProposal::make(arma::zeros(q), arma::eye(q, q), config.alpha,
                                         config.delta);
  }
}

}  // namespace

std::pair<ModelParams, IterationRecord> sgd_step(const ModelParams& theta,
                                                 const std::vector<std::size_t>& batch,
                                                 const Dataset& data,
                                                 const ConstraintSet& cset,
                                                 const OptConfig& config, SgdState& state) {
  if (batch.empty()) throw DimensionError("sgd_step: empty batch");

  IterationRecord rec;
  rec.iteration = state.iteration + 1;
  rec.epoch = state.epoch;
  rec.batch = batch;

  ParamGrad grad = ParamGrad::zeros(theta.covariates(), theta.variables(), theta.rank());
  std::size_t used = 0;
  double ess_acc = 0.0, rkl_acc = 0.0, mll_acc = 0.0, fkl_acc = 0.0;
  std::size_t fkl_count = 0;

  for (const std::size_t i : batch) {
    const GaussianMixtureProposal proposal = build_proposal(theta, data, i, config, state);
    auto stream = rng::substream(state.seed, kTagParticles, rec.iteration, i);
    const arma::mat particles = proposal.sample(config.particles, stream);

    WeightedParticles wp;
    try {
      wp = compute_weights(theta, data, i, proposal, particles);
    } catch (const DegenerateWeightsError&) {
      ++rec.dropped;
      continue;
    }

    ParamGrad s = snis_score(theta, data, i, wp);
    s *= -1.0;
    grad += s;
    ++used;

    ess_acc += ess(wp);
    rkl_acc += reverse_kl_estimate(wp);
    mll_acc += marginal_loglik_estimate(wp);
    if (wp.norm_weights.min() > 0.0) {
      fkl_acc += forward_kl_estimate(wp);
      ++fkl_count;
    }

    state.cache[i].moments = snis_moments(wp);
    state.cache[i].proposal_used =
        PosteriorMoments{proposal.mean(), proposal.covariance()};
  }

  if (used == 0) {
    throw FitError("sgd_step: every individual in the batch had degenerate weights");
  }

  grad *= 1.0 / static_cast<double>(used);
  ModelParams raw;
  raw.B = theta.B - state.gamma * grad.dB;
  raw.C = theta.C - state.gamma * grad.dC;
  ModelParams next = project(raw, cset);

  rec.loss_estimate = -mll_acc / static_cast<double>(used);
  rec.mean_ess = ess_acc / static_cast<double>(used);
  rec.mean_reverse_kl = rkl_acc / static_cast<double>(used);
  if (fkl_count > 0) rec.mean_forward_kl = fkl_acc / static_cast<double>(fkl_count);
  rec.step_norm = std::sqrt(arma::accu(arma::square(next.B - theta.B)) +
                            arma::accu(arma::square(next.C - theta.C)));
  rec.projected = arma::abs(raw.B - next.B).max() > 0.0 ||
                  arma::abs(raw.C - next.C).max() > 0.0;

  ++state.iteration;
  return {std::move(next), std::move(rec)};
}

double gradient_mapping_norm(const ModelParams& theta, const Dataset& data,
                             const ConstraintSet& cset, double eta, std::size_t big_n,
                             std::uint64_t seed, double alpha, double delta) {
  if (!(eta > 0.0)) throw DimensionError("gradient_mapping_norm: eta must be positive");
  const std::size_t n = data.individuals();
  ParamGrad grad = ParamGrad::zeros(theta.covariates(), theta.variables(), theta.rank());
  std::size_t used = 0;

  for (std::size_t i = 0; i < n; ++i) {
    GaussianMixtureProposal proposal = [&] {
      try {
        return adapt_hessian(theta, data, i, conditional_mode(theta, data, i), alpha, delta);
      } catch (const Error&) {
        const std::size_t q = theta.rank();
        return GaussianMixtureProposal::make(arma::zeros(q), arma::eye(q, q), alpha, delta);
      }
    }();
    auto stream = rng::substream(seed, kTagDiagnostic, i);
    const arma::mat particles = proposal.sample(big_n, stream);
    WeightedParticles wp;
    try {
      wp = compute_weights(theta, data, i, proposal, particles);
    } catch (const DegenerateWeightsError&) {
      continue;
    }
    ParamGrad s = snis_score(theta, data, i, wp);
    s *= -1.0;
    grad += s;
    ++used;
  }
  if (used == 0) {
    throw FitError("gradient_mapping_norm: all individuals degenerate");
  }
  grad *= 1.0 / static_cast<double>(used);

  ModelParams stepped;
  stepped.B = theta.B - eta * grad.dB;
  stepped.C = theta.C - eta * grad.dC;
  const ModelParams proj = project(stepped, cset);
  const double dist = std::sqrt(arma::accu(arma::square(theta.B - proj.B)) +
                                arma::accu(arma::square(theta.C - proj.C)));
  return dist / eta;
}

namespace {

std::size_t iterations_per_epoch(std::size_t n, std::size_t batch_size) {
  if (batch_size <= 1) return n;
  return (n + batch_size - 1) / batch_size;
}

}  // namespace

FitResult fit(const Dataset& data, const ModelParams& theta_init,
              const ConstraintSet& cset, const OptConfig& config,
              const VariationalParams* vem,
              const std::function<void(const IterationRecord&)>& on_iteration) {
  config.validate();
  data.validate();
  theta_init.validate();
  const std::size_t n = data.individuals();

  FitResult res;
  res.params = project(theta_init, cset);

  std::size_t total_iters = 0;
  std::size_t analyzed_iters = 0;  // batch-size-1 iterations
  for (const auto& phase : config.schedule) {
    total_iters += phase.epochs * iterations_per_epoch(n, phase.batch_size);
    if (phase.batch_size == 1) analyzed_iters += phase.epochs * n;
  }
  if (total_iters == 0) return res;

  const std::size_t horizon =
      config.iterations > 0 ? config.iterations
                            : (analyzed_iters > 0 ? analyzed_iters : total_iters);
  const double gamma = config.gamma0 / std::sqrt(static_cast<double>(horizon));
  const std::size_t diag_every =
      config.diag_every > 0 ? config.diag_every : std::max<std::size_t>(1, horizon / 20);
  const std::size_t diag_n =
      config.diag_particles > 0 ? config.diag_particles : 4 * config.particles;

  SgdState state = SgdState::init(config, gamma, n, vem);

  for (const auto& phase : config.schedule) {
    for (std::size_t e = 0; e < phase.epochs; ++e) {
      ++state.epoch;
      std::vector<std::vector<std::size_t>> batches;
      if (phase.batch_size == 1) {
        auto pick = rng::substream(config.seed, kTagPick, state.epoch);
        std::uniform_int_distribution<std::size_t> unif(0, n - 1);
        for (std::size_t t = 0; t < n; ++t) batches.push_back({unif(pick)});
      } else {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        auto shuffle_stream = rng::substream(config.seed, kTagShuffle, state.epoch);
        std::shuffle(order.begin(), order.end(), shuffle_stream);
        for (std::size_t start = 0; start < n; start += phase.batch_size) {
          const std::size_t stop = std::min(n, start + phase.batch_size);
          batches.emplace_back(order.begin() + start, order.begin() + stop);
        }
      }

      for (const auto& batch : batches) {
        auto [next, rec] = sgd_step(res.params, batch, data, cset, config, state);
        res.params = std::move(next);
        if (rec.iteration % diag_every == 0) {
          rec.grad_mapping_norm =
              gradient_mapping_norm(res.params, data, cset, config.diag_eta, diag_n,
                                    rng::mix(config.seed ^ rec.iteration),
                                    config.alpha, config.delta);
        }
        if (on_iteration) on_iteration(rec);
        res.trace.records.push_back(std::move(rec));
      }
    }
  }
  return res;
}

}  // namespace plnpca

#pragma once

// Composite Koopman training loss and its exact gradient.
//
//   total = alpha1 (recon + pred) + lin + alpha2 inf + alpha3 reg
//
//   recon = mse(x_1, dec(enc(x_1)))
//   pred  = 1/S_p  sum_{m=1..S_p}  mse(x_{m+1}, dec(K^m enc(x_1)))
//   lin   = 1/(T-1) sum_{m=1..T-1} mse(enc(x_{m+1}), K^m enc(x_1))
//   inf   = max|x_1 - dec(enc(x_1))| + max|x_2 - dec(K enc(x_1))|
//   reg   = sum of squared weight entries (no biases)
//
// K^m is the product of per-step propagators, each built from eigenvalues
// evaluated on the current latent state. mse averages over state (or latent)
// components, then over trajectories; inf takes the largest absolute entry
// over components and trajectories.

#include <span>
#include <vector>

#include "koopnet/dynamics.hpp"
#include "koopnet/koopman.hpp"

namespace koopnet {

struct LossWeights {
  double alpha1 = 0.1;
  double alpha2 = 1e-7;
  double alpha3 = 1e-15;
  int prediction_steps = 30;
};

struct LossBreakdown {
  double total = 0.0;
  double recon = 0.0;
  double pred = 0.0;
  double lin = 0.0;
  double inf = 0.0;
  double reg = 0.0;
};

/// Full loss, or the autoencoder-only loss used for pretraining
/// (alpha1 recon + alpha2 max|x_1 - dec(enc(x_1))| + alpha3 reg).
enum class LossTerms { Full, Autoencoder };

/// Whole trajectories stacked time-major: rows [k*count, (k+1)*count) hold
/// snapshot k of every trajectory.
struct TrajectoryBatch {
  Matrix states;
  int length = 0;
  int count = 0;

  auto snapshot(int k) const { return states.middleRows(static_cast<Index>(k) * count, count); }
};

TrajectoryBatch make_batch(std::span<const Trajectory> trajectories);
TrajectoryBatch make_batch(const Dataset& dataset, std::span<const std::size_t> indices);

LossBreakdown compute_loss(const KoopmanModel& model, const TrajectoryBatch& batch,
                           const LossWeights& weights, LossTerms terms = LossTerms::Full);

struct LossAndGradient {
  LossBreakdown loss;
  ModelGrads grads;
};

/// Loss plus gradients of `total` with respect to every network parameter.
LossAndGradient compute_gradients(const KoopmanModel& model, const TrajectoryBatch& batch,
                                  const LossWeights& weights, LossTerms terms = LossTerms::Full);

/// Loss over a whole dataset evaluated in chunks of `chunk` trajectories and
/// combined so that the result matches a single pass over every trajectory.
LossBreakdown evaluate_dataset(const KoopmanModel& model, const Dataset& dataset,
                               const LossWeights& weights, std::size_t chunk = 256,
                               LossTerms terms = LossTerms::Full);

}  // namespace koopnet

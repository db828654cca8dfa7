#pragma once

// Small models and data shared by the unit tests and the acceptance runner.

#include <cstdint>
#include <vector>

#include "koopnet/dynamics.hpp"
#include "koopnet/koopman.hpp"
#include "koopnet/loss.hpp"
#include "koopnet/nnet.hpp"
#include "koopnet/rng.hpp"

namespace koopnet::testing {

/// The benchmark architecture for `kind` with every hidden width cut down.
ModelArchitecture reduced_architecture(SystemKind kind);

/// Model with nonzero biases everywhere so every parameter gets exercised.
KoopmanModel random_model(const ModelArchitecture& arch, double dt, std::uint64_t seed,
                          double bias_scale = 0.1);

/// `count` simulated trajectories of `kind`, truncated to `length` snapshots.
std::vector<Trajectory> system_trajectories(SystemKind kind, int count, int length,
                                            std::uint64_t seed);

/// Uniform random trajectories in [-1, 1]^dim.
std::vector<Trajectory> random_trajectories(int count, int length, int dim, std::uint64_t seed,
                                            double dt = 0.1);

/// Finite-difference check of compute_gradients on `trajs`.
GradientCheck check_gradient(const KoopmanModel& model, const std::vector<Trajectory>& trajs,
                             const LossWeights& w, LossTerms terms = LossTerms::Full,
                             double step = 1e-5);

/// One pair, one real, optional biases: a model small enough to brute-force.
KoopmanModel tiny_model(std::uint64_t seed, int state_dim = 2, int pairs = 1, int reals = 1);

struct GradientCase {
  KoopmanModel model;
  std::vector<Trajectory> trajectories;
  LossWeights weights;
  int draws = 0;  // samples drawn before a kink-free one was found
};

/// Minimum distance from a kink required of a gradient-check sample; well
/// above the effect of a 1e-5 parameter step on any pre-activation.
inline constexpr double kKinkMargin = 1e-4;

/// A reduced-width model of `kind` with preset loss weights (shortened
/// prediction horizon) and a short batch of simulated trajectories. Samples
/// are redrawn from streams derived from `seed` until the loss is at least
/// kKinkMargin away from every ReLU and max-norm kink.
GradientCase gradient_case(SystemKind kind, std::uint64_t seed);

}  // namespace koopnet::testing

#pragma once

// Independent reference implementations used as test oracles. Everything is
// written with scalar loops over std::vector so that it shares no numerical
// code with the library beyond reading model weights.

#include <vector>

#include "koopnet/koopman.hpp"
#include "koopnet/loss.hpp"

namespace koopnet::oracle {

using Vec = std::vector<double>;

/// When `margin` is given it is lowered to the smallest |pre-activation| seen
/// at any ReLU unit.
Vec mlp_apply(const Mlp& mlp, const Vec& x, double* margin = nullptr);

/// Full propagator for latent y built entry by entry.
std::vector<Vec> propagator(const KoopmanModel& model, const Vec& y, double* margin = nullptr);

Vec matvec(const std::vector<Vec>& a, const Vec& x);

/// Reference loss over whole trajectories; mirrors the documented formula.
LossBreakdown brute_force_loss(const KoopmanModel& model, const std::vector<Trajectory>& trajs,
                               const LossWeights& w, LossTerms terms = LossTerms::Full);

/// Distance of the loss evaluation from its nearest kink: the smallest
/// |pre-activation| over every ReLU unit used, and the gap between the
/// largest and second-largest entries of each max-norm term. Central
/// differences are only meaningful where this is well above the step.
double kink_margin(const KoopmanModel& model, const std::vector<Trajectory>& trajs,
                   const LossWeights& w);

}  // namespace koopnet::oracle

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "koopnet/error.hpp"
#include "koopnet/loss.hpp"
#include "koopnet/training.hpp"
#include "support/fixtures.hpp"
#include "support/oracle.hpp"

using namespace koopnet;
namespace kt = koopnet::testing;

namespace {

const SystemKind kAllKinds[] = {SystemKind::DiscreteSpectrum, SystemKind::Pendulum,
                                SystemKind::FluidFlowOnAttractor,
                                SystemKind::FluidFlowOffAttractor};

Mlp identity_net(Index n) {
  return Mlp({DenseLayer{Matrix::Identity(n, n), Vector::Zero(n), Activation::Linear}});
}

void expect_breakdown_near(const LossBreakdown& a, const LossBreakdown& b, double tol,
                           const std::string& what = {}) {
  auto rel = [](double x, double y) { return std::abs(x - y) / std::max(1.0, std::abs(y)); };
  EXPECT_LE(rel(a.total, b.total), tol) << what << " total " << a.total << " vs " << b.total;
  EXPECT_LE(rel(a.recon, b.recon), tol) << what << " recon";
  EXPECT_LE(rel(a.pred, b.pred), tol) << what << " pred";
  EXPECT_LE(rel(a.lin, b.lin), tol) << what << " lin";
  EXPECT_LE(rel(a.inf, b.inf), tol) << what << " inf";
  EXPECT_LE(rel(a.reg, b.reg), tol) << what << " reg";
}

// Identity encoder/decoder with K = I: every constant trajectory is a fixed point.
KoopmanModel identity_model() {
  ModelArchitecture a;
  a.state_dim = 2;
  a.spectrum = {1, 0};
  a.aux_hidden = {3};
  auto m = make_model(a, 0.1, 2);
  m.encoder = identity_net(2);
  m.decoder = identity_net(2);
  auto& last = m.aux_pairs[0].layer(m.aux_pairs[0].depth() - 1);
  last.weight.setZero();
  last.bias.setZero();
  return m;
}

std::vector<Trajectory> constant_trajectories(int count, int length) {
  std::vector<Trajectory> out;
  for (int i = 0; i < count; ++i) {
    Trajectory t;
    t.dt = 0.1;
    t.states = Matrix::Zero(length, 2);
    t.states.col(0).setConstant(0.3 * (i + 1));
    t.states.col(1).setConstant(-0.2 * i);
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST(MakeBatch, TimeMajorLayout) {
  const auto trajs = kt::random_trajectories(3, 4, 2, 5);
  const auto b = make_batch(trajs);
  EXPECT_EQ(b.count, 3);
  EXPECT_EQ(b.length, 4);
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 3; ++i) EXPECT_EQ(b.snapshot(k).row(i), trajs[i].states.row(k));
}

TEST(MakeBatch, RejectsRaggedTrajectories) {
  auto trajs = kt::random_trajectories(2, 4, 2, 5);
  trajs[1].states.conservativeResize(3, 2);
  EXPECT_THROW(make_batch(trajs), ShapeError);
}

TEST(Loss, FixedPointIsZeroExceptRegularization) {
  const auto m = identity_model();
  const LossWeights w{0.1, 1e-7, 1e-3, 3};
  const auto l = compute_loss(m, make_batch(constant_trajectories(3, 6)), w);
  EXPECT_EQ(l.recon, 0.0);
  EXPECT_EQ(l.pred, 0.0);
  EXPECT_EQ(l.lin, 0.0);
  EXPECT_EQ(l.inf, 0.0);
  EXPECT_EQ(l.total, w.alpha3 * l.reg);
  EXPECT_EQ(l.reg, weight_sq_norm(m));
}

TEST(Loss, ZeroAlphasLeaveOnlyLinearity) {
  const auto m = kt::tiny_model(3);
  const auto l = compute_loss(m, make_batch(kt::random_trajectories(3, 6, 2, 1)),
                              LossWeights{0, 0, 0, 2});
  EXPECT_EQ(l.total, l.lin);
  EXPECT_GT(l.recon, 0.0);
}

TEST(Loss, CompositeIdentity) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto m = kt::tiny_model(s);
    const LossWeights w{0.3, 0.02, 1e-3, 3};
    const auto l = compute_loss(m, make_batch(kt::random_trajectories(2, 5, 2, s)), w);
    const double expected = w.alpha1 * (l.recon + l.pred) + l.lin + w.alpha2 * l.inf + w.alpha3 * l.reg;
    EXPECT_NEAR(l.total, expected, 1e-12 * std::max(1.0, std::abs(expected)));
  }
}

TEST(Loss, MatchesBruteForceOracle) {
  int cases = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(Rng::derive(4242, s));
    const int n = 1 + static_cast<int>(rng.below(3));
    const int pairs = static_cast<int>(rng.below(2));
    const int reals = pairs == 0 ? 1 + static_cast<int>(rng.below(2)) : static_cast<int>(rng.below(2));
    auto m = kt::tiny_model(s, n, pairs, reals);
    if (s % 3 == 0) m.eigenvalue_source = EigenvalueSource::Encoded;
    const int length = 3 + static_cast<int>(rng.below(4));
    const int sp = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(length - 1)));
    const LossWeights w{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1e-2), sp};
    const auto trajs = kt::random_trajectories(2 + static_cast<int>(rng.below(3)), length, n, s, m.dt);
    expect_breakdown_near(compute_loss(m, make_batch(trajs), w), oracle::brute_force_loss(m, trajs, w),
                          1e-12, "case " + std::to_string(s));
    expect_breakdown_near(compute_loss(m, make_batch(trajs), w, LossTerms::Autoencoder),
                          oracle::brute_force_loss(m, trajs, w, LossTerms::Autoencoder), 1e-12,
                          "autoencoder case " + std::to_string(s));
    ++cases;
  }
  EXPECT_EQ(cases, 100);
}

TEST(Loss, SpecExampleTwoTrajectoriesOfLengthFive) {
  const auto m = kt::tiny_model(21);
  const auto trajs = kt::random_trajectories(2, 5, 2, 21);
  const LossWeights w{0.1, 1e-7, 1e-15, 2};
  expect_breakdown_near(compute_loss(m, make_batch(trajs), w), oracle::brute_force_loss(m, trajs, w),
                        1e-12);
}

TEST(Loss, RegularizerIgnoresBiases) {
  auto m = kt::tiny_model(4);
  const auto batch = make_batch(kt::random_trajectories(2, 5, 2, 4));
  const LossWeights w{0.1, 1e-7, 1e-3, 2};
  const double before = compute_loss(m, batch, w).reg;
  m.encoder.layer(0).bias[0] += 0.5;
  m.aux_pairs[0].layer(0).bias[1] -= 0.25;
  EXPECT_EQ(compute_loss(m, batch, w).reg, before);
}

TEST(Loss, BatchOrderInvariance) {
  const auto m = kt::tiny_model(7);
  auto trajs = kt::random_trajectories(6, 6, 2, 7);
  const LossWeights w{0.1, 1e-2, 1e-3, 3};
  const auto a = compute_loss(m, make_batch(trajs), w);
  std::reverse(trajs.begin(), trajs.end());
  std::swap(trajs[1], trajs[4]);
  expect_breakdown_near(compute_loss(m, make_batch(trajs), w), a, 1e-12);
}

TEST(Loss, ShortTrajectoriesAreAConfigurationError) {
  const auto m = kt::tiny_model(1);
  const auto batch = make_batch(kt::random_trajectories(2, 4, 2, 1));
  EXPECT_THROW(compute_loss(m, batch, LossWeights{0.1, 0, 0, 4}), ConfigError);
  EXPECT_THROW(compute_gradients(m, batch, LossWeights{0.1, 0, 0, 4}), ConfigError);
  EXPECT_THROW(compute_loss(m, batch, LossWeights{0.1, 0, 0, 0}), ConfigError);
  EXPECT_NO_THROW(compute_loss(m, batch, LossWeights{0.1, 0, 0, 3}));
}

TEST(Loss, StateSizeMismatch) {
  const auto m = kt::tiny_model(1);
  EXPECT_THROW(compute_loss(m, make_batch(kt::random_trajectories(2, 4, 3, 1)), LossWeights{}),
               ShapeError);
}

TEST(Loss, DivergenceIsReported) {
  auto m = kt::tiny_model(2);
  auto& last = m.aux_reals[0].layer(m.aux_reals[0].depth() - 1);
  last.weight.setZero();
  last.bias.setConstant(1e4);
  const auto batch = make_batch(kt::random_trajectories(2, 6, 2, 2));
  EXPECT_THROW(compute_gradients(m, batch, LossWeights{0.1, 1e-7, 1e-15, 3}), DivergenceError);
}

TEST(Gradients, FixedPointLeavesOnlyWeightDecay) {
  const auto m = identity_model();
  const LossWeights w{0.1, 1e-7, 1e-3, 3};
  const auto g = compute_gradients(m, make_batch(constant_trajectories(3, 6)), w);
  for (std::size_t k = 0; k < m.encoder.depth(); ++k) {
    EXPECT_EQ(g.grads.encoder.weight[k], (2 * w.alpha3) * m.encoder.layer(k).weight);
    EXPECT_EQ(g.grads.encoder.bias[k].cwiseAbs().maxCoeff(), 0.0);
  }
  for (std::size_t k = 0; k < m.aux_pairs[0].depth(); ++k) {
    EXPECT_EQ(g.grads.aux_pairs[0].weight[k], (2 * w.alpha3) * m.aux_pairs[0].layer(k).weight);
    EXPECT_EQ(g.grads.aux_pairs[0].bias[k].cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Gradients, AgreeWithFiniteDifferencesOnAllArchitectures) {
  for (SystemKind kind : kAllKinds) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto c = kt::gradient_case(kind, seed);
      const auto check = kt::check_gradient(c.model, c.trajectories, c.weights);
      EXPECT_LT(check.max_relative_error, 1e-5)
          << to_string(kind) << " seed " << seed << " index " << check.worst_index << " analytic "
          << check.analytic << " numeric " << check.numeric;
    }
  }
}

TEST(Gradients, EncodedEigenvalueSource) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto c = kt::gradient_case(SystemKind::FluidFlowOffAttractor, seed);
    c.model.eigenvalue_source = EigenvalueSource::Encoded;
    if (oracle::kink_margin(c.model, c.trajectories, c.weights) < kt::kKinkMargin) continue;
    const auto check = kt::check_gradient(c.model, c.trajectories, c.weights);
    EXPECT_LT(check.max_relative_error, 1e-5) << "seed " << seed;
  }
}

TEST(Gradients, AutoencoderModeHasNoDynamicsComponents) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto c = kt::gradient_case(SystemKind::Pendulum, seed);
    const auto g = compute_gradients(c.model, make_batch(c.trajectories), c.weights,
                                     LossTerms::Autoencoder);
    // Aux nets only receive weight decay.
    for (std::size_t k = 0; k < c.model.aux_pairs[0].depth(); ++k) {
      EXPECT_EQ(g.grads.aux_pairs[0].weight[k],
                (2 * c.weights.alpha3) * c.model.aux_pairs[0].layer(k).weight);
      EXPECT_EQ(g.grads.aux_pairs[0].bias[k].cwiseAbs().maxCoeff(), 0.0);
    }
    EXPECT_EQ(g.loss.pred, 0.0);
    EXPECT_EQ(g.loss.lin, 0.0);
    const auto check =
        kt::check_gradient(c.model, c.trajectories, c.weights, LossTerms::Autoencoder);
    EXPECT_LT(check.max_relative_error, 1e-5) << "seed " << seed;
  }
}

TEST(Gradients, LinearInAlpha1) {
  const auto c = kt::gradient_case(SystemKind::DiscreteSpectrum, 3);
  const auto batch = make_batch(c.trajectories);
  auto grad_at = [&](double a1) {
    LossWeights w = c.weights;
    w.alpha1 = a1;
    return pack_gradients(compute_gradients(c.model, batch, w).grads, c.model.parameter_count());
  };
  const Vector g0 = grad_at(0.0), g1 = grad_at(0.1), g2 = grad_at(0.2);
  const Vector d1 = g1 - g0, d2 = g2 - g0;
  EXPECT_GT(d1.norm(), 0.0);
  EXPECT_LT((d2 - 2.0 * d1).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, d2.cwiseAbs().maxCoeff()));
}

TEST(Gradients, LossMatchesComputeLoss) {
  const auto c = kt::gradient_case(SystemKind::FluidFlowOnAttractor, 2);
  const auto batch = make_batch(c.trajectories);
  const auto a = compute_gradients(c.model, batch, c.weights).loss;
  const auto b = compute_loss(c.model, batch, c.weights);
  EXPECT_EQ(a.total, b.total);
  EXPECT_EQ(a.inf, b.inf);
}

TEST(EvaluateDataset, ChunkingMatchesSinglePass) {
  const auto spec = SystemSpec::make(SystemKind::Pendulum);
  const auto d = generate_dataset(spec, Split::Validation, 23, 5);
  const auto m = kt::random_model(kt::reduced_architecture(SystemKind::Pendulum), spec.dt, 5);
  const LossWeights w = preset("pendulum").weights;
  const auto whole = evaluate_dataset(m, d, w, 0);
  std::vector<std::size_t> all(d.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  expect_breakdown_near(whole, compute_loss(m, make_batch(d, all), w), 1e-12);
  for (std::size_t chunk : {1u, 4u, 7u, 23u, 100u})
    expect_breakdown_near(evaluate_dataset(m, d, w, chunk), whole, 1e-12,
                          "chunk " + std::to_string(chunk));
}

TEST(EvaluateDataset, EmptyDatasetIsAnError) {
  Dataset d;
  d.system = SystemSpec::make(SystemKind::Pendulum);
  const auto m = kt::random_model(kt::reduced_architecture(SystemKind::Pendulum), 0.02, 5);
  EXPECT_THROW(evaluate_dataset(m, d, LossWeights{}), ConfigError);
}

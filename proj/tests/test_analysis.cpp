#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "koopnet/analysis.hpp"
#include "koopnet/error.hpp"
#include "koopnet/training.hpp"
#include "support/fixtures.hpp"

using namespace koopnet;
namespace kt = koopnet::testing;

namespace {

Mlp identity_net(Index n) {
  return Mlp({DenseLayer{Matrix::Identity(n, n), Vector::Zero(n), Activation::Linear}});
}

void set_constant(Mlp& net, const Vector& values) {
  DenseLayer& last = net.layer(net.depth() - 1);
  last.weight.setZero();
  last.bias = values;
}

// Identity encoder/decoder over one complex pair with constant (mu, omega).
KoopmanModel rotation_model(double mu, double omega, double dt) {
  ModelArchitecture a;
  a.state_dim = 2;
  a.spectrum = {1, 0};
  a.aux_hidden = {3};
  auto m = make_model(a, dt, 1, "pendulum");
  m.encoder = identity_net(2);
  m.decoder = identity_net(2);
  Vector v(2);
  v << mu, omega;
  set_constant(m.aux_pairs[0], v);
  return m;
}

Trajectory circle(double radius, double omega, double dt, int length) {
  Trajectory t;
  t.dt = dt;
  t.states.resize(length, 2);
  for (int k = 0; k < length; ++k) {
    t.states(k, 0) = radius * std::cos(omega * k * dt);
    t.states(k, 1) = radius * std::sin(omega * k * dt);
  }
  return t;
}

}  // namespace

TEST(Grid, PointsAreLexicographic) {
  GridSpec g{{{0, 1, 2}, {-1, 1, 3}}};
  EXPECT_EQ(g.point_count(), 6u);
  const Matrix p = g.points();
  Matrix expected(6, 2);
  expected << 0, -1, 0, 0, 0, 1, 1, -1, 1, 0, 1, 1;
  EXPECT_EQ(p, expected);
}

TEST(Grid, ParseAndPrint) {
  const auto g = GridSpec::parse("-0.5:0.5:100,-2:2:7");
  ASSERT_EQ(g.axes.size(), 2u);
  EXPECT_EQ(g.axes[0].min, -0.5);
  EXPECT_EQ(g.axes[1].resolution, 7);
  EXPECT_EQ(GridSpec::parse(g.to_string()).to_string(), g.to_string());
  for (const char* bad : {"", "1:2", "2:1:5", "0:1:1", "a:b:c", "0:1:5,", "0:1:2.5"})
    EXPECT_THROW(GridSpec::parse(bad), DomainError) << bad;
}

TEST(Grid, DefaultDomains) {
  const auto ds = default_state_grid(SystemKind::DiscreteSpectrum);
  EXPECT_EQ(ds.grid.axes[0].min, -0.5);
  EXPECT_EQ(ds.grid.axes[0].max, 0.5);
  EXPECT_EQ(ds.grid.axes[0].resolution, 100);
  const auto p = default_state_grid(SystemKind::Pendulum);
  EXPECT_EQ(p.grid.axes[0].min, -3.1);
  EXPECT_EQ(p.grid.axes[1].max, 2.0);
}

TEST(Grid, PendulumMaskMatchesAnIndependentCount) {
  const int res = 60;
  const auto sg = default_state_grid(SystemKind::Pendulum, res);
  const auto m = kt::random_model(kt::reduced_architecture(SystemKind::Pendulum), 0.02, 1);
  const Table t = eigenfunction_grid(m, sg);
  Index expected = 0;
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      const double x1 = -3.1 + 6.2 * i / (res - 1), x2 = -2.0 + 4.0 * j / (res - 1);
      expected += 0.5 * x2 * x2 - std::cos(x1) < 0.99;
    }
  EXPECT_EQ(t.rows.rows(), expected);
  EXPECT_LT(expected, res * res);
}

TEST(EigenfunctionGrid, IdentityEncoderAndMagnitudePhase) {
  const auto m = rotation_model(0, 0, 0.1);
  StateGrid sg{GridSpec{{{-1, 1, 5}, {-2, 2, 4}}}, {}, {}};
  const Table t = eigenfunction_grid(m, sg);
  ASSERT_EQ(t.rows.rows(), 20);
  EXPECT_EQ(t.columns, (std::vector<std::string>{"x1", "x2", "y1", "y2", "magnitude1", "phase1"}));
  EXPECT_EQ(t.rows.col(0), t.rows.col(2));
  EXPECT_EQ(t.rows.col(1), t.rows.col(3));
  for (Index r = 0; r < t.rows.rows(); ++r) {
    const double mag = t.rows(r, 4), ph = t.rows(r, 5);
    EXPECT_NEAR(mag * std::cos(ph), t.rows(r, 2), 1e-12);
    EXPECT_NEAR(mag * std::sin(ph), t.rows(r, 3), 1e-12);
  }
}

TEST(EigenfunctionGrid, LiftAndDimensionCheck) {
  const auto m = kt::random_model(kt::reduced_architecture(SystemKind::FluidFlowOnAttractor), 0.05, 2);
  const auto sg = default_state_grid(SystemKind::FluidFlowOnAttractor, 11);
  const Table t = eigenfunction_grid(m, sg);
  for (Index r = 0; r < t.rows.rows(); ++r)
    EXPECT_DOUBLE_EQ(t.rows(r, 2), t.rows(r, 0) * t.rows(r, 0) + t.rows(r, 1) * t.rows(r, 1));
  StateGrid flat{GridSpec{{{0, 1, 3}, {0, 1, 3}}}, {}, {}};
  EXPECT_THROW(eigenfunction_grid(m, flat), ShapeError);
}

TEST(EigenvalueField, ZeroAuxGivesZeroField) {
  const auto m = rotation_model(0, 0, 0.1);
  const Table t = eigenvalue_field(m, GridSpec{{{-1, 1, 4}, {-1, 1, 4}}});
  EXPECT_EQ(t.columns, (std::vector<std::string>{"y1", "y2", "mu1", "omega1"}));
  EXPECT_EQ(t.rows.rightCols(2).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(eigenvalue_field(m, GridSpec{{{-1, 1, 4}}}), ShapeError);
}

TEST(EigenvalueField, MatchesEigenvaluesAt) {
  const auto m = kt::random_model(kt::reduced_architecture(SystemKind::FluidFlowOffAttractor), 0.01, 3);
  const Table t = eigenvalue_field(m, GridSpec{{{-1, 1, 3}, {-1, 1, 3}, {0, 2, 3}}});
  ASSERT_EQ(t.rows.cols(), 6);
  for (Index r = 0; r < t.rows.rows(); ++r) {
    const auto e = eigenvalues_at(m, t.rows.row(r).head(3).transpose());
    EXPECT_EQ(t.rows(r, 3), e.pairs[0].mu);
    EXPECT_EQ(t.rows(r, 4), e.pairs[0].omega);
    EXPECT_EQ(t.rows(r, 5), e.reals[0]);
  }
}

TEST(LatentGrid, CoversTheEncodings) {
  const auto m = kt::random_model(kt::reduced_architecture(SystemKind::DiscreteSpectrum), 0.02, 4);
  const auto d = generate_dataset(SystemSpec::make(SystemKind::DiscreteSpectrum), Split::Test, 5, 1);
  const Matrix y = encode(m, d.trajectories[0].states);
  const auto g = latent_grid_for(m, d.trajectories[0].states, 10);
  ASSERT_EQ(g.axes.size(), 2u);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(g.axes[i].min, -g.axes[i].max);
    EXPECT_GE(g.axes[i].max, y.col(i).cwiseAbs().maxCoeff());
  }
}

TEST(Horizon, ExactOracleReachesTheEnd) {
  const auto spec = SystemSpec::make(SystemKind::DiscreteSpectrum);
  const auto traj = integrate(spec, Vector::Constant(2, 0.3));
  const Predictor exact = [&](const Vector& x0, int m) {
    Matrix out(m, 2);
    for (int k = 1; k <= m; ++k) out.row(k - 1) = closed_form_discrete(x0, k * spec.dt).transpose();
    return out;
  };
  EXPECT_EQ(prediction_horizon(exact, traj), spec.traj_len - 1);
}

TEST(Horizon, ZeroPredictorFailsImmediately) {
  const auto traj = circle(1.0, 1.0, 0.1, 20);
  const Predictor zero = [](const Vector& x0, int m) { return Matrix(Matrix::Zero(m, x0.size())); };
  EXPECT_EQ(prediction_horizon(zero, traj), 0);
  EXPECT_THROW(prediction_horizon(zero, traj, 0.0), DomainError);
}

TEST(Horizon, MonotoneInThreshold) {
  const auto spec = SystemSpec::make(SystemKind::Pendulum);
  const auto d = generate_dataset(spec, Split::Test, 10, 2);
  const auto m = kt::random_model(kt::reduced_architecture(SystemKind::Pendulum), spec.dt, 2);
  for (const auto& t : d.trajectories) {
    int prev = 0;
    for (double th : {0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 100.0}) {
      const int h = prediction_horizon(m, t, th);
      EXPECT_GE(h, prev);
      EXPECT_LE(h, spec.traj_len - 1);
      prev = h;
    }
  }
}

TEST(Horizon, ExactModelOnItsOwnCircle) {
  const double omega = 1.3, dt = 0.1;
  const auto m = rotation_model(0.0, omega, dt);
  EXPECT_EQ(prediction_horizon(m, circle(0.7, omega, dt, 40)), 39);
  // Zero-norm states fall back to the absolute floor.
  Trajectory still;
  still.dt = dt;
  still.states = Matrix::Zero(5, 2);
  EXPECT_EQ(prediction_horizon(rotation_model(0, 0, dt), still), 4);
}

TEST(Horizon, DivergentModelGivesZero) {
  const auto m = rotation_model(1e5, 0, 1.0);
  EXPECT_EQ(prediction_horizon(m, circle(1.0, 0.0, 1.0, 6)), 0);
}

TEST(Linearity, ExactDynamicsGiveZeroResiduals) {
  const double omega = -0.8, mu = -0.1, dt = 0.05;
  const auto m = rotation_model(mu, omega, dt);
  Trajectory t;
  t.dt = dt;
  t.states.resize(30, 2);
  t.states.row(0) << 0.6, -0.2;
  const auto roll = latent_rollout(m, t.states.row(0).transpose(), 29);
  for (int k = 1; k < 30; ++k) t.states.row(k) = roll[k - 1].transpose();
  const auto diag = linearity_diagnostic(m, t);
  ASSERT_EQ(diag.residuals.size(), 29u);
  for (double r : diag.residuals) EXPECT_LT(r, 1e-15);
}

TEST(Linearity, RotationHasConstantRadius) {
  const auto m = rotation_model(0.0, 2.0, 0.1);
  const auto diag = linearity_diagnostic(m, circle(0.9, 2.0, 0.1, 50));
  ASSERT_EQ(diag.radius.size(), 50u);
  for (double r : diag.radius) EXPECT_NEAR(r, 0.9, 1e-14);
  EXPECT_LT(diag.radius_cv(), 1e-13);
}

TEST(PredictionTable, Layout) {
  const auto m = rotation_model(0, 0, 0.1);
  const std::vector<Trajectory> trajs = {circle(1, 1, 0.1, 4), circle(2, 1, 0.1, 4)};
  const Table t = prediction_table(m, trajs);
  EXPECT_EQ(t.columns, (std::vector<std::string>{"trajectory", "step", "x1", "x2", "x_hat1", "x_hat2"}));
  ASSERT_EQ(t.rows.rows(), 8);
  EXPECT_EQ(t.rows(5, 0), 1.0);
  EXPECT_EQ(t.rows(5, 1), 1.0);
  // Identity model with K = I predicts the first state throughout.
  EXPECT_EQ(t.rows(7, 4), 2.0);
  EXPECT_EQ(t.rows(7, 5), 0.0);
}

TEST(SplitErrors, FixedPointIsZeroAndSystemsMustMatch) {
  auto m = rotation_model(0, 0, 0.1);
  m.system = "discrete_spectrum";
  Dataset d;
  d.system = SystemSpec::make(SystemKind::DiscreteSpectrum);
  d.split = Split::Validation;
  for (int i = 0; i < 3; ++i) {
    Trajectory t;
    t.dt = 0.02;
    t.states = Matrix::Constant(51, 2, 0.1 * i);
    d.trajectories.push_back(t);
  }
  const auto e = split_errors(m, {&d}, LossWeights{0.1, 1e-7, 0.0, 30});
  EXPECT_EQ(e.at(Split::Validation).total, 0.0);
  m.system = "pendulum";
  EXPECT_THROW(split_errors(m, {&d}, LossWeights{}), ConfigError);
}

TEST(SplitErrors, Deterministic) {
  const auto spec = SystemSpec::make(SystemKind::Pendulum);
  const auto d = generate_dataset(spec, Split::Train, 12, 3);
  const auto m = kt::random_model(kt::reduced_architecture(SystemKind::Pendulum), spec.dt, 3);
  const auto w = preset("pendulum").weights;
  EXPECT_EQ(split_errors(m, {&d}, w, 5).at(Split::Train).total,
            split_errors(m, {&d}, w, 5).at(Split::Train).total);
}

TEST(Stats, RanksSpearmanMedian) {
  EXPECT_EQ(ranks({10, 30, 20, 20}), (std::vector<double>{1, 4, 2.5, 2.5}));
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {4, 1, -2, -8}), -1.0);
  // Hand-computed: ranks (1,2,3,4,5) vs (2,1,4,3,5), sum d^2 = 4, rho = 1 - 6*4/120.
  EXPECT_NEAR(spearman({1, 2, 3, 4, 5}, {2, 1, 4, 3, 5}), 0.8, 1e-15);
  EXPECT_THROW(spearman({1}, {1}), DomainError);
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
}

TEST(Table, Csv) {
  Table t{{"a", "b"}, Matrix(2, 2)};
  t.rows << 0.1, -2, 3, 1e-300;
  EXPECT_EQ(t.to_csv(), "a,b\n0.1,-2\n3,1e-300\n");
}

TEST(EvalReport, JsonShape) {
  const auto spec = SystemSpec::make(SystemKind::Pendulum);
  const auto train = generate_dataset(spec, Split::Train, 6, 5);
  const auto test = generate_dataset(spec, Split::Test, 6, 5);
  auto m = kt::random_model(kt::reduced_architecture(SystemKind::Pendulum), spec.dt, 5);
  m.system = "pendulum";
  const auto report = evaluate_model(m, {&train, &test}, preset("pendulum").weights);
  const auto j = report.to_json();
  EXPECT_TRUE(j.at("errors").contains("train"));
  EXPECT_TRUE(j.at("errors").contains("test"));
  EXPECT_EQ(j.at("prediction_horizon").at("per_trajectory").size(), 6u);
  EXPECT_TRUE(j.at("eigenvalues").contains("omega1"));
  for (int h : report.horizons) {
    EXPECT_GE(h, 0);
    EXPECT_LE(h, 50);
  }
}

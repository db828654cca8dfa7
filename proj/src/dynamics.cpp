#include "koopnet/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "koopnet/error.hpp"

namespace koopnet {

std::string_view to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::DiscreteSpectrum: return "discrete_spectrum";
    case SystemKind::Pendulum: return "pendulum";
    case SystemKind::FluidFlowOnAttractor: return "fluid1";
    case SystemKind::FluidFlowOffAttractor: return "fluid2";
  }
  return "unknown";
}

SystemKind system_kind_from_string(std::string_view name) {
  if (name == "discrete_spectrum") return SystemKind::DiscreteSpectrum;
  if (name == "pendulum") return SystemKind::Pendulum;
  if (name == "fluid1") return SystemKind::FluidFlowOnAttractor;
  if (name == "fluid2") return SystemKind::FluidFlowOffAttractor;
  throw DomainError("unknown system '" + std::string(name) + "'");
}

SystemSpec SystemSpec::make(SystemKind kind) {
  SystemSpec s;
  s.kind = kind;
  switch (kind) {
    case SystemKind::DiscreteSpectrum:
      s.params.mu = -0.05;
      s.params.lambda = -1.0;
      s.dt = 0.02;
      s.traj_len = 51;
      s.state_dim = 2;
      break;
    case SystemKind::Pendulum:
      s.dt = 0.02;
      s.traj_len = 51;
      s.state_dim = 2;
      break;
    case SystemKind::FluidFlowOnAttractor:
    case SystemKind::FluidFlowOffAttractor:
      s.params.mu = 0.1;
      s.params.omega = 1.0;
      s.params.a = -0.1;
      s.params.lambda = 10.0;
      s.state_dim = 3;
      if (kind == SystemKind::FluidFlowOnAttractor) {
        s.dt = 0.05;
        s.traj_len = 121;
      } else {
        s.dt = 0.01;
        s.traj_len = 101;
      }
      break;
  }
  return s;
}

double slow_manifold_coefficient(double mu, double lambda) { return -lambda / (2.0 * mu - lambda); }

namespace {

void rhs_into(const SystemSpec& sys, const Vector& x, Vector& dx) {
  const SystemParams& p = sys.params;
  switch (sys.kind) {
    case SystemKind::DiscreteSpectrum:
      dx[0] = p.mu * x[0];
      dx[1] = p.lambda * (x[1] - x[0] * x[0]);
      break;
    case SystemKind::Pendulum:
      dx[0] = x[1];
      dx[1] = -std::sin(x[0]);
      break;
    case SystemKind::FluidFlowOnAttractor:
    case SystemKind::FluidFlowOffAttractor:
      dx[0] = p.mu * x[0] - p.omega * x[1] + p.a * x[0] * x[2];
      dx[1] = p.omega * x[0] + p.mu * x[1] + p.a * x[1] * x[2];
      dx[2] = -p.lambda * (x[2] - x[0] * x[0] - x[1] * x[1]);
      break;
  }
}

void check_state(const SystemSpec& sys, const Vector& x) {
  if (x.size() != sys.state_dim)
    throw ShapeError("state has " + std::to_string(x.size()) + " entries, system " + sys.name() +
                     " expects " + std::to_string(sys.state_dim));
}

}  // namespace

Vector rhs(const SystemSpec& system, const Vector& x) {
  check_state(system, x);
  if (!x.allFinite()) throw DomainError("rhs: non-finite state");
  Vector dx(system.state_dim);
  rhs_into(system, x, dx);
  return dx;
}

Trajectory integrate(const SystemSpec& system, const Vector& x0, int substeps, int length) {
  check_state(system, x0);
  if (!x0.allFinite()) throw DomainError("integrate: non-finite initial condition");
  if (substeps < 1) throw DomainError("integrate: substeps must be positive");
  const int n = length > 0 ? length : system.traj_len;

  Trajectory traj;
  traj.dt = system.dt;
  traj.states.resize(n, system.state_dim);
  traj.states.row(0) = x0.transpose();

  const double h = system.dt / substeps;
  const int dim = system.state_dim;
  Vector x = x0, k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
  for (int i = 1; i < n; ++i) {
    for (int s = 0; s < substeps; ++s) {
      rhs_into(system, x, k1);
      tmp = x + 0.5 * h * k1;
      rhs_into(system, tmp, k2);
      tmp = x + 0.5 * h * k2;
      rhs_into(system, tmp, k3);
      tmp = x + h * k3;
      rhs_into(system, tmp, k4);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!x.allFinite())
      throw IntegrationError("integration blew up at snapshot " + std::to_string(i));
    traj.states.row(i) = x.transpose();
  }
  return traj;
}

Vector closed_form_discrete(const Vector& x0, double t, double mu, double lambda) {
  if (x0.size() != 2) throw ShapeError("closed_form_discrete expects a 2-state");
  const double b = slow_manifold_coefficient(mu, lambda);
  const double q = b * x0[0] * x0[0];
  Vector x(2);
  x[0] = x0[0] * std::exp(mu * t);
  x[1] = (x0[1] - q) * std::exp(lambda * t) + q * std::exp(2.0 * mu * t);
  return x;
}

double pendulum_energy(const Vector& x) {
  if (x.size() != 2) throw ShapeError("pendulum_energy expects a 2-state");
  return 0.5 * x[1] * x[1] - std::cos(x[0]);
}

bool pendulum_ic_accepted(const Vector& x) { return pendulum_energy(x) < kPendulumEnergyCap; }

Vector sample_ic(const SystemSpec& system, Rng& rng) {
  Vector x(system.state_dim);
  switch (system.kind) {
    case SystemKind::DiscreteSpectrum:
      x[0] = rng.uniform(-0.5, 0.5);
      x[1] = rng.uniform(-0.5, 0.5);
      return x;
    case SystemKind::Pendulum:
      for (std::int64_t tries = 0; tries < kMaxResamples; ++tries) {
        x[0] = rng.uniform(-3.1, 3.1);
        x[1] = rng.uniform(-2.0, 2.0);
        if (pendulum_ic_accepted(x)) return x;
      }
      throw SamplingError("pendulum sampler exceeded the resample cap");
    case SystemKind::FluidFlowOnAttractor: {
      const double r = rng.uniform(0.0, 1.1);
      const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
      x[0] = r * std::cos(theta);
      x[1] = r * std::sin(theta);
      x[2] = x[0] * x[0] + x[1] * x[1];
      return x;
    }
    case SystemKind::FluidFlowOffAttractor:
      x[0] = rng.uniform(-1.1, 1.1);
      x[1] = rng.uniform(-1.1, 1.1);
      x[2] = rng.uniform(0.0, 2.42);
      return x;
  }
  throw DomainError("sample_ic: unknown system");
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "unknown";
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "validation" || name == "val") return Split::Validation;
  if (name == "test") return Split::Test;
  throw DomainError("unknown split '" + std::string(name) + "'");
}

Dataset generate_dataset(const SystemSpec& system, Split split, int n_traj, std::uint64_t seed) {
  if (n_traj <= 0) throw DomainError("generate_dataset: n_traj must be positive");
  Dataset ds;
  ds.system = system;
  ds.split = split;
  ds.seed = seed;
  ds.trajectories.reserve(n_traj);

  const std::uint64_t split_seed = Rng::derive(seed, static_cast<std::uint64_t>(split));
  for (int i = 0; i < n_traj; ++i) {
    Rng rng(Rng::derive(split_seed, static_cast<std::uint64_t>(i)));
    for (std::int64_t tries = 0;; ++tries) {
      if (tries >= kMaxResamples)
        throw SamplingError("trajectory " + std::to_string(i) + " exceeded the resample cap");
      Trajectory traj = integrate(system, sample_ic(system, rng));
      if (system.kind == SystemKind::FluidFlowOffAttractor &&
          traj.states.col(2).maxCoeff() > kFluidX3Cap)
        continue;
      ds.trajectories.push_back(std::move(traj));
      break;
    }
  }
  return ds;
}

std::vector<Vector> evenly_spaced_initial_conditions(const SystemSpec& system, int count) {
  if (count <= 0) throw DomainError("count must be positive");
  std::vector<Vector> out;
  for (int i = 1; i <= count; ++i) {
    const double f = static_cast<double>(i) / count;
    Vector x(system.state_dim);
    switch (system.kind) {
      case SystemKind::DiscreteSpectrum:
        x << -0.5 + f, 0.5 - f;  // anti-diagonal of the sampling box
        break;
      case SystemKind::Pendulum:
        // Released at rest; the largest amplitude keeps the energy under the cap.
        x << f * 3.0, 0.0;
        break;
      case SystemKind::FluidFlowOnAttractor: {
        const double r = 1.1 * f;
        x << r, 0.0, r * r;
        break;
      }
      case SystemKind::FluidFlowOffAttractor:
        x << 1.1 * f, 0.0, 2.42 * (1.0 - f);
        break;
    }
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace koopnet

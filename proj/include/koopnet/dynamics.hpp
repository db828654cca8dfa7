#pragma once

// Benchmark ODE systems, a fixed-step RK4 integrator, initial-condition
// samplers and trajectory datasets.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "koopnet/nnet.hpp"
#include "koopnet/rng.hpp"

namespace koopnet {

enum class SystemKind { DiscreteSpectrum, Pendulum, FluidFlowOnAttractor, FluidFlowOffAttractor };

/// Short names used in files and on the command line:
/// discrete_spectrum, pendulum, fluid1 (on attractor), fluid2 (off attractor).
std::string_view to_string(SystemKind kind);
SystemKind system_kind_from_string(std::string_view name);

struct SystemParams {
  // Discrete spectrum: x1' = mu x1, x2' = lambda (x2 - x1^2).
  // Fluid flow: x1' = mu x1 - omega x2 + a x1 x3, x2' = omega x1 + mu x2 + a x2 x3,
  //             x3' = -lambda (x3 - x1^2 - x2^2).
  double mu = 0.0;
  double lambda = 0.0;
  double omega = 0.0;
  double a = 0.0;
};

struct SystemSpec {
  SystemKind kind = SystemKind::DiscreteSpectrum;
  SystemParams params;
  double dt = 0.0;
  int traj_len = 0;
  int state_dim = 0;

  /// Benchmark constants, sampling interval and trajectory length.
  static SystemSpec make(SystemKind kind);
  std::string name() const { return std::string(to_string(kind)); }
};

/// Slow-manifold coefficient b = -lambda / (2 mu - lambda) of the discrete
/// spectrum system; y1 = x1 and y2 = x2 - b x1^2 are exact eigenfunctions.
double slow_manifold_coefficient(double mu, double lambda);

Vector rhs(const SystemSpec& system, const Vector& x);

struct Trajectory {
  Matrix states;  // traj_len x state_dim
  double dt = 0.0;
};

/// Classic RK4 with `substeps` internal steps per output interval.
inline constexpr int kDefaultSubsteps = 10;

/// `length` snapshots (default system.traj_len) spaced system.dt apart,
/// starting at x0.
Trajectory integrate(const SystemSpec& system, const Vector& x0, int substeps = kDefaultSubsteps,
                     int length = 0);

/// Exact solution of the discrete spectrum system.
Vector closed_form_discrete(const Vector& x0, double t, double mu = -0.05, double lambda = -1.0);

/// Pendulum Hamiltonian 0.5 x2^2 - cos(x1).
double pendulum_energy(const Vector& x);

/// Pendulum initial conditions must satisfy pendulum_energy(x) < this.
inline constexpr double kPendulumEnergyCap = 0.99;
/// Fluid flow (off attractor) trajectories with x3 above this are discarded.
inline constexpr double kFluidX3Cap = 2.5;
/// Hard cap on resamples in any rejection loop.
inline constexpr std::int64_t kMaxResamples = 1'000'000;

/// Draws an initial condition from the system's training domain.
Vector sample_ic(const SystemSpec& system, Rng& rng);

/// Whether a pendulum candidate passes the energy rule.
bool pendulum_ic_accepted(const Vector& x);

enum class Split { Train, Validation, Test };
std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

struct Dataset {
  SystemSpec system;
  Split split = Split::Train;
  std::vector<Trajectory> trajectories;
  std::uint64_t seed = 0;

  std::size_t size() const { return trajectories.size(); }
};

/// n_traj accepted trajectories. Trajectory i draws from its own stream
/// derived from (seed, split, i), so the result does not depend on order.
Dataset generate_dataset(const SystemSpec& system, Split split, int n_traj, std::uint64_t seed);

/// `count` initial conditions spread evenly across the system's domain
/// (pendulum: rest positions of increasing amplitude).
std::vector<Vector> evenly_spaced_initial_conditions(const SystemSpec& system, int count);

// On-disk layout: a directory holding meta.json and data.csv (no header,
// n_traj * traj_len rows, trajectory-major, one snapshot per row).
inline constexpr int kDatasetFormatVersion = 1;
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace koopnet

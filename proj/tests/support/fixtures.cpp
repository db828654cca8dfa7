#include "fixtures.hpp"

#include "koopnet/error.hpp"
#include "koopnet/training.hpp"
#include "oracle.hpp"

namespace koopnet::testing {

ModelArchitecture reduced_architecture(SystemKind kind) {
  ModelArchitecture a;
  a.state_dim = SystemSpec::make(kind).state_dim;
  a.spectrum = SpectrumConfig::for_system(kind);
  switch (kind) {
    case SystemKind::DiscreteSpectrum:
      a.encoder_hidden = {6, 6};
      a.aux_hidden = {4, 4, 4};
      break;
    case SystemKind::Pendulum:
      a.encoder_hidden = {8, 8};
      a.aux_hidden = {10};
      break;
    case SystemKind::FluidFlowOnAttractor:
      a.encoder_hidden = {9};
      a.aux_hidden = {12};
      break;
    case SystemKind::FluidFlowOffAttractor:
      a.encoder_hidden = {10};
      a.aux_hidden = {4, 4};
      break;
  }
  return a;
}

namespace {

void jitter_biases(Mlp& mlp, Rng& rng, double scale) {
  for (std::size_t k = 0; k < mlp.depth(); ++k) {
    DenseLayer& l = mlp.layer(k);
    for (Index i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-scale, scale);
  }
}

}  // namespace

KoopmanModel random_model(const ModelArchitecture& arch, double dt, std::uint64_t seed,
                          double bias_scale) {
  KoopmanModel m = make_model(arch, dt, seed);
  Rng rng(Rng::derive(seed, 99));
  jitter_biases(m.encoder, rng, bias_scale);
  jitter_biases(m.decoder, rng, bias_scale);
  for (auto& a : m.aux_pairs) jitter_biases(a, rng, bias_scale);
  for (auto& a : m.aux_reals) jitter_biases(a, rng, bias_scale);
  return m;
}

std::vector<Trajectory> system_trajectories(SystemKind kind, int count, int length,
                                            std::uint64_t seed) {
  const SystemSpec sys = SystemSpec::make(kind);
  Dataset ds = generate_dataset(sys, Split::Train, count, seed);
  for (auto& t : ds.trajectories) t.states.conservativeResize(length, Eigen::NoChange);
  return ds.trajectories;
}

std::vector<Trajectory> random_trajectories(int count, int length, int dim, std::uint64_t seed,
                                            double dt) {
  Rng rng(seed);
  std::vector<Trajectory> out;
  for (int i = 0; i < count; ++i) {
    Trajectory t;
    t.dt = dt;
    t.states.resize(length, dim);
    for (Index r = 0; r < length; ++r)
      for (Index c = 0; c < dim; ++c) t.states(r, c) = rng.uniform(-1.0, 1.0);
    out.push_back(std::move(t));
  }
  return out;
}

GradientCheck check_gradient(const KoopmanModel& model, const std::vector<Trajectory>& trajs,
                             const LossWeights& w, LossTerms terms, double step) {
  const TrajectoryBatch batch = make_batch(trajs);
  const Vector params = pack_parameters(model);
  const LossAndGradient lg = compute_gradients(model, batch, w, terms);
  const Vector analytic = pack_gradients(lg.grads, params.size());
  KoopmanModel probe = model;
  const Objective loss = [&](const Vector& p) {
    unpack_parameters(probe, p);
    return compute_loss(probe, batch, w, terms).total;
  };
  return finite_diff_check(loss, params, analytic, step);
}

KoopmanModel tiny_model(std::uint64_t seed, int state_dim, int pairs, int reals) {
  ModelArchitecture a;
  a.state_dim = state_dim;
  a.spectrum = {pairs, reals};
  a.encoder_hidden = {5};
  a.aux_hidden = {4};
  return random_model(a, 0.1, seed, 0.2);
}

GradientCase gradient_case(SystemKind kind, std::uint64_t seed) {
  GradientCase c;
  c.weights = preset(std::string(to_string(kind))).weights;
  c.weights.prediction_steps = 5;
  const double dt = SystemSpec::make(kind).dt;
  for (std::uint64_t draw = 0; draw < 100; ++draw) {
    const std::uint64_t s = Rng::derive(seed, draw);
    c.model = random_model(reduced_architecture(kind), dt, s);
    c.trajectories = system_trajectories(kind, 4, 8, Rng::derive(s, 1));
    c.draws = static_cast<int>(draw) + 1;
    if (oracle::kink_margin(c.model, c.trajectories, c.weights) > kKinkMargin) return c;
  }
  throw Error("no kink-free gradient sample found");
}

}  // namespace koopnet::testing

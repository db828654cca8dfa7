#include "koopnet/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "koopnet/error.hpp"
#include "koopnet/rng.hpp"

namespace koopnet {

void TrainConfig::validate(std::size_t n_train) const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (static_cast<std::size_t>(batch_size) > n_train)
    throw ConfigError("batch_size " + std::to_string(batch_size) + " exceeds the " +
                      std::to_string(n_train) + " training trajectories");
  if (max_steps < 0 || pretrain_steps < 0) throw ConfigError("step counts must be non-negative");
  if (validation_interval < 1) throw ConfigError("validation_interval must be positive");
  if (max_retries < 0) throw ConfigError("max_retries must be non-negative");
}

namespace {

// Epoch-wise shuffled batches of trajectory indices; the tail that does not
// fill a batch is dropped each epoch.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch, std::uint64_t seed)
      : order_(n), batch_(batch), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    shuffle(order_, rng_);
  }

  std::span<const std::size_t> next() {
    if (pos_ + batch_ > order_.size()) {
      shuffle(order_, rng_);
      pos_ = 0;
    }
    std::span<const std::size_t> out(order_.data() + pos_, batch_);
    pos_ += batch_;
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t pos_ = 0;
  Rng rng_;
};

constexpr std::uint64_t kPretrainStream = 1;
constexpr std::uint64_t kTrainStream = 2;

}  // namespace

KoopmanModel pretrain(KoopmanModel model, const Dataset& train_set, const TrainConfig& config,
                      const LossWeights& weights) {
  if (config.pretrain_steps <= 0) return model;
  config.validate(train_set.size());
  BatchSampler sampler(train_set.size(), config.batch_size,
                       Rng::derive(config.seed, kPretrainStream));
  Vector params = pack_parameters(model);
  AdamState adam(params.size());
  for (std::int64_t step = 1; step <= config.pretrain_steps; ++step) {
    const TrajectoryBatch batch = make_batch(train_set, sampler.next());
    LossAndGradient lg;
    try {
      lg = compute_gradients(model, batch, weights, LossTerms::Autoencoder);
      adam_step(params, pack_gradients(lg.grads, params.size()), adam, config.learning_rate);
    } catch (const DivergenceError& e) {
      throw DivergenceError("pretraining diverged at step " + std::to_string(step) + ": " +
                            e.what());
    }
    unpack_parameters(model, params);
  }
  return model;
}

TrainResult train(KoopmanModel model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config, const LossWeights& weights, const Dataset* test_set,
                  const ProgressFn& progress) {
  const auto started = std::chrono::steady_clock::now();
  config.validate(train_set.size());
  if (train_set.system.kind != val_set.system.kind)
    throw ConfigError("training and validation data come from different systems");
  const std::size_t chunk = static_cast<std::size_t>(config.batch_size);

  TrainResult result;
  TrainReport& report = result.report;
  KoopmanModel best = model;
  double best_loss = evaluate_dataset(model, val_set, weights, chunk).total;
  report.validation.push_back({0, best_loss});
  report.best_step = 0;
  const bool stop_now = progress && !progress(0, std::nan(""), best_loss);

  BatchSampler sampler(train_set.size(), config.batch_size, Rng::derive(config.seed, kTrainStream));
  Vector params = pack_parameters(model);
  AdamState adam(params.size());
  if (config.record_train_trace) report.train_loss.reserve(static_cast<std::size_t>(config.max_steps));

  double last_train = std::nan("");
  for (std::int64_t step = 1; !stop_now && step <= config.max_steps; ++step) {
    const TrajectoryBatch batch = make_batch(train_set, sampler.next());
    try {
      const LossAndGradient lg = compute_gradients(model, batch, weights);
      adam_step(params, pack_gradients(lg.grads, params.size()), adam, config.learning_rate);
      last_train = lg.loss.total;
    } catch (const DivergenceError& e) {
      if (report.retries >= config.max_retries)
        throw DivergenceError("training diverged at step " + std::to_string(step) + " after " +
                              std::to_string(report.retries) + " retries: " + e.what());
      ++report.retries;
      model = best;
      params = pack_parameters(model);
      adam = AdamState(params.size());
      continue;
    }
    unpack_parameters(model, params);
    if (config.record_train_trace) report.train_loss.push_back(last_train);

    if (step % config.validation_interval == 0 || step == config.max_steps) {
      const double val = evaluate_dataset(model, val_set, weights, chunk).total;
      report.validation.push_back({step, val});
      if (val < best_loss) {
        best_loss = val;
        best = model;
        report.best_step = step;
        best.training.steps = step;
        best.training.best_validation_loss = val;
        if (!config.checkpoint_path.empty()) save_model(best, config.checkpoint_path);
      }
      if (progress && !progress(step, last_train, val)) break;
    }
  }

  best.training.steps = report.best_step;
  best.training.best_validation_loss = best_loss;
  best.training.seed = config.seed;
  report.best_validation_loss = best_loss;
  report.final_train = evaluate_dataset(best, train_set, weights, chunk);
  report.final_validation = evaluate_dataset(best, val_set, weights, chunk);
  if (test_set) report.final_test = evaluate_dataset(best, *test_set, weights, chunk);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  result.model = std::move(best);
  return result;
}

TrainResult run_experiment(const ExperimentConfig& config, const Dataset& train_set,
                           const Dataset& val_set, const Dataset* test_set,
                           const ProgressFn& progress) {
  if (train_set.system.kind != config.system)
    throw ConfigError("training data system '" + train_set.system.name() +
                      "' does not match the configuration's '" +
                      std::string(to_string(config.system)) + "'");
  ModelArchitecture arch = config.architecture;
  arch.state_dim = train_set.system.state_dim;
  KoopmanModel model =
      make_model(arch, train_set.system.dt, config.train.seed, train_set.system.name());
  model.eigenvalue_source = config.eigenvalue_source;
  model = pretrain(std::move(model), train_set, config.train, config.weights);
  TrainResult result =
      train(std::move(model), train_set, val_set, config.train, config.weights, test_set, progress);
  if (config.canonicalize && result.model.spectrum.complex_pairs > 0) {
    Matrix states(static_cast<Index>(train_set.size()) * train_set.system.traj_len,
                  train_set.system.state_dim);
    Index row = 0;
    for (const auto& t : train_set.trajectories) {
      states.middleRows(row, t.states.rows()) = t.states;
      row += t.states.rows();
    }
    canonicalize_orientation(result.model, states);
  }
  return result;
}

std::vector<ExperimentConfig> sample_candidates(const SearchSpace& space, int budget,
                                                const ExperimentConfig& base) {
  if (budget < 1) throw ConfigError("search budget must be at least 1");
  Rng rng(space.seed);
  auto integer = [&](const Range& r) {
    const auto lo = static_cast<std::int64_t>(std::llround(r.lo));
    const auto hi = static_cast<std::int64_t>(std::llround(r.hi));
    if (hi < lo) throw ConfigError("empty integer range in search space");
    return lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
  };
  auto log_uniform = [&](const Range& r) {
    if (!(r.lo > 0.0) || r.hi < r.lo) throw ConfigError("alpha ranges must be positive");
    return std::exp(rng.uniform(std::log(r.lo), std::log(r.hi)));
  };
  std::vector<ExperimentConfig> out;
  for (int i = 0; i < budget; ++i) {
    ExperimentConfig c = base;
    c.name = base.name + "#" + std::to_string(i);
    const auto enc_depth = integer(space.encoder_depth);
    const auto enc_width = integer(space.encoder_width);
    const auto aux_depth = integer(space.aux_depth);
    const auto aux_width = integer(space.aux_width);
    c.architecture.encoder_hidden.assign(static_cast<std::size_t>(enc_depth), enc_width);
    c.architecture.aux_hidden.assign(static_cast<std::size_t>(aux_depth), aux_width);
    c.weights.alpha1 = log_uniform(space.alpha1);
    c.weights.alpha2 = log_uniform(space.alpha2);
    c.weights.alpha3 = log_uniform(space.alpha3);
    c.train.seed = rng.next_u64() >> 1;
    out.push_back(std::move(c));
  }
  return out;
}

SearchResult random_search(const SearchSpace& space, int budget, const ExperimentConfig& base,
                           const Dataset& train_set, const Dataset& val_set) {
  SearchResult result;
  bool any = false;
  for (auto& cfg : sample_candidates(space, budget, base)) {
    Candidate cand;
    cand.config = cfg;
    try {
      TrainResult tr = run_experiment(cfg, train_set, val_set);
      cand.validation_loss = tr.report.best_validation_loss;
      cand.best_step = tr.report.best_step;
      if (!any || cand.validation_loss < result.candidates[result.best_index].validation_loss) {
        result.best_index = result.candidates.size();
        result.best_model = std::move(tr.model);
        any = true;
      }
    } catch (const Error& e) {
      cand.failed = true;
      cand.error = e.what();
      cand.validation_loss = std::nan("");
    }
    result.candidates.push_back(std::move(cand));
  }
  if (!any) throw Error("random search: every candidate failed");
  return result;
}

}  // namespace koopnet

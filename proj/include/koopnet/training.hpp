#pragma once

// Training protocol: autoencoder pretraining, Adam over batches of whole
// trajectories, validation-based early stopping, and random search.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "koopnet/dynamics.hpp"
#include "koopnet/koopman.hpp"
#include "koopnet/loss.hpp"

namespace koopnet {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 256;  // trajectories per step
  std::int64_t max_steps = 20000;
  std::int64_t pretrain_steps = 0;
  std::int64_t validation_interval = 500;
  std::uint64_t seed = 0;
  std::string checkpoint_path;  // written on each validation improvement when set
  int max_retries = 3;          // restarts from the best checkpoint after divergence
  bool record_train_trace = true;

  void validate(std::size_t n_train) const;
};

struct ValidationPoint {
  std::int64_t step = 0;
  double loss = 0.0;
};

struct TrainReport {
  std::vector<double> train_loss;  // per optimizer step
  std::vector<ValidationPoint> validation;
  std::int64_t best_step = 0;
  double best_validation_loss = 0.0;
  LossBreakdown final_train;
  LossBreakdown final_validation;
  std::optional<LossBreakdown> final_test;
  int retries = 0;
  double wall_seconds = 0.0;
};

/// Called after each validation evaluation; return false to stop early.
using ProgressFn = std::function<bool(std::int64_t step, double train_loss, double val_loss)>;

/// Adam on the autoencoder-only loss for config.pretrain_steps steps.
KoopmanModel pretrain(KoopmanModel model, const Dataset& train_set, const TrainConfig& config,
                      const LossWeights& weights);

struct TrainResult {
  KoopmanModel model;  // the checkpoint with the lowest validation loss
  TrainReport report;
};

TrainResult train(KoopmanModel model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config, const LossWeights& weights,
                  const Dataset* test_set = nullptr, const ProgressFn& progress = {});

/// Architecture, spectrum, loss weights and training settings for one run.
struct ExperimentConfig {
  std::string name;
  SystemKind system = SystemKind::DiscreteSpectrum;
  ModelArchitecture architecture;
  LossWeights weights;
  TrainConfig train;
  EigenvalueSource eigenvalue_source = EigenvalueSource::Predicted;
  int n_train = 0;
  int n_validation = 0;
  int n_test = 0;
  bool canonicalize = true;  // reflect pairs so that learned frequencies are negative
};

inline constexpr int kConfigFormatVersion = 1;

nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& doc);

/// Named presets: discrete_spectrum, pendulum, fluid1, fluid2 carry the full
/// benchmark settings; the *_desk variants shrink data and step budgets.
std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

/// Pretrain (when configured) and train a fresh model built from `config`.
TrainResult run_experiment(const ExperimentConfig& config, const Dataset& train_set,
                           const Dataset& val_set, const Dataset* test_set = nullptr,
                           const ProgressFn& progress = {});

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Declared ranges for random search. Integer ranges are inclusive; the
/// alpha ranges are sampled log-uniformly.
struct SearchSpace {
  Range encoder_depth{1, 2};
  Range encoder_width{20, 80};
  Range aux_depth{1, 2};
  Range aux_width{10, 100};
  Range alpha1{1e-3, 1e-1};
  Range alpha2{1e-10, 1e-7};
  Range alpha3{1e-15, 1e-13};
  std::uint64_t seed = 0;
};

nlohmann::json search_space_to_json(const SearchSpace& space);
SearchSpace search_space_from_json(const nlohmann::json& doc);

struct Candidate {
  ExperimentConfig config;
  bool failed = false;
  std::string error;
  double validation_loss = 0.0;
  std::int64_t best_step = 0;
};

/// The first `budget` candidates of the search sequence for `space`.
std::vector<ExperimentConfig> sample_candidates(const SearchSpace& space, int budget,
                                                const ExperimentConfig& base);

struct SearchResult {
  std::vector<Candidate> candidates;
  std::size_t best_index = 0;
  KoopmanModel best_model;
};

/// Trains every candidate and keeps the one with the lowest validation loss.
/// Throws Error only when every candidate fails.
SearchResult random_search(const SearchSpace& space, int budget, const ExperimentConfig& base,
                           const Dataset& train_set, const Dataset& val_set);

}  // namespace koopnet

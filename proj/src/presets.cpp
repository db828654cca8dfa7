#include <string>

#include "koopnet/error.hpp"
#include "koopnet/training.hpp"

namespace koopnet {

using nlohmann::json;

namespace {

struct PresetRow {
  const char* name;
  SystemKind system;
  std::vector<Index> encoder_hidden;
  std::vector<Index> aux_hidden;
  double alpha1, alpha2, alpha3;
  int batch_size;
  int n_train;
  std::int64_t pretrain_steps;
};

// Benchmark settings: layer counts/widths, loss weights, batch sizes and
// training-set sizes per system. 5000 validation and test trajectories each.
const std::vector<PresetRow>& benchmark_rows() {
  static const std::vector<PresetRow> rows = {
      {"discrete_spectrum", SystemKind::DiscreteSpectrum, {30, 30}, {10, 10, 10}, 0.1, 1e-7, 1e-15,
       256, 5000, 0},
      {"pendulum", SystemKind::Pendulum, {80, 80}, {170}, 0.001, 1e-9, 1e-14, 128, 15000, 2000},
      {"fluid1", SystemKind::FluidFlowOnAttractor, {105}, {300}, 0.1, 1e-7, 1e-13, 256, 15000,
       2000},
      {"fluid2", SystemKind::FluidFlowOffAttractor, {130}, {20, 20}, 0.1, 1e-9, 1e-13, 128, 20000,
       2000},
  };
  return rows;
}

ExperimentConfig from_row(const PresetRow& row) {
  ExperimentConfig c;
  c.name = row.name;
  c.system = row.system;
  c.architecture.state_dim = SystemSpec::make(row.system).state_dim;
  c.architecture.spectrum = SpectrumConfig::for_system(row.system);
  c.architecture.encoder_hidden = row.encoder_hidden;
  c.architecture.aux_hidden = row.aux_hidden;
  c.weights = {row.alpha1, row.alpha2, row.alpha3, 30};
  c.train.learning_rate = 1e-3;
  c.train.batch_size = row.batch_size;
  c.train.max_steps = 1'000'000;
  c.train.pretrain_steps = row.pretrain_steps;
  c.train.validation_interval = 1000;
  c.train.seed = 1;
  c.n_train = row.n_train;
  c.n_validation = 5000;
  c.n_test = 5000;
  return c;
}

// Desk-scale variants: same architecture and loss weights, smaller data and
// step budgets sized for a single CPU core.
ExperimentConfig desk(ExperimentConfig c) {
  c.name += "_desk";
  c.n_validation = 500;
  c.n_test = 500;
  c.train.validation_interval = 500;
  switch (c.system) {
    case SystemKind::DiscreteSpectrum:
      // 2000 + 18000 steps. Which eigenfunction each latent coordinate picks up
      // depends on the initialisation; seed 3 separates the two rates cleanly.
      c.n_train = 1000;
      c.train.pretrain_steps = 2000;
      c.train.max_steps = 18000;
      c.train.seed = 3;
      break;
    case SystemKind::Pendulum:
      // Pretraining alone scales the latent radius up tenfold while the
      // auxiliary net stays at its initialisation; the first full rollout then
      // blows up, so the desk run starts directly on the full loss.
      c.n_train = 2000;
      c.train.pretrain_steps = 0;
      c.train.max_steps = 20000;
      break;
    case SystemKind::FluidFlowOnAttractor:
      c.n_train = 2000;
      c.train.max_steps = 10000;
      break;
    case SystemKind::FluidFlowOffAttractor:
      c.n_train = 2000;
      c.train.max_steps = 10000;
      break;
  }
  return c;
}

std::string source_name(EigenvalueSource s) {
  return s == EigenvalueSource::Predicted ? "predicted" : "encoded";
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& r : benchmark_rows()) names.emplace_back(r.name);
  for (const auto& r : benchmark_rows()) names.push_back(std::string(r.name) + "_desk");
  return names;
}

ExperimentConfig preset(const std::string& name) {
  for (const auto& r : benchmark_rows()) {
    if (name == r.name) return from_row(r);
    if (name == std::string(r.name) + "_desk") return desk(from_row(r));
  }
  throw ConfigError("unknown preset '" + name + "'");
}

json config_to_json(const ExperimentConfig& c) {
  return {
      {"format_version", kConfigFormatVersion},
      {"name", c.name},
      {"system", std::string(to_string(c.system))},
      {"architecture",
       {{"encoder_hidden", c.architecture.encoder_hidden},
        {"aux_hidden", c.architecture.aux_hidden},
        {"complex_pairs", c.architecture.spectrum.complex_pairs},
        {"real_eigs", c.architecture.spectrum.real_eigs}}},
      {"loss",
       {{"alpha1", c.weights.alpha1},
        {"alpha2", c.weights.alpha2},
        {"alpha3", c.weights.alpha3},
        {"prediction_steps", c.weights.prediction_steps}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"batch_size", c.train.batch_size},
        {"max_steps", c.train.max_steps},
        {"pretrain_steps", c.train.pretrain_steps},
        {"validation_interval", c.train.validation_interval},
        {"seed", c.train.seed},
        {"max_retries", c.train.max_retries}}},
      {"data",
       {{"n_train", c.n_train}, {"n_validation", c.n_validation}, {"n_test", c.n_test}}},
      {"eigenvalue_source", source_name(c.eigenvalue_source)},
      {"canonicalize", c.canonicalize},
  };
}

ExperimentConfig config_from_json(const json& doc) {
  try {
    if (doc.value("format_version", kConfigFormatVersion) != kConfigFormatVersion)
      throw ConfigError("unsupported config format version");
    // A config may start from a preset and override individual fields.
    ExperimentConfig c;
    if (doc.contains("preset")) c = preset(doc.at("preset").get<std::string>());
    if (doc.contains("system"))
      c.system = system_kind_from_string(doc.at("system").get<std::string>());
    c.name = doc.value("name", c.name);
    c.architecture.state_dim = SystemSpec::make(c.system).state_dim;
    if (!doc.contains("preset") || doc.contains("system"))
      c.architecture.spectrum = SpectrumConfig::for_system(c.system);
    if (doc.contains("architecture")) {
      const auto& a = doc.at("architecture");
      if (a.contains("encoder_hidden"))
        c.architecture.encoder_hidden = a.at("encoder_hidden").get<std::vector<Index>>();
      if (a.contains("aux_hidden"))
        c.architecture.aux_hidden = a.at("aux_hidden").get<std::vector<Index>>();
      c.architecture.spectrum.complex_pairs =
          a.value("complex_pairs", c.architecture.spectrum.complex_pairs);
      c.architecture.spectrum.real_eigs = a.value("real_eigs", c.architecture.spectrum.real_eigs);
    }
    if (doc.contains("loss")) {
      const auto& l = doc.at("loss");
      c.weights.alpha1 = l.value("alpha1", c.weights.alpha1);
      c.weights.alpha2 = l.value("alpha2", c.weights.alpha2);
      c.weights.alpha3 = l.value("alpha3", c.weights.alpha3);
      c.weights.prediction_steps = l.value("prediction_steps", c.weights.prediction_steps);
    }
    if (doc.contains("train")) {
      const auto& t = doc.at("train");
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.max_steps = t.value("max_steps", c.train.max_steps);
      c.train.pretrain_steps = t.value("pretrain_steps", c.train.pretrain_steps);
      c.train.validation_interval = t.value("validation_interval", c.train.validation_interval);
      c.train.seed = t.value("seed", c.train.seed);
      c.train.max_retries = t.value("max_retries", c.train.max_retries);
    }
    if (doc.contains("data")) {
      const auto& d = doc.at("data");
      c.n_train = d.value("n_train", c.n_train);
      c.n_validation = d.value("n_validation", c.n_validation);
      c.n_test = d.value("n_test", c.n_test);
    }
    const auto src = doc.value("eigenvalue_source", source_name(c.eigenvalue_source));
    if (src == "predicted") {
      c.eigenvalue_source = EigenvalueSource::Predicted;
    } else if (src == "encoded") {
      c.eigenvalue_source = EigenvalueSource::Encoded;
    } else {
      throw ConfigError("eigenvalue_source must be 'predicted' or 'encoded'");
    }
    c.canonicalize = doc.value("canonicalize", c.canonicalize);
    c.architecture.spectrum.validate();
    if (c.weights.alpha1 < 0 || c.weights.alpha2 < 0 || c.weights.alpha3 < 0)
      throw ConfigError("loss weights must be non-negative");
    if (c.weights.prediction_steps < 1) throw ConfigError("prediction_steps must be at least 1");
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ArchitectureError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

json search_space_to_json(const SearchSpace& s) {
  auto range = [](const Range& r) { return json::array({r.lo, r.hi}); };
  return {{"format_version", kConfigFormatVersion},
          {"encoder_depth", range(s.encoder_depth)},
          {"encoder_width", range(s.encoder_width)},
          {"aux_depth", range(s.aux_depth)},
          {"aux_width", range(s.aux_width)},
          {"alpha1", range(s.alpha1)},
          {"alpha2", range(s.alpha2)},
          {"alpha3", range(s.alpha3)},
          {"seed", s.seed}};
}

SearchSpace search_space_from_json(const json& doc) {
  SearchSpace s;
  try {
    auto read = [&](const char* key, Range& r) {
      if (!doc.contains(key)) return;
      const auto v = doc.at(key).get<std::vector<double>>();
      if (v.size() != 2 || v[1] < v[0])
        throw ConfigError(std::string("search space '") + key + "' must be [lo, hi]");
      r = {v[0], v[1]};
    };
    read("encoder_depth", s.encoder_depth);
    read("encoder_width", s.encoder_width);
    read("aux_depth", s.aux_depth);
    read("aux_width", s.aux_width);
    read("alpha1", s.alpha1);
    read("alpha2", s.alpha2);
    read("alpha3", s.alpha3);
    s.seed = doc.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("search space: ") + e.what());
  }
  return s;
}

}  // namespace koopnet

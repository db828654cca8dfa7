#include "cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <algorithm>
#include <iostream>
#include <optional>

#include "koopnet/analysis.hpp"
#include "koopnet/dynamics.hpp"
#include "koopnet/io.hpp"
#include "koopnet/koopman.hpp"
#include "koopnet/training.hpp"

#ifndef KOOPNET_VERSION
#define KOOPNET_VERSION "unknown"
#endif

namespace koopnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void RunManifest::add_input(const fs::path& p) { inputs[p.generic_string()] = hash_file(p); }
void RunManifest::add_output(const fs::path& p) { outputs[p.generic_string()] = hash_file(p); }

json RunManifest::to_json() const {
  return {{"format_version", kManifestFormatVersion},
          {"command", command},
          {"argv", argv},
          {"config", config},
          {"seeds", seeds},
          {"inputs", inputs},
          {"outputs", outputs},
          {"status", status},
          {"error", error},
          {"wall_seconds", wall_seconds},
          {"versions",
           {{"koopnet", KOOPNET_VERSION},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                          "." + std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"compiler", __VERSION__}}}};
}

RunManifest RunManifest::from_json(const json& doc) {
  try {
    if (doc.at("format_version").get<int>() != kManifestFormatVersion)
      throw FormatError("unsupported manifest format version");
    RunManifest m;
    m.command = doc.at("command").get<std::string>();
    m.argv = doc.at("argv").get<std::vector<std::string>>();
    m.config = doc.value("config", json::object());
    m.seeds = doc.value("seeds", std::map<std::string, std::uint64_t>{});
    m.inputs = doc.value("inputs", std::map<std::string, std::string>{});
    m.outputs = doc.value("outputs", std::map<std::string, std::string>{});
    m.status = doc.value("status", std::string("ok"));
    m.error = doc.value("error", std::string());
    m.wall_seconds = doc.value("wall_seconds", 0.0);
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

void RunManifest::write(const fs::path& path) const {
  write_text_atomic(path, to_json().dump(2) + "\n");
}

json report_to_json(const ExperimentConfig& cfg, const TrainReport& r) {
  json val = json::array();
  for (const auto& v : r.validation) val.push_back({v.step, v.loss});
  json doc = {{"format_version", 1},
              {"name", cfg.name},
              {"best_step", r.best_step},
              {"best_validation_loss", r.best_validation_loss},
              {"retries", r.retries},
              {"validation", val},
              {"train_loss", r.train_loss},
              {"final", {{"train", breakdown_to_json(r.final_train)},
                         {"validation", breakdown_to_json(r.final_validation)}}}};
  if (r.final_test) doc["final"]["test"] = breakdown_to_json(*r.final_test);
  return doc;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Dataset load_split(const fs::path& root, Split split) {
  const fs::path dir = root / std::string(to_string(split));
  if (!fs::exists(dir / "meta.json"))
    throw UsageError("dataset split '" + std::string(to_string(split)) + "' not found under " +
                     root.string());
  return load_dataset(dir);
}

std::optional<Dataset> load_optional_split(const fs::path& root, Split split) {
  if (!fs::exists(root / std::string(to_string(split)) / "meta.json")) return std::nullopt;
  return load_split(root, split);
}

void record_split(RunManifest& m, const fs::path& root, Split split) {
  const fs::path dir = root / std::string(to_string(split));
  m.add_input(dir / "meta.json");
  m.add_input(dir / "data.csv");
}

// A config argument is either a JSON file or a preset name.
ExperimentConfig resolve_config(const std::string& arg) {
  if (fs::is_regular_file(arg)) {
    json doc;
    try {
      doc = json::parse(read_text(arg));
    } catch (const json::exception& e) {
      throw UsageError("config " + arg + ": " + e.what());
    }
    return config_from_json(doc);
  }
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), arg) == names.end())
    throw UsageError("config '" + arg + "' is neither a file nor a preset name");
  return preset(arg);
}

KoopmanModel load_model_checked(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw UsageError("model file not found: " + path.string());
  return load_model(path);
}

void require_system(const KoopmanModel& model, const Dataset& ds) {
  if (model.system != ds.system.name())
    throw UsageError("model system '" + model.system + "' does not match the " +
                     std::string(to_string(ds.split)) + " data system '" + ds.system.name() + "'");
}

std::string model_tag(const fs::path& model_path) { return hash_file(model_path).substr(0, 8); }

std::string file_safe(std::string s) {
  for (char& ch : s) {
    if (ch == ':') ch = '~';
    if (ch == ',') ch = '+';
  }
  return s;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string system;
  std::string split;
  int n = 0;
  std::uint64_t seed = 0;
  std::string out;
  bool evenly_spaced = false;
};

int cmd_generate(const GenerateArgs& a, RunManifest& m, std::ostream& out) {
  if (a.n < 1) throw UsageError("--n must be at least 1");
  SystemKind kind;
  Split split;
  try {
    kind = system_kind_from_string(a.system);
    split = split_from_string(a.split);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const SystemSpec sys = SystemSpec::make(kind);
  m.config = {{"system", a.system}, {"split", std::string(to_string(split))}, {"n", a.n},
              {"seed", a.seed},     {"evenly_spaced", a.evenly_spaced}};
  m.seeds["seed"] = a.seed;

  Dataset ds;
  if (a.evenly_spaced) {
    ds.system = sys;
    ds.split = split;
    ds.seed = a.seed;
    for (const Vector& x0 : evenly_spaced_initial_conditions(sys, a.n))
      ds.trajectories.push_back(integrate(sys, x0));
  } else {
    ds = generate_dataset(sys, split, a.n, a.seed);
  }
  const fs::path dir = fs::path(a.out) / std::string(to_string(split));
  save_dataset(ds, dir);
  m.add_output(dir / "meta.json");
  m.add_output(dir / "data.csv");
  out << "wrote " << ds.size() << " trajectories to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> max_steps;
  std::optional<std::int64_t> pretrain_steps;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, RunManifest& m, std::ostream& out) {
  ExperimentConfig cfg = resolve_config(a.config);
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.max_steps) cfg.train.max_steps = *a.max_steps;
  if (a.pretrain_steps) cfg.train.pretrain_steps = *a.pretrain_steps;
  if (fs::is_regular_file(a.config)) m.add_input(a.config);

  const Dataset train_set = load_split(a.data, Split::Train);
  const Dataset val_set = load_split(a.data, Split::Validation);
  const auto test_set = load_optional_split(a.data, Split::Test);
  record_split(m, a.data, Split::Train);
  record_split(m, a.data, Split::Validation);
  if (test_set) record_split(m, a.data, Split::Test);
  if (train_set.system.kind != cfg.system)
    throw UsageError("config is for '" + std::string(to_string(cfg.system)) + "' but the data is '" +
                     train_set.system.name() + "'");
  try {
    cfg.train.validate(train_set.size());
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  m.config = config_to_json(cfg);
  m.seeds["train"] = cfg.train.seed;

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_text_atomic(dir / "config.json", config_to_json(cfg).dump(2) + "\n");
  m.add_output(dir / "config.json");

  const ProgressFn progress = [&](std::int64_t step, double train_loss, double val_loss) {
    if (!a.quiet)
      out << "step " << step << " train " << format_double(train_loss) << " validation "
          << format_double(val_loss) << std::endl;
    return true;
  };
  const TrainResult result =
      run_experiment(cfg, train_set, val_set, test_set ? &*test_set : nullptr, progress);

  save_model(result.model, dir / "model.json");
  write_text_atomic(dir / "report.json", report_to_json(cfg, result.report).dump(2) + "\n");
  m.add_output(dir / "model.json");
  m.add_output(dir / "report.json");
  out << "best step " << result.report.best_step << " validation loss "
      << format_double(result.report.best_validation_loss) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string model;
  std::string data;
  std::string report;
  std::string export_dir;
  std::string config;
};

int cmd_eval(const EvalArgs& a, RunManifest& m, std::ostream& out) {
  const KoopmanModel model = load_model_checked(a.model);
  m.add_input(a.model);
  std::vector<Dataset> sets;
  for (Split s : {Split::Train, Split::Validation, Split::Test}) {
    if (auto ds = load_optional_split(a.data, s)) {
      require_system(model, *ds);
      record_split(m, a.data, s);
      sets.push_back(std::move(*ds));
    }
  }
  if (sets.empty()) throw UsageError("no dataset splits found under " + a.data);
  std::vector<const Dataset*> ptrs;
  for (const auto& ds : sets) ptrs.push_back(&ds);

  // Loss weights are not stored with a model; the system's preset supplies
  // them unless a config is given.
  const ExperimentConfig cfg = resolve_config(a.config.empty() ? model.system : a.config);
  if (fs::is_regular_file(a.config)) m.add_input(a.config);
  m.config = {{"loss", config_to_json(cfg)["loss"]}, {"chunk", cfg.train.batch_size}};
  EvalReport report = evaluate_model(model, ptrs, cfg.weights,
                                     static_cast<std::size_t>(cfg.train.batch_size));

  if (!a.export_dir.empty()) {
    const fs::path dir(a.export_dir);
    fs::create_directories(dir);
    const std::string tag = model_tag(a.model);
    const StateGrid sg = default_state_grid(system_kind_from_string(model.system));
    const fs::path ef = dir / (model.system + "_eigenfunctions_" + tag + "_" +
                               file_safe(sg.grid.to_string()) + ".csv");
    eigenfunction_grid(model, sg).write_csv(ef);
    Matrix states(0, model.state_dim());
    for (const auto& ds : sets) {
      const Index old = states.rows();
      states.conservativeResize(old + static_cast<Index>(ds.size()) * ds.system.traj_len,
                                Eigen::NoChange);
      Index row = old;
      for (const auto& t : ds.trajectories) {
        states.middleRows(row, t.states.rows()) = t.states;
        row += t.states.rows();
      }
    }
    const GridSpec lg = latent_grid_for(model, states);
    const fs::path ev = dir / (model.system + "_eigenvalues_" + tag + "_" +
                               file_safe(lg.to_string()) + ".csv");
    eigenvalue_field(model, lg).write_csv(ev);
    for (const auto& p : {ef, ev}) {
      report.exports.push_back(p.generic_string());
      m.add_output(p);
    }
  }

  write_text_atomic(a.report, report.to_json().dump(2) + "\n");
  m.add_output(a.report);
  out << "wrote " << a.report << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- export

struct ExportArgs {
  std::string model;
  std::string kind;
  std::string grid;
  std::string out;
  std::string data;
  std::string split = "test";
  int count = 10;
  int resolution = 0;
};

GridSpec parse_grid(const std::string& text) {
  try {
    return GridSpec::parse(text);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
}

std::vector<Trajectory> pick_trajectories(const ExportArgs& a, const KoopmanModel& model,
                                          RunManifest& m) {
  if (a.data.empty()) throw UsageError("--kind " + a.kind + " needs --data");
  if (a.count < 1) throw UsageError("--count must be at least 1");
  Split split;
  try {
    split = split_from_string(a.split);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const Dataset ds = load_split(a.data, split);
  require_system(model, ds);
  record_split(m, a.data, split);
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(a.count), ds.size());
  return {ds.trajectories.begin(), ds.trajectories.begin() + static_cast<std::ptrdiff_t>(n)};
}

int cmd_export(const ExportArgs& a, RunManifest& m, std::ostream& out) {
  const KoopmanModel model = load_model_checked(a.model);
  m.add_input(a.model);
  m.config = {{"kind", a.kind}, {"grid", a.grid},   {"split", a.split},
              {"count", a.count}, {"resolution", a.resolution}};
  const SystemKind kind = system_kind_from_string(model.system);
  const std::string tag = model_tag(a.model);
  Table table;
  std::string grid_tag;

  if (a.kind == "eigenfunctions") {
    StateGrid sg = default_state_grid(kind, a.resolution > 0 ? a.resolution : 100);
    if (!a.grid.empty()) {
      const GridSpec g = parse_grid(a.grid);
      const Index dim = static_cast<Index>(g.axes.size());
      // A grid shaped like the default one keeps its domain mask and lift.
      if (dim != static_cast<Index>(sg.grid.axes.size())) {
        if (dim != model.state_dim())
          throw UsageError("grid has " + std::to_string(dim) + " axes, model state has " +
                           std::to_string(model.state_dim()));
        sg.keep = nullptr;
        sg.lift = nullptr;
      }
      sg.grid = g;
    }
    table = eigenfunction_grid(model, sg);
    grid_tag = sg.grid.to_string();
  } else if (a.kind == "eigenvalues") {
    GridSpec g;
    if (!a.grid.empty()) {
      g = parse_grid(a.grid);
    } else {
      if (a.data.empty()) throw UsageError("--kind eigenvalues needs --grid or --data");
      const auto trajs = pick_trajectories(
          ExportArgs{a.model, a.kind, a.grid, a.out, a.data, a.split, 1 << 30, a.resolution}, model, m);
      Index rows = 0;
      for (const auto& t : trajs) rows += t.states.rows();
      Matrix states(rows, model.state_dim());
      Index row = 0;
      for (const auto& t : trajs) {
        states.middleRows(row, t.states.rows()) = t.states;
        row += t.states.rows();
      }
      g = latent_grid_for(model, states, a.resolution > 0 ? a.resolution : 50);
    }
    if (static_cast<Index>(g.axes.size()) != model.latent_dim())
      throw UsageError("grid has " + std::to_string(g.axes.size()) + " axes, model latent has " +
                       std::to_string(model.latent_dim()));
    table = eigenvalue_field(model, g);
    grid_tag = g.to_string();
  } else if (a.kind == "linearity") {
    const auto trajs = pick_trajectories(a, model, m);
    table.columns = {"trajectory", "step", "residual", "radius"};
    const Index len = trajs.front().states.rows();
    table.rows = Matrix::Constant(static_cast<Index>(trajs.size()) * len, 4, std::nan(""));
    for (std::size_t i = 0; i < trajs.size(); ++i) {
      const LinearityDiagnostic d = linearity_diagnostic(model, trajs[i]);
      for (Index k = 0; k < len; ++k) {
        const Index row = static_cast<Index>(i) * len + k;
        table.rows(row, 0) = static_cast<double>(i);
        table.rows(row, 1) = static_cast<double>(k);
        // Step 0 has no residual: the rollout starts from enc(x_1) itself.
        table.rows(row, 2) = k == 0 ? 0.0 : d.residuals[static_cast<std::size_t>(k - 1)];
        if (!d.radius.empty()) table.rows(row, 3) = d.radius[static_cast<std::size_t>(k)];
      }
    }
    grid_tag = a.split + std::to_string(trajs.size());
  } else if (a.kind == "prediction") {
    const auto trajs = pick_trajectories(a, model, m);
    table = prediction_table(model, trajs);
    grid_tag = a.split + std::to_string(trajs.size());
  } else {
    throw UsageError("--kind must be eigenfunctions, eigenvalues, linearity or prediction");
  }

  const fs::path dir(a.out);
  fs::create_directories(dir);
  const fs::path file = dir / (model.system + "_" + a.kind + "_" + tag + "_" + file_safe(grid_tag) + ".csv");
  table.write_csv(file);
  m.add_output(file);
  out << "wrote " << table.rows.rows() << " rows to " << file.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- search

struct SearchArgs {
  std::string space;
  int budget = 0;
  std::string data;
  std::string out;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> max_steps;
};

int cmd_search(const SearchArgs& a, RunManifest& m, std::ostream& out) {
  if (a.budget < 1) throw UsageError("--budget must be at least 1");
  if (!fs::is_regular_file(a.space)) throw UsageError("search space file not found: " + a.space);
  SearchSpace space;
  try {
    space = search_space_from_json(json::parse(read_text(a.space)));
  } catch (const json::exception& e) {
    throw UsageError("search space " + a.space + ": " + e.what());
  }
  if (a.seed) space.seed = *a.seed;
  m.add_input(a.space);

  const Dataset train_set = load_split(a.data, Split::Train);
  const Dataset val_set = load_split(a.data, Split::Validation);
  record_split(m, a.data, Split::Train);
  record_split(m, a.data, Split::Validation);
  ExperimentConfig base =
      resolve_config(a.config.empty() ? train_set.system.name() + "_desk" : a.config);
  if (a.max_steps) base.train.max_steps = *a.max_steps;
  if (base.system != train_set.system.kind)
    throw UsageError("base config is for '" + std::string(to_string(base.system)) +
                     "' but the data is '" + train_set.system.name() + "'");
  m.config = {{"base", config_to_json(base)}, {"space", search_space_to_json(space)},
              {"budget", a.budget}};
  m.seeds["search"] = space.seed;

  const SearchResult result = random_search(space, a.budget, base, train_set, val_set);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  json log = json::array();
  for (const auto& c : result.candidates) {
    json entry = {{"config", config_to_json(c.config)}, {"failed", c.failed}};
    if (c.failed) {
      entry["error"] = c.error;
    } else {
      entry["validation_loss"] = c.validation_loss;
      entry["best_step"] = c.best_step;
    }
    log.push_back(std::move(entry));
  }
  const json doc = {{"format_version", 1}, {"best_index", result.best_index}, {"candidates", log}};
  write_text_atomic(dir / "candidates.json", doc.dump(2) + "\n");
  save_model(result.best_model, dir / "model.json");
  m.add_output(dir / "candidates.json");
  m.add_output(dir / "model.json");
  out << "best candidate " << result.best_index << " validation loss "
      << format_double(result.candidates[result.best_index].validation_loss) << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learn Koopman eigenfunctions of nonlinear dynamical systems"};
  app.require_subcommand(1);
  app.set_version_flag("--version", KOOPNET_VERSION);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Simulate a dataset split");
  gen->add_option("--system", ga.system, "discrete_spectrum, pendulum, fluid1 or fluid2")->required();
  gen->add_option("--split", ga.split, "train, validation or test")->required();
  gen->add_option("--n", ga.n, "number of trajectories")->required();
  gen->add_option("--seed", ga.seed, "random seed");
  gen->add_option("--out", ga.out, "dataset root; the split goes in <out>/<split>")->required();
  gen->add_flag("--evenly-spaced", ga.evenly_spaced, "evenly spaced initial conditions");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Pretrain and train a model");
  tr->add_option("--data", ta.data, "dataset root with train/ and validation/")->required();
  tr->add_option("--config", ta.config, "preset name or config JSON file")->required();
  tr->add_option("--out", ta.out, "output directory")->required();
  tr->add_option("--seed", ta.seed, "override the config seed");
  tr->add_option("--max-steps", ta.max_steps, "override the step budget");
  tr->add_option("--pretrain-steps", ta.pretrain_steps, "override the pretraining budget");
  tr->add_flag("--quiet", ta.quiet, "no progress output");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a model on every split found");
  ev->add_option("--model", ea.model, "model JSON")->required();
  ev->add_option("--data", ea.data, "dataset root")->required();
  ev->add_option("--report", ea.report, "report JSON path")->required();
  ev->add_option("--export-dir", ea.export_dir, "also write default grid exports here");
  ev->add_option("--config", ea.config, "preset or config file supplying the loss weights");

  ExportArgs xa;
  auto* ex = app.add_subcommand("export", "Write plot-ready CSV tables");
  ex->add_option("--model", xa.model, "model JSON")->required();
  ex->add_option("--kind", xa.kind, "eigenfunctions, eigenvalues, linearity or prediction")
      ->required();
  ex->add_option("--grid", xa.grid, "min:max:res per axis, comma separated");
  ex->add_option("--out", xa.out, "output directory")->required();
  ex->add_option("--data", xa.data, "dataset root");
  ex->add_option("--split", xa.split, "split used for trajectory exports");
  ex->add_option("--count", xa.count, "trajectories in trajectory exports");
  ex->add_option("--resolution", xa.resolution, "points per axis for default grids");

  SearchArgs sa;
  auto* se = app.add_subcommand("search", "Random search over architectures and loss weights");
  se->add_option("--space", sa.space, "search space JSON")->required();
  se->add_option("--budget", sa.budget, "number of candidates")->required();
  se->add_option("--data", sa.data, "dataset root with train/ and validation/")->required();
  se->add_option("--out", sa.out, "output directory")->required();
  se->add_option("--config", sa.config, "base preset or config file");
  se->add_option("--seed", sa.seed, "override the search space seed");
  se->add_option("--max-steps", sa.max_steps, "override each candidate's step budget");

  std::vector<std::string> argv_store{"koopnet"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  RunManifest manifest;
  manifest.argv = args;
  fs::path manifest_path;
  const auto t0 = Clock::now();
  int code = kExitOk;
  try {
    if (*gen) {
      manifest.command = "generate";
      Split split;
      try {
        split = split_from_string(ga.split);
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      manifest_path = fs::path(ga.out) / std::string(to_string(split)) / "manifest.json";
      code = cmd_generate(ga, manifest, out);
    } else if (*tr) {
      manifest.command = "train";
      manifest_path = fs::path(ta.out) / "manifest.json";
      code = cmd_train(ta, manifest, out);
    } else if (*ev) {
      manifest.command = "eval";
      manifest_path = fs::path(ea.report).replace_extension(".manifest.json");
      code = cmd_eval(ea, manifest, out);
    } else if (*ex) {
      manifest.command = "export";
      manifest_path = fs::path(xa.out) / ("manifest_" + xa.kind + ".json");
      code = cmd_export(xa, manifest, out);
    } else if (*se) {
      manifest.command = "search";
      manifest_path = fs::path(sa.out) / "manifest.json";
      code = cmd_search(sa, manifest, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    manifest.status = "failed";
    manifest.error = e.what();
    code = kExitFailure;
  }

  manifest.wall_seconds = seconds_since(t0);
  if (code != kExitFailure || fs::exists(manifest_path.parent_path())) {
    try {
      if (!manifest_path.parent_path().empty()) fs::create_directories(manifest_path.parent_path());
      manifest.write(manifest_path);
    } catch (const std::exception& e) {
      err << "error: could not write manifest: " << e.what() << "\n";
      return kExitFailure;
    }
  }
  return code;
}

}  // namespace koopnet::cli

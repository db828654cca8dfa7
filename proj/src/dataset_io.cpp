#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "koopnet/dynamics.hpp"
#include "koopnet/error.hpp"
#include "koopnet/io.hpp"

namespace koopnet {

namespace fs = std::filesystem;
using nlohmann::json;

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  const SystemSpec& sys = dataset.system;
  json meta = {
      {"format_version", kDatasetFormatVersion},
      {"system", sys.name()},
      {"split", std::string(to_string(dataset.split))},
      {"params", {{"mu", sys.params.mu}, {"lambda", sys.params.lambda},
                  {"omega", sys.params.omega}, {"a", sys.params.a}}},
      {"dt", sys.dt},
      {"traj_len", sys.traj_len},
      {"n_traj", dataset.size()},
      {"state_dim", sys.state_dim},
      {"seed", dataset.seed},
  };

  std::string csv;
  csv.reserve(dataset.size() * sys.traj_len * sys.state_dim * 24);
  for (const auto& traj : dataset.trajectories) {
    if (traj.states.rows() != sys.traj_len || traj.states.cols() != sys.state_dim)
      throw ShapeError("trajectory shape does not match the dataset's system");
    for (Index k = 0; k < traj.states.rows(); ++k) {
      for (Index j = 0; j < traj.states.cols(); ++j) {
        if (j) csv += ',';
        csv += format_double(traj.states(k, j), true);
      }
      csv += '\n';
    }
  }
  fs::create_directories(dir);
  write_text_atomic(dir / "data.csv", csv);
  write_text_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir) {
  json meta;
  try {
    meta = json::parse(read_text(dir / "meta.json"));
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + "/meta.json: " + e.what());
  }
  if (meta.value("format_version", 0) != kDatasetFormatVersion)
    throw FormatError(dir.string() + ": unsupported dataset format version");

  Dataset ds;
  try {
    ds.system = SystemSpec::make(system_kind_from_string(meta.at("system").get<std::string>()));
    ds.split = split_from_string(meta.at("split").get<std::string>());
    ds.seed = meta.at("seed").get<std::uint64_t>();
    const auto& p = meta.at("params");
    ds.system.params = {p.at("mu").get<double>(), p.at("lambda").get<double>(),
                        p.at("omega").get<double>(), p.at("a").get<double>()};
    ds.system.dt = meta.at("dt").get<double>();
    ds.system.traj_len = meta.at("traj_len").get<int>();
    ds.system.state_dim = meta.at("state_dim").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + "/meta.json: " + e.what());
  }
  const auto n_traj = meta.at("n_traj").get<std::size_t>();
  const int len = ds.system.traj_len;
  const int dim = ds.system.state_dim;

  std::ifstream in(dir / "data.csv");
  if (!in) throw FormatError("cannot open " + (dir / "data.csv").string());
  std::string line;
  ds.trajectories.resize(n_traj);
  for (std::size_t t = 0; t < n_traj; ++t) {
    auto& traj = ds.trajectories[t];
    traj.dt = ds.system.dt;
    traj.states.resize(len, dim);
    for (int k = 0; k < len; ++k) {
      if (!std::getline(in, line)) throw FormatError("data.csv ends early");
      std::string_view rest(line);
      for (int j = 0; j < dim; ++j) {
        const auto comma = rest.find(',');
        if ((comma == std::string_view::npos) != (j + 1 == dim))
          throw FormatError("data.csv row has the wrong number of columns");
        traj.states(k, j) = parse_double(rest.substr(0, comma));
        if (comma != std::string_view::npos) rest.remove_prefix(comma + 1);
      }
    }
  }
  if (std::getline(in, line) && !line.empty()) throw FormatError("data.csv has extra rows");
  return ds;
}

}  // namespace koopnet

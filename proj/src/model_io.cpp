#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "koopnet/error.hpp"
#include "koopnet/io.hpp"
#include "koopnet/koopman.hpp"

namespace koopnet {

using nlohmann::json;

namespace {

json mlp_to_json(const Mlp& mlp) {
  json layers = json::array();
  for (const auto& l : mlp.layers()) {
    std::vector<double> w;
    w.reserve(l.weight.size());
    for (Index i = 0; i < l.weight.rows(); ++i)
      for (Index j = 0; j < l.weight.cols(); ++j) w.push_back(l.weight(i, j));
    layers.push_back({{"in_dim", l.in_dim()},
                      {"out_dim", l.out_dim()},
                      {"activation", std::string(to_string(l.activation))},
                      {"weight", w},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return {{"layers", layers}};
}

Mlp mlp_from_json(const json& j) {
  std::vector<DenseLayer> layers;
  for (const auto& jl : j.at("layers")) {
    DenseLayer l;
    const auto in = jl.at("in_dim").get<Index>();
    const auto out = jl.at("out_dim").get<Index>();
    const auto w = jl.at("weight").get<std::vector<double>>();
    const auto b = jl.at("bias").get<std::vector<double>>();
    if (in <= 0 || out <= 0 || static_cast<Index>(w.size()) != in * out ||
        static_cast<Index>(b.size()) != out)
      throw FormatError("layer arrays do not match the declared dimensions");
    l.weight.resize(out, in);
    for (Index i = 0; i < out; ++i)
      for (Index c = 0; c < in; ++c) l.weight(i, c) = w[i * in + c];
    l.bias = Eigen::Map<const Vector>(b.data(), out);
    l.activation = activation_from_string(jl.at("activation").get<std::string>());
    layers.push_back(std::move(l));
  }
  try {
    return Mlp(std::move(layers));
  } catch (const ArchitectureError& e) {
    throw FormatError(std::string("invalid network: ") + e.what());
  }
}

std::string source_name(EigenvalueSource s) {
  return s == EigenvalueSource::Predicted ? "predicted" : "encoded";
}

}  // namespace

std::string model_to_json(const KoopmanModel& model) {
  json aux_pairs = json::array();
  for (const auto& m : model.aux_pairs) aux_pairs.push_back(mlp_to_json(m));
  json aux_reals = json::array();
  for (const auto& m : model.aux_reals) aux_reals.push_back(mlp_to_json(m));
  const double best = model.training.best_validation_loss;
  json doc = {
      {"format_version", kModelFormatVersion},
      {"system", model.system},
      {"dt", model.dt},
      {"spectrum",
       {{"complex_pairs", model.spectrum.complex_pairs}, {"real_eigs", model.spectrum.real_eigs}}},
      {"eigenvalue_source", source_name(model.eigenvalue_source)},
      {"encoder", mlp_to_json(model.encoder)},
      {"decoder", mlp_to_json(model.decoder)},
      {"aux_pairs", aux_pairs},
      {"aux_reals", aux_reals},
      {"training",
       {{"seed", model.training.seed},
        {"steps", model.training.steps},
        {"best_validation_loss", std::isfinite(best) ? json(best) : json(nullptr)}}},
  };
  return doc.dump(1) + "\n";
}

KoopmanModel model_from_json(const std::string& text) {
  KoopmanModel m;
  try {
    const json doc = json::parse(text);
    if (doc.at("format_version").get<int>() != kModelFormatVersion)
      throw FormatError("unsupported model format version");
    m.system = doc.at("system").get<std::string>();
    m.dt = doc.at("dt").get<double>();
    m.spectrum.complex_pairs = doc.at("spectrum").at("complex_pairs").get<int>();
    m.spectrum.real_eigs = doc.at("spectrum").at("real_eigs").get<int>();
    const auto src = doc.value("eigenvalue_source", std::string("predicted"));
    if (src != "predicted" && src != "encoded") throw FormatError("unknown eigenvalue_source");
    m.eigenvalue_source = src == "predicted" ? EigenvalueSource::Predicted : EigenvalueSource::Encoded;
    m.encoder = mlp_from_json(doc.at("encoder"));
    m.decoder = mlp_from_json(doc.at("decoder"));
    for (const auto& j : doc.at("aux_pairs")) m.aux_pairs.push_back(mlp_from_json(j));
    for (const auto& j : doc.at("aux_reals")) m.aux_reals.push_back(mlp_from_json(j));
    if (doc.contains("training")) {
      const auto& t = doc.at("training");
      m.training.seed = t.value("seed", std::uint64_t{0});
      m.training.steps = t.value("steps", std::int64_t{0});
      if (t.contains("best_validation_loss") && t.at("best_validation_loss").is_number())
        m.training.best_validation_loss = t.at("best_validation_loss").get<double>();
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
  try {
    m.validate();
  } catch (const ArchitectureError& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
  return m;
}

void save_model(const KoopmanModel& model, const std::filesystem::path& path) {
  write_text_atomic(path, model_to_json(model));
}

KoopmanModel load_model(const std::filesystem::path& path) {
  return model_from_json(read_text(path));
}

}  // namespace koopnet

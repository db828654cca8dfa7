#include "koopnet/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "koopnet/error.hpp"
#include "koopnet/io.hpp"

namespace koopnet {

using nlohmann::json;

void GridSpec::validate() const {
  if (axes.empty()) throw DomainError("grid has no axes");
  for (const auto& a : axes) {
    if (!(a.min < a.max)) throw DomainError("grid axis needs min < max");
    if (a.resolution < 2) throw DomainError("grid axis resolution must be at least 2");
  }
}

std::size_t GridSpec::point_count() const {
  std::size_t n = 1;
  for (const auto& a : axes) n *= static_cast<std::size_t>(a.resolution);
  return n;
}

Matrix GridSpec::points() const {
  validate();
  const std::size_t n = point_count();
  const Index d = static_cast<Index>(axes.size());
  Matrix pts(static_cast<Index>(n), d);
  std::vector<int> idx(axes.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) {
      const Axis& a = axes[j];
      pts(static_cast<Index>(i), j) = a.min + (a.max - a.min) * idx[j] / (a.resolution - 1);
    }
    for (Index j = d - 1; j >= 0; --j) {
      if (++idx[j] < axes[j].resolution) break;
      idx[j] = 0;
    }
  }
  return pts;
}

GridSpec GridSpec::parse(const std::string& text) {
  GridSpec g;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = std::min(text.find(',', start), text.size());
    const std::string part = text.substr(start, comma - start);
    start = comma + 1;
    const auto c1 = part.find(':');
    const auto c2 = c1 == std::string::npos ? c1 : part.find(':', c1 + 1);
    if (c2 == std::string::npos) throw DomainError("grid axis must look like min:max:resolution");
    Axis a;
    try {
      a.min = parse_double(std::string_view(part).substr(0, c1));
      a.max = parse_double(std::string_view(part).substr(c1 + 1, c2 - c1 - 1));
      const double res = parse_double(std::string_view(part).substr(c2 + 1));
      if (res != std::floor(res) || res > 1e9) throw DomainError("grid resolution must be an integer");
      a.resolution = static_cast<int>(res);
    } catch (const FormatError& e) {
      throw DomainError(std::string("grid: ") + e.what());
    }
    g.axes.push_back(a);
  }
  g.validate();
  return g;
}

std::string GridSpec::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (i) s += ',';
    s += format_double(axes[i].min) + ':' + format_double(axes[i].max) + ':' +
         std::to_string(axes[i].resolution);
  }
  return s;
}

StateGrid default_state_grid(SystemKind kind, int resolution) {
  StateGrid g;
  switch (kind) {
    case SystemKind::DiscreteSpectrum:
      g.grid.axes = {{-0.5, 0.5, resolution}, {-0.5, 0.5, resolution}};
      break;
    case SystemKind::Pendulum:
      g.grid.axes = {{-3.1, 3.1, resolution}, {-2.0, 2.0, resolution}};
      g.keep = [](const Vector& x) { return pendulum_ic_accepted(x); };
      break;
    case SystemKind::FluidFlowOnAttractor:
      g.grid.axes = {{-1.1, 1.1, resolution}, {-1.1, 1.1, resolution}};
      g.keep = [](const Vector& x) { return x.squaredNorm() <= 1.1 * 1.1; };
      g.lift = [](const Vector& x) {
        Vector s(3);
        s << x[0], x[1], x.squaredNorm();
        return s;
      };
      break;
    case SystemKind::FluidFlowOffAttractor: {
      const int r = std::max(2, resolution / 3);
      g.grid.axes = {{-1.1, 1.1, r}, {-1.1, 1.1, r}, {0.0, 2.42, r}};
      break;
    }
  }
  return g;
}

std::string Table::to_csv() const {
  std::string out;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (j) out += ',';
    out += columns[j];
  }
  out += '\n';
  for (Index i = 0; i < rows.rows(); ++i) {
    for (Index j = 0; j < rows.cols(); ++j) {
      if (j) out += ',';
      out += format_double(rows(i, j));
    }
    out += '\n';
  }
  return out;
}

void Table::write_csv(const std::filesystem::path& path) const {
  write_text_atomic(path, to_csv());
}

std::map<Split, LossBreakdown> split_errors(const KoopmanModel& model,
                                            const std::vector<const Dataset*>& datasets,
                                            const LossWeights& weights, std::size_t chunk) {
  std::map<Split, LossBreakdown> out;
  for (const Dataset* ds : datasets) {
    if (!ds) continue;
    if (!model.system.empty() && model.system != ds->system.name())
      throw ConfigError("model was trained on '" + model.system + "' but the " +
                        std::string(to_string(ds->split)) + " split is '" + ds->system.name() +
                        "'");
    out[ds->split] = evaluate_dataset(model, *ds, weights, chunk);
  }
  return out;
}

int prediction_horizon(const Predictor& predictor, const Trajectory& trajectory, double threshold,
                       double floor) {
  if (!(threshold > 0.0)) throw DomainError("horizon threshold must be positive");
  const Matrix& x = trajectory.states;
  const int steps = static_cast<int>(x.rows()) - 1;
  if (steps < 1) return 0;
  const Matrix pred = predictor(x.row(0).transpose(), steps);
  if (pred.rows() != steps || pred.cols() != x.cols())
    throw ShapeError("predictor returned the wrong shape");
  int h = 0;
  for (int k = 1; k <= steps; ++k) {
    const double err = (pred.row(k - 1) - x.row(k)).norm();
    const double scale = std::max(x.row(k).norm(), floor);
    if (!(err / scale < threshold)) break;
    h = k;
  }
  return h;
}

int prediction_horizon(const KoopmanModel& model, const Trajectory& trajectory, double threshold,
                       double floor) {
  const Predictor predictor = [&model](const Vector& x0, int m) {
    try {
      return predict_states(model, x0, m);
    } catch (const DivergenceError&) {
      return Matrix(Matrix::Constant(m, model.state_dim(), std::nan("")));
    }
  };
  return prediction_horizon(predictor, trajectory, threshold, floor);
}

namespace {

std::vector<std::string> numbered(const std::string& prefix, Index n) {
  std::vector<std::string> names;
  for (Index i = 1; i <= n; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

}  // namespace

Table eigenfunction_grid(const KoopmanModel& model, const StateGrid& grid) {
  const Matrix raw = grid.grid.points();
  std::vector<Vector> states;
  states.reserve(static_cast<std::size_t>(raw.rows()));
  for (Index i = 0; i < raw.rows(); ++i) {
    const Vector g = raw.row(i).transpose();
    if (grid.keep && !grid.keep(g)) continue;
    states.push_back(grid.lift ? grid.lift(g) : g);
  }
  const Index n = model.state_dim();
  Matrix x(static_cast<Index>(states.size()), n);
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i].size() != n) throw ShapeError("grid dimension does not match the model state");
    x.row(static_cast<Index>(i)) = states[i].transpose();
  }
  const Matrix y = encode(model, x);
  const int c = model.spectrum.complex_pairs;
  const Index p = model.latent_dim();

  Table t;
  t.columns = numbered("x", n);
  for (auto& s : numbered("y", p)) t.columns.push_back(s);
  for (int k = 1; k <= c; ++k) {
    t.columns.push_back("magnitude" + std::to_string(k));
    t.columns.push_back("phase" + std::to_string(k));
  }
  t.rows.resize(x.rows(), n + p + 2 * c);
  t.rows.leftCols(n) = x;
  t.rows.middleCols(n, p) = y;
  for (int k = 0; k < c; ++k) {
    for (Index i = 0; i < y.rows(); ++i) {
      const double a = y(i, 2 * k), b = y(i, 2 * k + 1);
      t.rows(i, n + p + 2 * k) = std::hypot(a, b);
      t.rows(i, n + p + 2 * k + 1) = std::atan2(b, a);
    }
  }
  return t;
}

Table eigenvalue_field(const KoopmanModel& model, const GridSpec& latent_grid) {
  if (static_cast<int>(latent_grid.axes.size()) != model.latent_dim())
    throw ShapeError("latent grid dimension does not match the model");
  const Matrix y = latent_grid.points();
  const Matrix table = eigenvalue_table(model, y);
  Table t;
  t.columns = numbered("y", model.latent_dim());
  for (int k = 1; k <= model.spectrum.complex_pairs; ++k) {
    t.columns.push_back("mu" + std::to_string(k));
    t.columns.push_back("omega" + std::to_string(k));
  }
  for (auto& s : numbered("lambda", model.spectrum.real_eigs)) t.columns.push_back(s);
  t.rows.resize(y.rows(), y.cols() + table.cols());
  t.rows << y, table;
  return t;
}

GridSpec latent_grid_for(const KoopmanModel& model, const Eigen::Ref<const Matrix>& states,
                         int resolution, double margin) {
  const Matrix y = encode(model, states);
  GridSpec g;
  const int c = model.spectrum.complex_pairs;
  for (Index j = 0; j < y.cols(); ++j) {
    double extent;
    if (j < 2 * c) {
      // Pair planes are bounded by the largest radius, keeping the grid square.
      const Index base = j - j % 2;
      extent = (y.col(base).array().square() + y.col(base + 1).array().square()).sqrt().maxCoeff();
    } else {
      extent = y.col(j).cwiseAbs().maxCoeff();
    }
    extent = std::max(extent * (1.0 + margin), 1e-9);
    g.axes.push_back({-extent, extent, resolution});
  }
  return g;
}

double LinearityDiagnostic::radius_cv() const {
  if (radius.empty()) return 0.0;
  const double mean = std::accumulate(radius.begin(), radius.end(), 0.0) / radius.size();
  double var = 0.0;
  for (double r : radius) var += (r - mean) * (r - mean);
  var /= radius.size();
  return mean > 0.0 ? std::sqrt(var) / mean : 0.0;
}

LinearityDiagnostic linearity_diagnostic(const KoopmanModel& model, const Trajectory& trajectory) {
  LinearityDiagnostic d;
  const Matrix y = encode(model, trajectory.states);
  const int steps = static_cast<int>(y.rows()) - 1;
  if (steps >= 1) {
    const auto roll = latent_rollout_batch(model, y.topRows(1), steps);
    for (int m = 1; m <= steps; ++m) d.residuals.push_back((y.row(m) - roll[m - 1]).norm());
  }
  if (model.spectrum.complex_pairs >= 1)
    for (Index k = 0; k < y.rows(); ++k) d.radius.push_back(std::hypot(y(k, 0), y(k, 1)));
  return d;
}

Table prediction_table(const KoopmanModel& model, const std::vector<Trajectory>& trajectories) {
  const Index n = model.state_dim();
  Table t;
  t.columns = {"trajectory", "step"};
  for (auto& s : numbered("x", n)) t.columns.push_back(s);
  for (auto& s : numbered("x_hat", n)) t.columns.push_back(s);
  Index total = 0;
  for (const auto& tr : trajectories) total += tr.states.rows();
  t.rows.resize(total, 2 + 2 * n);
  Index row = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Matrix& x = trajectories[i].states;
    Matrix pred(x.rows(), n);
    pred.row(0) = decode(model, encode(model, x.topRows(1)));
    if (x.rows() > 1) pred.bottomRows(x.rows() - 1) = predict_states(model, x.row(0).transpose(),
                                                                     static_cast<int>(x.rows()) - 1);
    for (Index k = 0; k < x.rows(); ++k, ++row) {
      t.rows(row, 0) = static_cast<double>(i);
      t.rows(row, 1) = static_cast<double>(k);
      t.rows.block(row, 2, 1, n) = x.row(k);
      t.rows.block(row, 2 + n, 1, n) = pred.row(k);
    }
  }
  return t;
}

std::vector<double> ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> r(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw DomainError("spearman needs two equal samples");
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const Eigen::Map<const Vector> x(ra.data(), static_cast<Index>(ra.size()));
  const Eigen::Map<const Vector> y(rb.data(), static_cast<Index>(rb.size()));
  const Vector dx = x.array() - x.mean();
  const Vector dy = y.array() - y.mean();
  const double denom = std::sqrt(dx.squaredNorm() * dy.squaredNorm());
  return denom > 0.0 ? dx.dot(dy) / denom : 0.0;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

json breakdown_to_json(const LossBreakdown& b) {
  return {{"total", b.total}, {"recon", b.recon}, {"pred", b.pred},
          {"lin", b.lin},     {"inf", b.inf},     {"reg", b.reg}};
}

json EvalReport::to_json() const {
  json errs = json::object();
  for (const auto& [split, b] : errors) errs[std::string(koopnet::to_string(split))] = breakdown_to_json(b);
  json h = json::object();
  h["per_trajectory"] = horizons;
  if (!horizons.empty()) {
    std::vector<double> hv(horizons.begin(), horizons.end());
    h["median"] = median(hv);
    h["min"] = *std::min_element(horizons.begin(), horizons.end());
    h["max"] = *std::max_element(horizons.begin(), horizons.end());
  }
  json eig = json::object();
  for (std::size_t j = 0; j < eigenvalue_columns.size(); ++j)
    eig[eigenvalue_columns[j]] = {{"min", eigenvalue_summary(0, static_cast<Index>(j))},
                                  {"mean", eigenvalue_summary(1, static_cast<Index>(j))},
                                  {"max", eigenvalue_summary(2, static_cast<Index>(j))}};
  return {{"format_version", 1},
          {"errors", errs},
          {"prediction_horizon", h},
          {"eigenvalues", eig},
          {"exports", exports}};
}

EvalReport evaluate_model(const KoopmanModel& model, const std::vector<const Dataset*>& datasets,
                          const LossWeights& weights, std::size_t chunk) {
  EvalReport r;
  r.errors = split_errors(model, datasets, weights, chunk);

  Index total = 0;
  for (const Dataset* ds : datasets)
    if (ds) total += static_cast<Index>(ds->size()) * ds->system.traj_len;
  Matrix states(total, model.state_dim());
  Index row = 0;
  for (const Dataset* ds : datasets) {
    if (!ds) continue;
    for (const auto& t : ds->trajectories) {
      states.middleRows(row, t.states.rows()) = t.states;
      row += t.states.rows();
    }
    if (ds->split == Split::Test)
      for (const auto& t : ds->trajectories) r.horizons.push_back(prediction_horizon(model, t));
  }

  for (int k = 1; k <= model.spectrum.complex_pairs; ++k) {
    r.eigenvalue_columns.push_back("mu" + std::to_string(k));
    r.eigenvalue_columns.push_back("omega" + std::to_string(k));
  }
  for (int j = 1; j <= model.spectrum.real_eigs; ++j)
    r.eigenvalue_columns.push_back("lambda" + std::to_string(j));
  r.eigenvalue_summary = Matrix::Zero(3, static_cast<Index>(r.eigenvalue_columns.size()));
  if (total > 0) {
    const Matrix table = eigenvalue_table(model, encode(model, states));
    r.eigenvalue_summary.row(0) = table.colwise().minCoeff();
    r.eigenvalue_summary.row(1) = table.colwise().mean();
    r.eigenvalue_summary.row(2) = table.colwise().maxCoeff();
  }
  return r;
}

}  // namespace koopnet

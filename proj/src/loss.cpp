#include "koopnet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "koopnet/error.hpp"

namespace koopnet {

TrajectoryBatch make_batch(std::span<const Trajectory> trajectories) {
  TrajectoryBatch b;
  if (trajectories.empty()) return b;
  b.count = static_cast<int>(trajectories.size());
  b.length = static_cast<int>(trajectories.front().states.rows());
  const Index dim = trajectories.front().states.cols();
  b.states.resize(static_cast<Index>(b.length) * b.count, dim);
  for (int i = 0; i < b.count; ++i) {
    const Matrix& s = trajectories[i].states;
    if (s.rows() != b.length || s.cols() != dim)
      throw ShapeError("trajectories in a batch must share length and state size");
    for (int k = 0; k < b.length; ++k) b.states.row(static_cast<Index>(k) * b.count + i) = s.row(k);
  }
  return b;
}

TrajectoryBatch make_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
  TrajectoryBatch b;
  if (indices.empty()) return b;
  b.count = static_cast<int>(indices.size());
  b.length = dataset.system.traj_len;
  const Index dim = dataset.system.state_dim;
  b.states.resize(static_cast<Index>(b.length) * b.count, dim);
  for (int i = 0; i < b.count; ++i) {
    const Matrix& s = dataset.trajectories.at(indices[i]).states;
    if (s.rows() != b.length || s.cols() != dim)
      throw ShapeError("trajectory shape does not match the dataset's system");
    for (int k = 0; k < b.length; ++k) b.states.row(static_cast<Index>(k) * b.count + i) = s.row(k);
  }
  return b;
}

namespace {

struct Residual {
  double sq_sum = 0.0;
  double max_abs = 0.0;
  Index argmax = 0;  // linear index of the first largest entry
};

Residual measure(const Matrix& diff) {
  Residual r;
  r.sq_sum = diff.squaredNorm();
  r.max_abs = -1.0;
  for (Index i = 0; i < diff.size(); ++i) {
    const double a = std::abs(diff.data()[i]);
    if (a > r.max_abs) {
      r.max_abs = a;
      r.argmax = i;
    }
  }
  return r;
}

// Per-pass quantities before weighting; kept separate so chunked evaluation
// can combine means and maxima exactly.
struct Terms {
  double recon = 0.0;
  double pred = 0.0;
  double lin = 0.0;
  double inf_first = 0.0;
  double inf_second = 0.0;
};

LossBreakdown combine(const Terms& t, double reg, const LossWeights& w, LossTerms which) {
  LossBreakdown b;
  b.recon = t.recon;
  b.reg = reg;
  if (which == LossTerms::Full) {
    b.pred = t.pred;
    b.lin = t.lin;
    b.inf = t.inf_first + t.inf_second;
  } else {
    b.inf = t.inf_first;
  }
  b.total = w.alpha1 * (b.recon + b.pred) + b.lin + w.alpha2 * b.inf + w.alpha3 * b.reg;
  return b;
}

void check_batch(const KoopmanModel& model, const TrajectoryBatch& batch, const LossWeights& w,
                 LossTerms which) {
  if (batch.count < 1) throw ConfigError("empty batch");
  if (batch.states.cols() != model.state_dim())
    throw ShapeError("batch state size does not match the model");
  if (which == LossTerms::Full) {
    if (w.prediction_steps < 1) throw ConfigError("prediction horizon must be at least 1");
    if (batch.length < w.prediction_steps + 1)
      throw ConfigError("trajectory length " + std::to_string(batch.length) +
                        " is shorter than prediction horizon + 1 = " +
                        std::to_string(w.prediction_steps + 1));
  } else if (batch.length < 1) {
    throw ConfigError("trajectories must have at least one snapshot");
  }
}

// Forward pass over a batch. With `record` set, the auxiliary networks keep
// their caches for the reverse pass; encoder and decoder activations are
// recomputed there instead, since they are too large to keep cache-resident.
struct ForwardPass {
  int count = 0;
  int length = 0;
  int horizon = 0;  // prediction steps decoded
  int steps = 0;    // rollout steps taken

  Matrix latent;                  // encodings of every snapshot (time-major)
  std::vector<Matrix> rollout;    // rollout[m] = K^m enc(x_1); rollout[0] = enc(x_1)
  std::vector<Matrix> eig_table;  // eig_table[m] used for the step m-1 -> m
  std::vector<std::vector<ForwardCache>> pair_caches;  // [m][k]
  std::vector<std::vector<ForwardCache>> real_caches;  // [m][j]
  Matrix dec_in;   // [enc(x_1); rollout 1..horizon]
  Matrix decoded;  // decoder outputs for [enc(x_1); rollout 1..horizon]

  Terms terms;
  Residual first;   // x_1 - dec(enc(x_1))
  Residual second;  // x_2 - dec(K enc(x_1))
};

ForwardPass run_forward(const KoopmanModel& model, const TrajectoryBatch& batch,
                        const LossWeights& w, LossTerms which, bool record) {
  ForwardPass f;
  f.count = batch.count;
  f.length = batch.length;
  const int B = batch.count;
  const int c = model.spectrum.complex_pairs;
  const int r = model.spectrum.real_eigs;
  const Index n = model.state_dim();
  const Index p = model.latent_dim();
  const bool full = which == LossTerms::Full;
  f.horizon = full ? w.prediction_steps : 0;
  f.steps = full ? batch.length - 1 : 0;

  // Encode: every snapshot for the full loss, only x_1 for the autoencoder.
  const auto enc_input = full ? batch.states.topRows(batch.states.rows()) : batch.snapshot(0);
  f.latent = evaluate(model.encoder, enc_input);

  f.rollout.resize(f.steps + 1);
  f.rollout[0] = f.latent.topRows(B);
  if (record) {
    f.eig_table.resize(f.steps + 1);
    f.pair_caches.assign(f.steps + 1, std::vector<ForwardCache>(c));
    f.real_caches.assign(f.steps + 1, std::vector<ForwardCache>(r));
  }
  Matrix table(B, 2 * c + r);
  Matrix aux_in(B, 1);
  for (int m = 1; m <= f.steps; ++m) {
    const Matrix& src = model.eigenvalue_source == EigenvalueSource::Predicted
                            ? f.rollout[m - 1]
                            : f.latent.middleRows(static_cast<Index>(m - 1) * B, B).eval();
    for (int k = 0; k < c; ++k) {
      aux_in.col(0) = src.col(2 * k).array().square() + src.col(2 * k + 1).array().square();
      if (record) {
        f.pair_caches[m][k] = forward(model.aux_pairs[k], aux_in);
        table.middleCols(2 * k, 2) = f.pair_caches[m][k].output();
      } else {
        table.middleCols(2 * k, 2) = evaluate(model.aux_pairs[k], aux_in);
      }
    }
    for (int j = 0; j < r; ++j) {
      aux_in.col(0) = src.col(2 * c + j);
      if (record) {
        f.real_caches[m][j] = forward(model.aux_reals[j], aux_in);
        table.col(2 * c + j) = f.real_caches[m][j].output().col(0);
      } else {
        table.col(2 * c + j) = evaluate(model.aux_reals[j], aux_in).col(0);
      }
    }
    f.rollout[m] = apply_K(model.spectrum, table, f.rollout[m - 1], model.dt);
    if (!f.rollout[m].allFinite())
      throw DivergenceError("latent rollout became non-finite at step " + std::to_string(m));
    if (record) f.eig_table[m] = table;
  }

  f.dec_in.resize((f.horizon + 1) * static_cast<Index>(B), p);
  for (int m = 0; m <= f.horizon; ++m)
    f.dec_in.middleRows(static_cast<Index>(m) * B, B) = f.rollout[m];
  f.decoded = evaluate(model.decoder, f.dec_in);

  const double per_state = 1.0 / (static_cast<double>(B) * static_cast<double>(n));
  f.first = measure(batch.snapshot(0) - f.decoded.topRows(B));
  f.terms.recon = f.first.sq_sum * per_state;
  f.terms.inf_first = f.first.max_abs;
  if (full) {
    double pred = 0.0;
    for (int m = 1; m <= f.horizon; ++m) {
      const Matrix diff = batch.snapshot(m) - f.decoded.middleRows(static_cast<Index>(m) * B, B);
      if (m == 1) {
        f.second = measure(diff);
        pred += f.second.sq_sum * per_state;
      } else {
        pred += diff.squaredNorm() * per_state;
      }
    }
    f.terms.pred = pred / f.horizon;
    f.terms.inf_second = f.second.max_abs;

    const double per_latent = 1.0 / (static_cast<double>(B) * static_cast<double>(p));
    double lin = 0.0;
    for (int m = 1; m <= f.steps; ++m)
      lin += (f.latent.middleRows(static_cast<Index>(m) * B, B) - f.rollout[m]).squaredNorm() *
             per_latent;
    f.terms.lin = lin / f.steps;
  }
  return f;
}

void add_weight_decay(const Mlp& mlp, MlpGrads& g, double coeff) {
  for (std::size_t k = 0; k < mlp.depth(); ++k) g.weight[k] += coeff * mlp.layer(k).weight;
}

}  // namespace

LossBreakdown compute_loss(const KoopmanModel& model, const TrajectoryBatch& batch,
                           const LossWeights& weights, LossTerms terms) {
  check_batch(model, batch, weights, terms);
  const ForwardPass f = run_forward(model, batch, weights, terms, false);
  return combine(f.terms, weight_sq_norm(model), weights, terms);
}

LossAndGradient compute_gradients(const KoopmanModel& model, const TrajectoryBatch& batch,
                                  const LossWeights& w, LossTerms terms) {
  check_batch(model, batch, w, terms);
  ForwardPass f = run_forward(model, batch, w, terms, true);

  LossAndGradient out;
  out.loss = combine(f.terms, weight_sq_norm(model), w, terms);
  if (!std::isfinite(out.loss.total)) throw DivergenceError("loss is not finite");
  out.grads = ModelGrads::zeros_like(model);

  const int B = f.count;
  const int c = model.spectrum.complex_pairs;
  const int r = model.spectrum.real_eigs;
  const Index n = model.state_dim();
  const Index p = model.latent_dim();
  const double dt = model.dt;
  const bool full = terms == LossTerms::Full;
  const double per_state = 1.0 / (static_cast<double>(B) * static_cast<double>(n));

  // Decoder outputs.
  Matrix d_dec = Matrix::Zero(f.decoded.rows(), n);
  d_dec.topRows(B) = (2.0 * w.alpha1 * per_state) * (f.decoded.topRows(B) - batch.snapshot(0));
  {
    // d|x - x_hat| / d x_hat = -sign(x - x_hat) at the (first) arg max.
    const Index i = f.first.argmax;
    const double resid = (batch.snapshot(0) - f.decoded.topRows(B)).eval().data()[i];
    const Index row = i % B, col = i / B;
    d_dec(row, col) += w.alpha2 * (resid > 0 ? -1.0 : (resid < 0 ? 1.0 : 0.0));
  }
  if (full) {
    const double coeff = 2.0 * w.alpha1 * per_state / f.horizon;
    for (int m = 1; m <= f.horizon; ++m) {
      const Index off = static_cast<Index>(m) * B;
      d_dec.middleRows(off, B) = coeff * (f.decoded.middleRows(off, B) - batch.snapshot(m));
    }
    const Index i = f.second.argmax;
    const double resid = (batch.snapshot(1) - f.decoded.middleRows(B, B)).eval().data()[i];
    const Index row = i % B, col = i / B;
    d_dec(B + row, col) += w.alpha2 * (resid > 0 ? -1.0 : (resid < 0 ? 1.0 : 0.0));
  }
  const Matrix d_dec_in = backward_recompute(model.decoder, f.dec_in, d_dec, out.grads.decoder);

  // Latent gradients: d_latent for encodings, d_roll for rollout states.
  Matrix d_latent = Matrix::Zero(f.latent.rows(), p);
  std::vector<Matrix> d_roll(f.steps + 1, Matrix::Zero(B, p));
  d_roll[0] = d_dec_in.topRows(B);
  if (full) {
    const double coeff = 2.0 / (static_cast<double>(B) * static_cast<double>(p) * f.steps);
    for (int m = 1; m <= f.steps; ++m) {
      const Index off = static_cast<Index>(m) * B;
      const Matrix g = coeff * (f.rollout[m] - f.latent.middleRows(off, B));
      d_roll[m] += g;
      d_latent.middleRows(off, B) -= g;
      if (m <= f.horizon) d_roll[m] += d_dec_in.middleRows(off, B);
    }
  }

  Matrix aux_grad(B, 2);
  Matrix d_src(B, p);
  for (int m = f.steps; m >= 1; --m) {
    const Matrix& g = d_roll[m];
    const Matrix& prev = f.rollout[m - 1];
    const Matrix& next = f.rollout[m];
    const Matrix& table = f.eig_table[m];
    const bool predicted = model.eigenvalue_source == EigenvalueSource::Predicted;
    const Matrix src = predicted ? prev : f.latent.middleRows(static_cast<Index>(m - 1) * B, B).eval();
    Matrix& d_prev = d_roll[m - 1];
    d_src.setZero();

    for (int k = 0; k < c; ++k) {
      const Eigen::ArrayXd scale = (table.col(2 * k).array() * dt).exp();
      const Eigen::ArrayXd angle = table.col(2 * k + 1).array() * dt;
      const Eigen::ArrayXd cs = scale * angle.cos();
      const Eigen::ArrayXd sn = scale * angle.sin();
      const auto ga = g.col(2 * k).array();
      const auto gb = g.col(2 * k + 1).array();
      const auto u = next.col(2 * k).array();
      const auto v = next.col(2 * k + 1).array();
      d_prev.col(2 * k).array() += cs * ga + sn * gb;
      d_prev.col(2 * k + 1).array() += cs * gb - sn * ga;
      aux_grad.col(0) = (dt * (ga * u + gb * v)).matrix();
      aux_grad.col(1) = (dt * (gb * u - ga * v)).matrix();
      const Matrix d_in = backward_into(model.aux_pairs[k], f.pair_caches[m][k], aux_grad,
                                        out.grads.aux_pairs[k], true);
      d_src.col(2 * k).array() += 2.0 * src.col(2 * k).array() * d_in.col(0).array();
      d_src.col(2 * k + 1).array() += 2.0 * src.col(2 * k + 1).array() * d_in.col(0).array();
    }
    for (int j = 0; j < r; ++j) {
      const Index col = 2 * c + j;
      const Eigen::ArrayXd e = (table.col(col).array() * dt).exp();
      d_prev.col(col).array() += e * g.col(col).array();
      const Matrix lam_grad = (dt * next.col(col).array() * g.col(col).array()).matrix();
      const Matrix d_in = backward_into(model.aux_reals[j], f.real_caches[m][j], lam_grad,
                                        out.grads.aux_reals[j], true);
      d_src.col(col) += d_in.col(0);
    }
    if (predicted) {
      d_prev += d_src;
    } else {
      d_latent.middleRows(static_cast<Index>(m - 1) * B, B) += d_src;
    }
  }
  d_latent.topRows(B) += d_roll[0];

  const auto enc_input = full ? batch.states.topRows(batch.states.rows()) : batch.snapshot(0);
  backward_recompute(model.encoder, enc_input, d_latent, out.grads.encoder, false, false);

  const double decay = 2.0 * w.alpha3;
  add_weight_decay(model.encoder, out.grads.encoder, decay);
  add_weight_decay(model.decoder, out.grads.decoder, decay);
  for (std::size_t k = 0; k < model.aux_pairs.size(); ++k)
    add_weight_decay(model.aux_pairs[k], out.grads.aux_pairs[k], decay);
  for (std::size_t j = 0; j < model.aux_reals.size(); ++j)
    add_weight_decay(model.aux_reals[j], out.grads.aux_reals[j], decay);
  return out;
}

LossBreakdown evaluate_dataset(const KoopmanModel& model, const Dataset& dataset,
                               const LossWeights& weights, std::size_t chunk, LossTerms terms) {
  if (dataset.size() == 0) throw ConfigError("cannot evaluate an empty dataset");
  if (chunk == 0) chunk = dataset.size();
  Terms sum;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < dataset.size(); start += chunk) {
    const std::size_t stop = std::min(dataset.size(), start + chunk);
    idx.clear();
    for (std::size_t i = start; i < stop; ++i) idx.push_back(i);
    const TrajectoryBatch batch = make_batch(dataset, idx);
    check_batch(model, batch, weights, terms);
    const ForwardPass f = run_forward(model, batch, weights, terms, false);
    const double share = static_cast<double>(stop - start);
    sum.recon += f.terms.recon * share;
    sum.pred += f.terms.pred * share;
    sum.lin += f.terms.lin * share;
    sum.inf_first = std::max(sum.inf_first, f.terms.inf_first);
    sum.inf_second = std::max(sum.inf_second, f.terms.inf_second);
  }
  const double total = static_cast<double>(dataset.size());
  sum.recon /= total;
  sum.pred /= total;
  sum.lin /= total;
  return combine(sum, weight_sq_norm(model), weights, terms);
}

}  // namespace koopnet

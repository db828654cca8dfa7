#include "koopnet/koopman.hpp"

#include <cmath>
#include <string>

#include "koopnet/error.hpp"
#include "koopnet/rng.hpp"

namespace koopnet {

void SpectrumConfig::validate() const {
  if (complex_pairs < 0 || real_eigs < 0)
    throw ArchitectureError("eigenvalue counts must be non-negative");
  if (latent_dim() < 1) throw ArchitectureError("latent dimension must be at least 1");
}

SpectrumConfig SpectrumConfig::for_system(SystemKind kind) {
  switch (kind) {
    case SystemKind::DiscreteSpectrum: return {0, 2};
    case SystemKind::Pendulum: return {1, 0};
    case SystemKind::FluidFlowOnAttractor: return {1, 0};
    case SystemKind::FluidFlowOffAttractor: return {1, 1};
  }
  return {};
}

Index KoopmanModel::parameter_count() const {
  Index n = encoder.parameter_count() + decoder.parameter_count();
  for (const auto& m : aux_pairs) n += m.parameter_count();
  for (const auto& m : aux_reals) n += m.parameter_count();
  return n;
}

void KoopmanModel::validate() const {
  spectrum.validate();
  encoder.validate();
  decoder.validate();
  const Index p = spectrum.latent_dim();
  if (encoder.out_dim() != p || decoder.in_dim() != p)
    throw ArchitectureError("encoder output and decoder input must equal the latent dimension");
  if (encoder.in_dim() != decoder.out_dim())
    throw ArchitectureError("decoder output must equal the encoder input");
  if (static_cast<int>(aux_pairs.size()) != spectrum.complex_pairs ||
      static_cast<int>(aux_reals.size()) != spectrum.real_eigs)
    throw ArchitectureError("auxiliary network count does not match the spectrum");
  for (const auto& m : aux_pairs) {
    m.validate();
    if (m.in_dim() != 1 || m.out_dim() != 2)
      throw ArchitectureError("pair auxiliary networks map 1 -> 2");
  }
  for (const auto& m : aux_reals) {
    m.validate();
    if (m.in_dim() != 1 || m.out_dim() != 1)
      throw ArchitectureError("real auxiliary networks map 1 -> 1");
  }
  if (!(dt > 0.0)) throw ArchitectureError("time step must be positive");
}

KoopmanModel make_model(const ModelArchitecture& arch, double dt, std::uint64_t seed,
                        std::string system) {
  arch.spectrum.validate();
  if (arch.state_dim < 1) throw ArchitectureError("state dimension must be positive");
  const Index n = arch.state_dim;
  const Index p = arch.spectrum.latent_dim();

  auto dims = [](Index in, const std::vector<Index>& hidden, Index out) {
    std::vector<Index> d{in};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(out);
    return d;
  };
  std::vector<Index> mirrored(arch.encoder_hidden.rbegin(), arch.encoder_hidden.rend());

  KoopmanModel m;
  m.spectrum = arch.spectrum;
  m.dt = dt;
  m.system = std::move(system);
  m.training.seed = seed;
  m.encoder = init_mlp(dims(n, arch.encoder_hidden, p), Rng::derive(seed, 0));
  m.decoder = init_mlp(dims(p, mirrored, n), Rng::derive(seed, 1));
  std::uint64_t stream = 2;
  for (int k = 0; k < arch.spectrum.complex_pairs; ++k)
    m.aux_pairs.push_back(init_mlp(dims(1, arch.aux_hidden, 2), Rng::derive(seed, stream++)));
  for (int j = 0; j < arch.spectrum.real_eigs; ++j)
    m.aux_reals.push_back(init_mlp(dims(1, arch.aux_hidden, 1), Rng::derive(seed, stream++)));
  m.validate();
  return m;
}

Matrix encode(const KoopmanModel& model, const Eigen::Ref<const Matrix>& x) {
  return evaluate(model.encoder, x);
}

Matrix decode(const KoopmanModel& model, const Eigen::Ref<const Matrix>& y) {
  return evaluate(model.decoder, y);
}

Matrix eigenvalue_table(const KoopmanModel& model, const Eigen::Ref<const Matrix>& y) {
  const int c = model.spectrum.complex_pairs;
  const int r = model.spectrum.real_eigs;
  if (y.cols() != model.latent_dim())
    throw ShapeError("latent rows have " + std::to_string(y.cols()) + " entries, expected " +
                     std::to_string(model.latent_dim()));
  Matrix table(y.rows(), 2 * c + r);
  Matrix input(y.rows(), 1);
  for (int k = 0; k < c; ++k) {
    input.col(0) = y.col(2 * k).array().square() + y.col(2 * k + 1).array().square();
    table.middleCols(2 * k, 2) = evaluate(model.aux_pairs[k], input);
  }
  for (int j = 0; j < r; ++j) {
    input.col(0) = y.col(2 * c + j);
    table.col(2 * c + j) = evaluate(model.aux_reals[j], input).col(0);
  }
  return table;
}

Eigenvalues eigenvalues_at(const KoopmanModel& model, const Vector& y) {
  const Matrix row = eigenvalue_table(model, y.transpose());
  Eigenvalues e;
  for (int k = 0; k < model.spectrum.complex_pairs; ++k)
    e.pairs.push_back({row(0, 2 * k), row(0, 2 * k + 1)});
  for (int j = 0; j < model.spectrum.real_eigs; ++j)
    e.reals.push_back(row(0, 2 * model.spectrum.complex_pairs + j));
  return e;
}

Eigen::Matrix2d jordan_block(double mu, double omega, double dt) {
  const double scale = std::exp(mu * dt);
  const double c = std::cos(omega * dt);
  const double s = std::sin(omega * dt);
  Eigen::Matrix2d b;
  b << c, -s, s, c;
  return scale * b;
}

Matrix build_K(const Eigenvalues& eigs, double dt) {
  const Index c = static_cast<Index>(eigs.pairs.size());
  const Index p = 2 * c + static_cast<Index>(eigs.reals.size());
  Matrix K = Matrix::Zero(p, p);
  for (Index k = 0; k < c; ++k)
    K.block<2, 2>(2 * k, 2 * k) = jordan_block(eigs.pairs[k].mu, eigs.pairs[k].omega, dt);
  for (std::size_t j = 0; j < eigs.reals.size(); ++j)
    K(2 * c + j, 2 * c + j) = std::exp(eigs.reals[j] * dt);
  return K;
}

Matrix apply_K(const SpectrumConfig& spectrum, const Eigen::Ref<const Matrix>& eig_table,
               const Eigen::Ref<const Matrix>& y, double dt) {
  const int c = spectrum.complex_pairs;
  const int r = spectrum.real_eigs;
  if (y.cols() != spectrum.latent_dim() || eig_table.cols() != 2 * c + r ||
      eig_table.rows() != y.rows())
    throw ShapeError("apply_K: eigenvalue table and latent rows do not match");
  Matrix out(y.rows(), y.cols());
  for (int k = 0; k < c; ++k) {
    const Eigen::ArrayXd scale = (eig_table.col(2 * k).array() * dt).exp();
    const Eigen::ArrayXd angle = eig_table.col(2 * k + 1).array() * dt;
    const Eigen::ArrayXd cs = scale * angle.cos();
    const Eigen::ArrayXd sn = scale * angle.sin();
    const auto ya = y.col(2 * k).array();
    const auto yb = y.col(2 * k + 1).array();
    out.col(2 * k) = (cs * ya - sn * yb).matrix();
    out.col(2 * k + 1) = (sn * ya + cs * yb).matrix();
  }
  for (int j = 0; j < r; ++j)
    out.col(2 * c + j) =
        ((eig_table.col(2 * c + j).array() * dt).exp() * y.col(2 * c + j).array()).matrix();
  return out;
}

Matrix advance_batch(const KoopmanModel& model, const Eigen::Ref<const Matrix>& y) {
  return apply_K(model.spectrum, eigenvalue_table(model, y), y, model.dt);
}

Vector advance(const KoopmanModel& model, const Vector& y) {
  if (y.size() != model.latent_dim()) throw ShapeError("advance: latent size mismatch");
  return advance_batch(model, y.transpose()).row(0).transpose();
}

std::vector<Matrix> latent_rollout_batch(const KoopmanModel& model,
                                         const Eigen::Ref<const Matrix>& y0, int m) {
  if (m < 1) throw DomainError("rollout length must be at least 1");
  std::vector<Matrix> out;
  out.reserve(m);
  Matrix y = y0;
  for (int step = 1; step <= m; ++step) {
    y = advance_batch(model, y);
    if (!y.allFinite())
      throw DivergenceError("latent rollout became non-finite at step " + std::to_string(step));
    out.push_back(y);
  }
  return out;
}

std::vector<Vector> latent_rollout(const KoopmanModel& model, const Vector& y0, int m) {
  if (y0.size() != model.latent_dim()) throw ShapeError("rollout: latent size mismatch");
  std::vector<Vector> out;
  for (const auto& row : latent_rollout_batch(model, y0.transpose(), m))
    out.push_back(row.row(0).transpose());
  return out;
}

Matrix predict_states(const KoopmanModel& model, const Vector& x0, int m) {
  if (x0.size() != model.state_dim()) throw ShapeError("predict_states: state size mismatch");
  const Matrix y0 = encode(model, x0.transpose());
  const auto steps = latent_rollout_batch(model, y0, m);
  Matrix latents(m, model.latent_dim());
  for (int i = 0; i < m; ++i) latents.row(i) = steps[i].row(0);
  return decode(model, latents);
}

ModelGrads ModelGrads::zeros_like(const KoopmanModel& model) {
  ModelGrads g;
  g.encoder = MlpGrads::zeros_like(model.encoder);
  g.decoder = MlpGrads::zeros_like(model.decoder);
  for (const auto& m : model.aux_pairs) g.aux_pairs.push_back(MlpGrads::zeros_like(m));
  for (const auto& m : model.aux_reals) g.aux_reals.push_back(MlpGrads::zeros_like(m));
  return g;
}

Vector pack_parameters(const KoopmanModel& model) {
  Vector flat(model.parameter_count());
  std::span<double> out(flat.data(), static_cast<std::size_t>(flat.size()));
  Index offset = write_parameters(model.encoder, out);
  offset += write_parameters(model.decoder, out.subspan(offset));
  for (const auto& m : model.aux_pairs) offset += write_parameters(m, out.subspan(offset));
  for (const auto& m : model.aux_reals) offset += write_parameters(m, out.subspan(offset));
  return flat;
}

void unpack_parameters(KoopmanModel& model, const Vector& flat) {
  if (flat.size() != model.parameter_count())
    throw ShapeError("flat parameter vector has the wrong length");
  std::span<const double> in(flat.data(), static_cast<std::size_t>(flat.size()));
  Index offset = read_parameters(model.encoder, in);
  offset += read_parameters(model.decoder, in.subspan(offset));
  for (auto& m : model.aux_pairs) offset += read_parameters(m, in.subspan(offset));
  for (auto& m : model.aux_reals) offset += read_parameters(m, in.subspan(offset));
}

Vector pack_gradients(const ModelGrads& grads, Index parameter_count) {
  Vector flat(parameter_count);
  std::span<double> out(flat.data(), static_cast<std::size_t>(flat.size()));
  Index offset = write_gradients(grads.encoder, out);
  offset += write_gradients(grads.decoder, out.subspan(offset));
  for (const auto& g : grads.aux_pairs) offset += write_gradients(g, out.subspan(offset));
  for (const auto& g : grads.aux_reals) offset += write_gradients(g, out.subspan(offset));
  if (offset != parameter_count) throw ShapeError("gradient layout does not match the model");
  return flat;
}

double weight_sq_norm(const KoopmanModel& model) {
  double s = weight_sq_norm(model.encoder) + weight_sq_norm(model.decoder);
  for (const auto& m : model.aux_pairs) s += weight_sq_norm(m);
  for (const auto& m : model.aux_reals) s += weight_sq_norm(m);
  return s;
}

void canonicalize_orientation(KoopmanModel& model, const Eigen::Ref<const Matrix>& states) {
  if (model.spectrum.complex_pairs == 0 || states.rows() == 0) return;
  const Matrix table = eigenvalue_table(model, encode(model, states));
  for (int k = 0; k < model.spectrum.complex_pairs; ++k) {
    if (table.col(2 * k + 1).mean() <= 0.0) continue;
    const Index coord = 2 * k + 1;
    // y -> R y with R = diag(1, -1) on the pair; R B(mu, w) R = B(mu, -w).
    DenseLayer& enc_out = model.encoder.layer(model.encoder.depth() - 1);
    enc_out.weight.row(coord) *= -1.0;
    enc_out.bias[coord] *= -1.0;
    model.decoder.layer(0).weight.col(coord) *= -1.0;
    DenseLayer& aux_out = model.aux_pairs[k].layer(model.aux_pairs[k].depth() - 1);
    aux_out.weight.row(1) *= -1.0;
    aux_out.bias[1] *= -1.0;
  }
}

}  // namespace koopnet

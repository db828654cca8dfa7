#include "koopnet/nnet.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "koopnet/error.hpp"
#include "koopnet/rng.hpp"

namespace koopnet {

std::string_view to_string(Activation a) {
  return a == Activation::ReLU ? "relu" : "linear";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "linear") return Activation::Linear;
  throw FormatError("unknown activation '" + std::string(name) + "'");
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

Index Mlp::in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
Index Mlp::out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

std::vector<Index> Mlp::dims() const {
  std::vector<Index> d;
  if (layers_.empty()) return d;
  d.push_back(in_dim());
  for (const auto& l : layers_) d.push_back(l.out_dim());
  return d;
}

Index Mlp::parameter_count() const {
  Index n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

void Mlp::validate() const {
  if (layers_.empty()) throw ArchitectureError("network has no layers");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    const std::string where = "layer " + std::to_string(k);
    if (l.in_dim() <= 0 || l.out_dim() <= 0)
      throw ArchitectureError(where + " has an empty weight matrix");
    if (l.bias.size() != l.out_dim())
      throw ArchitectureError(where + " bias length does not match its output width");
    if (k > 0 && l.in_dim() != layers_[k - 1].out_dim())
      throw ArchitectureError(where + " input width does not chain with the previous layer");
    const bool last = k + 1 == layers_.size();
    if (last && l.activation != Activation::Linear)
      throw ArchitectureError("output layer must be linear");
    if (!last && l.activation != Activation::ReLU)
      throw ArchitectureError(where + " is hidden and must use ReLU");
  }
}

Mlp init_mlp(std::span<const Index> dims, std::uint64_t seed) {
  if (dims.size() < 2)
    throw ArchitectureError("a network needs at least an input and an output width");
  for (Index d : dims)
    if (d <= 0) throw ArchitectureError("layer widths must be positive");

  Rng rng(seed);
  std::vector<DenseLayer> layers;
  layers.reserve(dims.size() - 1);
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    DenseLayer l;
    const double s = 1.0 / std::sqrt(static_cast<double>(dims[k]));
    l.weight.resize(dims[k + 1], dims[k]);
    for (Index i = 0; i < l.weight.rows(); ++i)
      for (Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = rng.uniform(-s, s);
    l.bias = Vector::Zero(dims[k + 1]);
    l.activation = k + 2 == dims.size() ? Activation::Linear : Activation::ReLU;
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers));
}

Mlp init_mlp(std::initializer_list<Index> dims, std::uint64_t seed) {
  return init_mlp(std::span<const Index>(dims.begin(), dims.size()), seed);
}

namespace {

void check_input(const Mlp& mlp, const Eigen::Ref<const Matrix>& x) {
  if (mlp.empty()) throw ArchitectureError("network has no layers");
  if (x.cols() != mlp.in_dim())
    throw ShapeError("input has " + std::to_string(x.cols()) + " features, network expects " +
                     std::to_string(mlp.in_dim()));
}

// Narrow inputs are streamed one output column at a time; a general matrix
// product spends most of its time packing and zero-filling for them.
constexpr Index kNarrowInput = 8;

void apply_layer(const DenseLayer& l, const Eigen::Ref<const Matrix>& in, Eigen::Ref<Matrix> out) {
  const bool relu = l.activation == Activation::ReLU;
  if (l.in_dim() <= kNarrowInput) {
    for (Index j = 0; j < l.out_dim(); ++j) {
      auto col = out.col(j);
      col.setConstant(l.bias[j]);
      for (Index i = 0; i < l.in_dim(); ++i) col += l.weight(j, i) * in.col(i);
      if (relu) col = col.cwiseMax(0.0);
    }
    return;
  }
  out.noalias() = in * l.weight.transpose();
  out.rowwise() += l.bias.transpose();
  if (relu) out = out.cwiseMax(0.0);
}

}  // namespace

Matrix evaluate(const Mlp& mlp, const Eigen::Ref<const Matrix>& x) {
  check_input(mlp, x);
  Matrix result(x.rows(), mlp.out_dim());
  Matrix a;
  Matrix b;
  for (Index r0 = 0; r0 < x.rows(); r0 += kRowBlock) {
    const Index rows = std::min(kRowBlock, x.rows() - r0);
    const auto in = x.middleRows(r0, rows);
    if (mlp.depth() == 1) {
      apply_layer(mlp.layer(0), in, result.middleRows(r0, rows));
      continue;
    }
    a.resize(rows, mlp.layer(0).out_dim());
    apply_layer(mlp.layer(0), in, a);
    for (std::size_t k = 1; k + 1 < mlp.depth(); ++k) {
      b.resize(rows, mlp.layer(k).out_dim());
      apply_layer(mlp.layer(k), a, b);
      std::swap(a, b);
    }
    apply_layer(mlp.layers().back(), a, result.middleRows(r0, rows));
  }
  return result;
}

ForwardCache forward(const Mlp& mlp, const Eigen::Ref<const Matrix>& x) {
  check_input(mlp, x);
  ForwardCache cache;
  cache.activations.resize(mlp.depth() + 1);
  cache.activations[0] = x;
  for (std::size_t k = 0; k < mlp.depth(); ++k) {
    Matrix& out = cache.activations[k + 1];
    out.resize(x.rows(), mlp.layer(k).out_dim());
    // Same row blocks as evaluate(), so both give bit-identical outputs.
    for (Index r0 = 0; r0 < x.rows(); r0 += kRowBlock) {
      const Index rows = std::min(kRowBlock, x.rows() - r0);
      apply_layer(mlp.layer(k), cache.activations[k].middleRows(r0, rows),
                  out.middleRows(r0, rows));
    }
  }
  return cache;
}

MlpGrads MlpGrads::zeros_like(const Mlp& mlp) {
  MlpGrads g;
  for (const auto& l : mlp.layers()) {
    g.weight.push_back(Matrix::Zero(l.out_dim(), l.in_dim()));
    g.bias.push_back(Vector::Zero(l.out_dim()));
  }
  return g;
}

void MlpGrads::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

MlpGrads& MlpGrads::operator+=(const MlpGrads& other) {
  for (std::size_t k = 0; k < weight.size(); ++k) {
    weight[k] += other.weight[k];
    bias[k] += other.bias[k];
  }
  return *this;
}

MlpGrads& MlpGrads::operator*=(double s) {
  for (std::size_t k = 0; k < weight.size(); ++k) {
    weight[k] *= s;
    bias[k] *= s;
  }
  return *this;
}

Matrix backward_into(const Mlp& mlp, const ForwardCache& cache,
                     const Eigen::Ref<const Matrix>& grad_out, MlpGrads& grads, bool accumulate,
                     bool need_input_grad) {
  if (cache.activations.size() != mlp.depth() + 1)
    throw CacheError("cache depth does not match the network");
  const Index batch = cache.batch_size();
  for (std::size_t k = 0; k <= mlp.depth(); ++k) {
    const Index width = k == 0 ? mlp.in_dim() : mlp.layer(k - 1).out_dim();
    if (cache.activations[k].rows() != batch || cache.activations[k].cols() != width)
      throw CacheError("cache shapes do not match the network");
  }
  if (grad_out.rows() != batch || grad_out.cols() != mlp.out_dim())
    throw ShapeError("output gradient is not shaped like the forward output");

  if (grads.weight.size() != mlp.depth()) {
    grads = MlpGrads::zeros_like(mlp);
  } else if (!accumulate) {
    grads.set_zero();
  }

  Matrix delta = grad_out;
  Matrix next;
  for (std::size_t k = mlp.depth(); k-- > 0;) {
    const DenseLayer& l = mlp.layer(k);
    const Matrix& act_in = cache.activations[k];
    const bool relu = l.activation == Activation::ReLU;
    const bool want_next = k > 0 || need_input_grad;
    if (l.in_dim() <= kNarrowInput) {
      if (want_next) next.setZero(delta.rows(), l.in_dim());
      for (Index j = 0; j < l.out_dim(); ++j) {
        auto d = delta.col(j);
        // d relu / dz is 0 at z = 0, and stored outputs are 0 exactly there.
        if (relu) d = (cache.activations[k + 1].col(j).array() > 0.0).select(d, 0.0);
        grads.bias[k][j] += d.sum();
        for (Index i = 0; i < l.in_dim(); ++i) {
          grads.weight[k](j, i) += d.dot(act_in.col(i));
          if (want_next) next.col(i) += l.weight(j, i) * d;
        }
      }
      if (want_next) std::swap(delta, next);
      continue;
    }
    if (relu) delta = (cache.activations[k + 1].array() > 0.0).select(delta, 0.0);
    grads.bias[k].noalias() += delta.colwise().sum().transpose();
    if (l.out_dim() <= kNarrowInput) {
      for (Index j = 0; j < l.out_dim(); ++j)
        grads.weight[k].row(j).noalias() += delta.col(j).transpose() * act_in;
      if (want_next) {
        next.resize(delta.rows(), l.in_dim());
        next.noalias() = delta.lazyProduct(l.weight);
        std::swap(delta, next);
      }
      continue;
    }
    grads.weight[k].noalias() += delta.transpose() * act_in;
    if (want_next) {
      next.resize(delta.rows(), l.in_dim());
      next.noalias() = delta * l.weight;
      std::swap(delta, next);
    }
  }
  if (!need_input_grad) return {};
  return delta;
}

Matrix backward_recompute(const Mlp& mlp, const Eigen::Ref<const Matrix>& x,
                          const Eigen::Ref<const Matrix>& grad_out, MlpGrads& grads,
                          bool accumulate, bool need_input_grad) {
  check_input(mlp, x);
  if (grad_out.rows() != x.rows() || grad_out.cols() != mlp.out_dim())
    throw ShapeError("output gradient is not shaped like the forward output");
  if (grads.weight.size() != mlp.depth()) {
    grads = MlpGrads::zeros_like(mlp);
  } else if (!accumulate) {
    grads.set_zero();
  }
  Matrix grad_in;
  if (need_input_grad) grad_in.resize(x.rows(), mlp.in_dim());
  for (Index r0 = 0; r0 < x.rows(); r0 += kRowBlock) {
    const Index rows = std::min(kRowBlock, x.rows() - r0);
    const ForwardCache cache = forward(mlp, x.middleRows(r0, rows));
    Matrix g = backward_into(mlp, cache, grad_out.middleRows(r0, rows), grads, true,
                             need_input_grad);
    if (need_input_grad) grad_in.middleRows(r0, rows) = g;
  }
  return grad_in;
}

BackwardResult backward(const Mlp& mlp, const ForwardCache& cache,
                        const Eigen::Ref<const Matrix>& grad_out) {
  BackwardResult r;
  r.grads = MlpGrads::zeros_like(mlp);
  r.grad_in = backward_into(mlp, cache, grad_out, r.grads, false, true);
  return r;
}

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index write_matrix(const Matrix& m, std::span<double> out) {
  Eigen::Map<RowMajor>(out.data(), m.rows(), m.cols()) = m;
  return m.size();
}

}  // namespace

Index write_parameters(const Mlp& mlp, std::span<double> out) {
  if (static_cast<Index>(out.size()) < mlp.parameter_count())
    throw ShapeError("parameter buffer too small");
  Index offset = 0;
  for (const auto& l : mlp.layers()) {
    offset += write_matrix(l.weight, out.subspan(offset));
    Eigen::Map<Vector>(out.data() + offset, l.bias.size()) = l.bias;
    offset += l.bias.size();
  }
  return offset;
}

Index read_parameters(Mlp& mlp, std::span<const double> in) {
  if (static_cast<Index>(in.size()) < mlp.parameter_count())
    throw ShapeError("parameter buffer too small");
  Index offset = 0;
  for (std::size_t k = 0; k < mlp.depth(); ++k) {
    DenseLayer& l = mlp.layer(k);
    l.weight = Eigen::Map<const RowMajor>(in.data() + offset, l.out_dim(), l.in_dim());
    offset += l.weight.size();
    l.bias = Eigen::Map<const Vector>(in.data() + offset, l.out_dim());
    offset += l.bias.size();
  }
  return offset;
}

Index write_gradients(const MlpGrads& grads, std::span<double> out) {
  Index offset = 0;
  for (std::size_t k = 0; k < grads.weight.size(); ++k) {
    if (static_cast<Index>(out.size()) < offset + grads.weight[k].size() + grads.bias[k].size())
      throw ShapeError("gradient buffer too small");
    offset += write_matrix(grads.weight[k], out.subspan(offset));
    Eigen::Map<Vector>(out.data() + offset, grads.bias[k].size()) = grads.bias[k];
    offset += grads.bias[k].size();
  }
  return offset;
}

double weight_sq_norm(const Mlp& mlp) {
  double s = 0.0;
  for (const auto& l : mlp.layers()) s += l.weight.squaredNorm();
  return s;
}

void adam_step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads, AdamState& state,
               double learning_rate) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw ShapeError("adam: parameter, gradient and moment sizes differ");
  if (!(learning_rate > 0.0)) throw DomainError("adam: learning rate must be positive");
  if (!grads.allFinite()) throw DivergenceError("adam: non-finite gradient");

  const AdamConfig& c = state.config;
  state.step += 1;
  state.first_moment = c.beta1 * state.first_moment + (1.0 - c.beta1) * grads;
  state.second_moment =
      c.beta2 * state.second_moment + (1.0 - c.beta2) * grads.array().square().matrix();
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  params.array() -= learning_rate * (state.first_moment.array() / correct1) /
                    ((state.second_moment.array() / correct2).sqrt() + c.epsilon);
}

GradientCheck finite_diff_check(const Objective& loss, const Vector& params,
                                const Vector& analytic, double step, double scale_floor) {
  if (analytic.size() != params.size())
    throw ShapeError("analytic gradient length differs from the parameter count");
  GradientCheck result;
  Vector p = params;
  for (Index i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + step;
    const double up = loss(p);
    p[i] = saved - step;
    const double down = loss(p);
    p[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[i];
    if (!std::isfinite(numeric) || !std::isfinite(a)) {
      result.max_relative_error = std::numeric_limits<double>::quiet_NaN();
      result.worst_index = i;
      result.analytic = a;
      result.numeric = numeric;
      return result;
    }
    const double denom = std::max({std::abs(a), std::abs(numeric), scale_floor});
    const double err = std::abs(a - numeric) / denom;
    if (err > result.max_relative_error || result.worst_index < 0) {
      result.max_relative_error = std::max(err, result.max_relative_error);
      result.worst_index = i;
      result.analytic = a;
      result.numeric = numeric;
    }
  }
  return result;
}

}  // namespace koopnet

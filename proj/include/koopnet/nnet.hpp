#pragma once

// Dense feed-forward networks with hand-written reverse-mode rules, the Adam
// update, and a central-difference gradient checker.
//
// Batches are row-per-example: an input batch of B examples for a network
// with input width n is a B x n matrix.

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace koopnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Activation { ReLU, Linear };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct DenseLayer {
  Matrix weight;  // out_dim x in_dim
  Vector bias;    // out_dim
  Activation activation = Activation::Linear;

  Index in_dim() const { return weight.cols(); }
  Index out_dim() const { return weight.rows(); }
};

/// Ordered stack of dense layers. Hidden layers are ReLU and the output layer
/// is linear; the constructor rejects anything else.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t depth() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

  /// Mutable access for parameter edits. Callers must keep the shapes.
  DenseLayer& layer(std::size_t k) { return layers_.at(k); }
  const DenseLayer& layer(std::size_t k) const { return layers_.at(k); }

  Index in_dim() const;
  Index out_dim() const;
  /// Widths from input to output, e.g. {2, 30, 30, 2}.
  std::vector<Index> dims() const;
  Index parameter_count() const;

  /// Throws ArchitectureError if any invariant is broken.
  void validate() const;

 private:
  std::vector<DenseLayer> layers_;
};

/// Uniform [-1/sqrt(a), 1/sqrt(a)] weights (a = layer input width), zero
/// biases, ReLU hidden layers, linear output. Deterministic in `seed`.
Mlp init_mlp(std::span<const Index> dims, std::uint64_t seed);
Mlp init_mlp(std::initializer_list<Index> dims, std::uint64_t seed);

/// Layer outputs recorded by a forward pass. activations[0] is the input and
/// activations[k + 1] is the (post-activation) output of layer k; ReLU masks
/// are recovered from the stored outputs.
struct ForwardCache {
  std::vector<Matrix> activations;

  const Matrix& output() const { return activations.back(); }
  Index batch_size() const { return activations.empty() ? 0 : activations.front().rows(); }
};

/// Rows are pushed through the network in blocks of this many so that hidden
/// activations stay cache-resident.
inline constexpr Index kRowBlock = 512;

/// Output of the network without recording intermediates.
Matrix evaluate(const Mlp& mlp, const Eigen::Ref<const Matrix>& x);

/// Forward pass recording everything backward() needs.
ForwardCache forward(const Mlp& mlp, const Eigen::Ref<const Matrix>& x);

struct MlpGrads {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  static MlpGrads zeros_like(const Mlp& mlp);
  void set_zero();
  MlpGrads& operator+=(const MlpGrads& other);
  MlpGrads& operator*=(double s);
};

/// Reverse pass for a cache produced by forward(mlp, x). Writes (or adds,
/// when `accumulate` is set) parameter gradients into `grads` and returns the
/// gradient with respect to the input. With `need_input_grad` false the
/// returned matrix is empty and the first layer's input product is skipped.
Matrix backward_into(const Mlp& mlp, const ForwardCache& cache,
                     const Eigen::Ref<const Matrix>& grad_out, MlpGrads& grads,
                     bool accumulate = false, bool need_input_grad = true);

/// Same result as forward() followed by backward_into(), but activations are
/// recomputed block by block instead of stored. Parameter gradients are summed
/// block-wise, so they can differ from backward_into() in the last bits.
Matrix backward_recompute(const Mlp& mlp, const Eigen::Ref<const Matrix>& x,
                          const Eigen::Ref<const Matrix>& grad_out, MlpGrads& grads,
                          bool accumulate = false, bool need_input_grad = true);

struct BackwardResult {
  MlpGrads grads;
  Matrix grad_in;
};

BackwardResult backward(const Mlp& mlp, const ForwardCache& cache,
                        const Eigen::Ref<const Matrix>& grad_out);

// Flat parameter layout: for each layer, the weight matrix in row-major order
// followed by the bias.
Index write_parameters(const Mlp& mlp, std::span<double> out);
Index read_parameters(Mlp& mlp, std::span<const double> in);
Index write_gradients(const MlpGrads& grads, std::span<double> out);

/// Sum of squared weight entries (biases excluded).
double weight_sq_norm(const Mlp& mlp);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  std::int64_t step = 0;
  AdamConfig config;

  AdamState() = default;
  explicit AdamState(Index n, AdamConfig cfg = {})
      : first_moment(Vector::Zero(n)), second_moment(Vector::Zero(n)), config(cfg) {}
};

/// One bias-corrected Adam update, in place. Throws DivergenceError (and
/// leaves everything untouched) if any gradient entry is non-finite.
void adam_step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grads,
               AdamState& state, double learning_rate);

using Objective = std::function<double(const Vector&)>;

struct GradientCheck {
  double max_relative_error = 0.0;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Default denominator floor for relative gradient errors.
inline constexpr double kGradientScaleFloor = 1e-6;

/// Central differences of `loss` around `params` compared with `analytic`.
/// The per-coordinate error is |a - n| / max(|a|, |n|, scale_floor); a
/// non-finite value anywhere yields NaN.
GradientCheck finite_diff_check(const Objective& loss, const Vector& params,
                                const Vector& analytic, double step = 1e-5,
                                double scale_floor = kGradientScaleFloor);

}  // namespace koopnet

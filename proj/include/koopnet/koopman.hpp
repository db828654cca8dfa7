#pragma once

// Koopman autoencoder: encoder/decoder networks, auxiliary eigenvalue
// networks, the block-diagonal propagator and latent/state rollouts.
//
// Latent layout: complex pair k occupies coordinates (2k, 2k+1); real
// eigenvalue j occupies coordinate 2c + j.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "koopnet/dynamics.hpp"
#include "koopnet/nnet.hpp"

namespace koopnet {

struct SpectrumConfig {
  int complex_pairs = 0;
  int real_eigs = 0;

  int latent_dim() const { return 2 * complex_pairs + real_eigs; }
  void validate() const;

  /// Pendulum and fluid1: one pair. Discrete spectrum: two reals.
  /// Fluid2: one pair and one real.
  static SpectrumConfig for_system(SystemKind kind);

  bool operator==(const SpectrumConfig&) const = default;
};

struct ComplexEigenvalue {
  double mu = 0.0;     // continuous-time growth rate
  double omega = 0.0;  // continuous-time frequency
};

struct Eigenvalues {
  std::vector<ComplexEigenvalue> pairs;
  std::vector<double> reals;
};

/// Latent state on which the propagator's eigenvalues are evaluated at each
/// rollout step: the previous prediction, or the encoding of the true state.
enum class EigenvalueSource { Predicted, Encoded };

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::int64_t steps = 0;
  double best_validation_loss = std::numeric_limits<double>::quiet_NaN();
};

struct ModelArchitecture {
  int state_dim = 0;
  SpectrumConfig spectrum;
  std::vector<Index> encoder_hidden;  // the decoder mirrors these widths
  std::vector<Index> aux_hidden;      // shared by every auxiliary network
};

struct KoopmanModel {
  Mlp encoder;                 // state_dim -> latent_dim
  Mlp decoder;                 // latent_dim -> state_dim
  std::vector<Mlp> aux_pairs;  // squared pair radius -> (mu, omega)
  std::vector<Mlp> aux_reals;  // latent coordinate -> lambda
  SpectrumConfig spectrum;
  double dt = 0.0;
  std::string system;
  EigenvalueSource eigenvalue_source = EigenvalueSource::Predicted;
  TrainingMetadata training;

  int state_dim() const { return static_cast<int>(encoder.in_dim()); }
  int latent_dim() const { return spectrum.latent_dim(); }
  Index parameter_count() const;
  void validate() const;
};

KoopmanModel make_model(const ModelArchitecture& arch, double dt, std::uint64_t seed,
                        std::string system = {});

Matrix encode(const KoopmanModel& model, const Eigen::Ref<const Matrix>& x);
Matrix decode(const KoopmanModel& model, const Eigen::Ref<const Matrix>& y);

Eigenvalues eigenvalues_at(const KoopmanModel& model, const Vector& y);

/// Batched eigenvalues: one row per latent row, columns
/// (mu_1, omega_1, ..., mu_c, omega_c, lambda_1, ..., lambda_r).
Matrix eigenvalue_table(const KoopmanModel& model, const Eigen::Ref<const Matrix>& y);

/// 2x2 block exp(mu dt) [[cos(omega dt), -sin(omega dt)], [sin(omega dt), cos(omega dt)]].
Eigen::Matrix2d jordan_block(double mu, double omega, double dt);

/// Block-diagonal propagator: pair blocks first, then exp(lambda dt) scalars.
Matrix build_K(const Eigenvalues& eigs, double dt);

/// Row-wise propagation of latent rows `y` with per-row eigenvalues taken
/// from an eigenvalue_table.
Matrix apply_K(const SpectrumConfig& spectrum, const Eigen::Ref<const Matrix>& eig_table,
               const Eigen::Ref<const Matrix>& y, double dt);

Vector advance(const KoopmanModel& model, const Vector& y);
Matrix advance_batch(const KoopmanModel& model, const Eigen::Ref<const Matrix>& y);

/// y_1..y_m from y0, re-evaluating eigenvalues on each predicted state.
/// Throws DivergenceError on a non-finite intermediate.
std::vector<Vector> latent_rollout(const KoopmanModel& model, const Vector& y0, int m);
std::vector<Matrix> latent_rollout_batch(const KoopmanModel& model,
                                         const Eigen::Ref<const Matrix>& y0, int m);

/// Decoded rollout from x0: an m x state_dim matrix of x_hat_1..x_hat_m.
Matrix predict_states(const KoopmanModel& model, const Vector& x0, int m);

/// Gradients shaped like a model's networks.
struct ModelGrads {
  MlpGrads encoder;
  MlpGrads decoder;
  std::vector<MlpGrads> aux_pairs;
  std::vector<MlpGrads> aux_reals;

  static ModelGrads zeros_like(const KoopmanModel& model);
};

// Flat layout: encoder, decoder, pair nets, real nets (see write_parameters).
Vector pack_parameters(const KoopmanModel& model);
void unpack_parameters(KoopmanModel& model, const Vector& flat);
Vector pack_gradients(const ModelGrads& grads, Index parameter_count);

/// Sum of squared weight entries over every network, biases excluded.
double weight_sq_norm(const KoopmanModel& model);

/// Reflects each complex pair's second latent coordinate where needed so
/// that the pair's mean frequency over the encodings of `states` is
/// non-positive. The reflected model makes identical state predictions.
void canonicalize_orientation(KoopmanModel& model, const Eigen::Ref<const Matrix>& states);

inline constexpr int kModelFormatVersion = 1;
std::string model_to_json(const KoopmanModel& model);
KoopmanModel model_from_json(const std::string& text);
void save_model(const KoopmanModel& model, const std::filesystem::path& path);
KoopmanModel load_model(const std::filesystem::path& path);

}  // namespace koopnet

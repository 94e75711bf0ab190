#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "avalign/onset.hpp"

namespace avalign::kernels {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// L x D frame features (one row per video frame).
using FeatureSeq = Matrix;
/// Latent tensors (z0, zt, eps, eps_hat) flattened to a matrix.
using Latent = Matrix;

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy between onset pseudo-labels and predicted
/// probabilities; predictions are clamped to [kBceClamp, 1 - kBceClamp].
double onset_bce(const OnsetLabels& labels, std::span<const double> predictions);
double onset_bce(std::span<const unsigned char> labels, std::span<const double> predictions);

// ---------------------------------------------------------------------------
// Attentive pooling
// ---------------------------------------------------------------------------

struct AttentivePoolParams {
  Matrix local_proj;    ///< H x D, applied before the ReLU
  Vector local_score;   ///< H, scores the rectified projection
  Matrix query_proj;    ///< P x D, left side of the cosine cross potential
  Matrix key_proj;      ///< P x D, right side of the cosine cross potential
  double local_scale = 1.0;
  double cross_scale = 1.0;

  /// Throws Error(invalid_argument) if shapes disagree with `feature_dim` or
  /// any entry is non-finite.
  void validate(Eigen::Index feature_dim) const;
};

struct PoolResult {
  Vector pooled;         ///< D, convex combination of feature rows
  Vector weights;        ///< L, softmax distribution over frames
  Vector local_potential;
  Vector cross_potential;
};

/// weights = softmax(local_scale * theta_l + cross_scale * theta_c) with
///   theta_l(u) = local_score . relu(local_proj x_u)
///   theta_c(u) = sum_i cos(query_proj x_u, key_proj x_i)
/// where a zero vector normalises to the zero vector.
PoolResult attentive_pool(const FeatureSeq& features, const AttentivePoolParams& params);

struct PoolGradients {
  Matrix local_proj;
  Vector local_score;
  Matrix query_proj;
  Matrix key_proj;
  double local_scale = 0.0;
  double cross_scale = 0.0;
};

/// Analytic gradients of ||pooled||^2 with respect to every parameter.
PoolGradients attentive_pool_grad(const FeatureSeq& features, const AttentivePoolParams& params);

/// Loss used by attentive_pool_grad: squared norm of the pooled vector.
double attentive_pool_loss(const FeatureSeq& features, const AttentivePoolParams& params);

// ---------------------------------------------------------------------------
// Global/local feature shaping and conditioning
// ---------------------------------------------------------------------------

/// K global tokens from one pooled vector: row k is the pooled vector
/// cross-correlated with kernel bank k (odd width, zero padding, stride 1).
/// `banks` is K x kernel_width.
Matrix project_global(const Vector& pooled, const Matrix& banks);

inline constexpr int kContextWindows[] = {1, 2, 4, 8};

/// Causal moving averages over the last w in {1, 2, 4, 8} rows (fewer at the
/// start of the sequence), concatenated along features: T' x 4D.
Matrix expand_context(const Matrix& aligned);

/// Row-wise concatenation [text; video]. Throws on dimension mismatch.
Matrix concat_condition(const Matrix& text, const Matrix& global_video);

/// Null text embedding used for the unconditional branch: zeros.
Matrix null_text_embedding(Eigen::Index tokens, Eigen::Index dim);

// ---------------------------------------------------------------------------
// Diffusion
// ---------------------------------------------------------------------------

class NoiseSchedule {
 public:
  /// Throws unless every beta is in (0, 1).
  explicit NoiseSchedule(std::vector<double> betas);

  /// Linearly spaced betas (the usual DDPM default is 1e-4 .. 2e-2 over 1000).
  static NoiseSchedule linear(double beta_start = 1e-4, double beta_end = 2e-2,
                              std::size_t steps = 1000);

  std::size_t steps() const noexcept { return betas_.size(); }
  std::span<const double> betas() const noexcept { return betas_; }
  std::span<const double> alpha_bars() const noexcept { return alpha_bars_; }
  /// Cumulative product up to step t, 1-based.
  double alpha_bar(std::size_t t) const;

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps, with 1 <= t <= steps.
Latent forward_noise(const Latent& z0, std::size_t t, const NoiseSchedule& schedule,
                     const Latent& eps);

/// Mean squared error over all elements.
double diffusion_loss(const Latent& eps, const Latent& eps_hat);

/// Classifier-free guidance: w * cond + (1 - w) * uncond.
Latent cfg_combine(const Latent& cond_eps, const Latent& uncond_eps, double guidance_scale);

inline constexpr double kDefaultGuidanceScale = 3.0;

}  // namespace avalign::kernels

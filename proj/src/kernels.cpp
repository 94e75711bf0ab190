#include "avalign/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "avalign/error.hpp"

namespace avalign::kernels {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorKind::invalid_argument,
                std::string(what) + ": shape " + shape(a) + " vs " + shape(b));
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorKind::invalid_argument, std::string(what) + " has non-finite entries");
}

}  // namespace

double onset_bce(std::span<const unsigned char> labels, std::span<const double> predictions) {
  if (labels.size() != predictions.size())
    throw Error(ErrorKind::invalid_argument,
                "onset_bce: " + std::to_string(labels.size()) + " labels vs " +
                    std::to_string(predictions.size()) + " predictions");
  if (labels.empty()) throw Error(ErrorKind::invalid_argument, "onset_bce: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(predictions[i]))
      throw Error(ErrorKind::invalid_argument, "onset_bce: non-finite prediction");
    const double p = std::clamp(predictions[i], kBceClamp, 1.0 - kBceClamp);
    const double y = labels[i] ? 1.0 : 0.0;
    sum += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return -sum / static_cast<double>(labels.size());
}

double onset_bce(const OnsetLabels& labels, std::span<const double> predictions) {
  return onset_bce(labels.labels(), predictions);
}

void AttentivePoolParams::validate(Eigen::Index feature_dim) const {
  const auto fail = [](const std::string& what) { throw Error(ErrorKind::invalid_argument, "attentive_pool: " + what); };
  if (local_proj.rows() < 1 || local_proj.cols() != feature_dim)
    fail("local_proj is " + shape(local_proj) + ", expected Hx" + std::to_string(feature_dim));
  if (local_score.size() != local_proj.rows())
    fail("local_score has " + std::to_string(local_score.size()) + " entries, expected " +
         std::to_string(local_proj.rows()));
  if (query_proj.rows() < 1 || query_proj.cols() != feature_dim)
    fail("query_proj is " + shape(query_proj) + ", expected Px" + std::to_string(feature_dim));
  if (key_proj.rows() != query_proj.rows() || key_proj.cols() != feature_dim)
    fail("key_proj is " + shape(key_proj) + ", expected " + shape(query_proj));
  if (!local_proj.allFinite() || !local_score.allFinite() || !query_proj.allFinite() ||
      !key_proj.allFinite() || !std::isfinite(local_scale) || !std::isfinite(cross_scale))
    fail("non-finite parameter");
}

namespace {

// Forward pass with the intermediates the backward pass needs.
struct PoolTrace {
  Matrix local_pre;    // L x H, local_proj x_u
  Matrix query;        // L x P, raw
  Matrix query_unit;   // L x P, normalised (zero stays zero)
  Vector query_norm;   // L
  Matrix key;          // L x P
  Matrix key_unit;
  Vector key_norm;
  Vector key_sum;      // P, sum over frames of key_unit
  PoolResult result;
};

void normalise_rows(const Matrix& raw, Matrix& unit, Vector& norms) {
  unit = raw;
  norms = raw.rowwise().norm();
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    if (norms(i) > 0.0) unit.row(i) /= norms(i);
    else unit.row(i).setZero();
  }
}

PoolTrace forward(const FeatureSeq& x, const AttentivePoolParams& p) {
  if (x.rows() < 1 || x.cols() < 1) throw Error(ErrorKind::invalid_argument, "attentive_pool: empty features");
  require_finite(x, "attentive_pool features");
  p.validate(x.cols());

  PoolTrace tr;
  tr.local_pre = x * p.local_proj.transpose();
  tr.result.local_potential = tr.local_pre.cwiseMax(0.0) * p.local_score;

  tr.query = x * p.query_proj.transpose();
  tr.key = x * p.key_proj.transpose();
  normalise_rows(tr.query, tr.query_unit, tr.query_norm);
  normalise_rows(tr.key, tr.key_unit, tr.key_norm);
  tr.key_sum = tr.key_unit.colwise().sum().transpose();
  tr.result.cross_potential = tr.query_unit * tr.key_sum;

  const Vector logits = p.local_scale * tr.result.local_potential + p.cross_scale * tr.result.cross_potential;
  const Vector shifted = (logits.array() - logits.maxCoeff()).exp();
  tr.result.weights = shifted / shifted.sum();
  tr.result.pooled = x.transpose() * tr.result.weights;
  return tr;
}

// Backward of u = v / ||v|| (u = 0 when v = 0).
Vector unit_backward(const Vector& unit, double norm, const Vector& grad_unit) {
  if (!(norm > 0.0)) return Vector::Zero(unit.size());
  return (grad_unit - unit * unit.dot(grad_unit)) / norm;
}

}  // namespace

PoolResult attentive_pool(const FeatureSeq& features, const AttentivePoolParams& params) {
  return forward(features, params).result;
}

double attentive_pool_loss(const FeatureSeq& features, const AttentivePoolParams& params) {
  return attentive_pool(features, params).pooled.squaredNorm();
}

PoolGradients attentive_pool_grad(const FeatureSeq& x, const AttentivePoolParams& p) {
  const PoolTrace tr = forward(x, p);
  const Vector& w = tr.result.weights;
  const Eigen::Index frames = x.rows();

  // d loss / d pooled, then through the convex combination and softmax.
  const Vector grad_pooled = 2.0 * tr.result.pooled;
  const Vector grad_w = x * grad_pooled;
  const Vector grad_logits = w.cwiseProduct(grad_w.array().matrix() - Vector::Constant(frames, w.dot(grad_w)));

  PoolGradients g;
  g.local_scale = grad_logits.dot(tr.result.local_potential);
  g.cross_scale = grad_logits.dot(tr.result.cross_potential);

  // Local potential.
  const Vector grad_local = p.local_scale * grad_logits;
  const Matrix relu = tr.local_pre.cwiseMax(0.0);
  g.local_score = relu.transpose() * grad_local;
  Matrix grad_pre = grad_local * p.local_score.transpose();  // L x H
  grad_pre = grad_pre.cwiseProduct((tr.local_pre.array() > 0.0).cast<double>().matrix());
  g.local_proj = grad_pre.transpose() * x;

  // Cross potential.
  const Vector grad_cross = p.cross_scale * grad_logits;
  const Vector grad_key_sum = tr.query_unit.transpose() * grad_cross;  // P
  Matrix grad_query(frames, tr.query.cols());
  Matrix grad_key(frames, tr.key.cols());
  for (Eigen::Index u = 0; u < frames; ++u) {
    grad_query.row(u) = unit_backward(tr.query_unit.row(u).transpose(), tr.query_norm(u),
                                      grad_cross(u) * tr.key_sum).transpose();
    grad_key.row(u) = unit_backward(tr.key_unit.row(u).transpose(), tr.key_norm(u), grad_key_sum).transpose();
  }
  g.query_proj = grad_query.transpose() * x;
  g.key_proj = grad_key.transpose() * x;
  return g;
}

Matrix project_global(const Vector& pooled, const Matrix& banks) {
  if (banks.rows() < 1) throw Error(ErrorKind::invalid_argument, "project_global: K must be >= 1");
  const Eigen::Index width = banks.cols();
  if (width < 1 || width % 2 == 0)
    throw Error(ErrorKind::invalid_argument, "project_global: kernel width must be odd");
  const Eigen::Index dim = pooled.size();
  if (width > dim)
    throw Error(ErrorKind::invalid_argument, "project_global: kernel width " + std::to_string(width) +
                                                 " exceeds feature dimension " + std::to_string(dim));
  const Eigen::Index half = width / 2;
  Matrix tokens = Matrix::Zero(banks.rows(), dim);
  for (Eigen::Index k = 0; k < banks.rows(); ++k)
    for (Eigen::Index d = 0; d < dim; ++d) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < width; ++j) {
        const Eigen::Index src = d + j - half;
        if (src >= 0 && src < dim) acc += banks(k, j) * pooled(src);
      }
      tokens(k, d) = acc;
    }
  return tokens;
}

Matrix expand_context(const Matrix& aligned) {
  if (aligned.rows() < 1 || aligned.cols() < 1)
    throw Error(ErrorKind::invalid_argument, "expand_context: need at least one row");
  const Eigen::Index frames = aligned.rows(), dim = aligned.cols();
  constexpr auto kWindows = std::size(kContextWindows);
  Matrix out(frames, dim * static_cast<Eigen::Index>(kWindows));
  // Prefix sums make each window average O(D).
  Matrix prefix = Matrix::Zero(frames + 1, dim);
  for (Eigen::Index t = 0; t < frames; ++t) prefix.row(t + 1) = prefix.row(t) + aligned.row(t);
  for (std::size_t w = 0; w < kWindows; ++w) {
    const Eigen::Index span = kContextWindows[w];
    for (Eigen::Index t = 0; t < frames; ++t) {
      const Eigen::Index start = std::max<Eigen::Index>(0, t - span + 1);
      out.block(t, static_cast<Eigen::Index>(w) * dim, 1, dim) =
          (prefix.row(t + 1) - prefix.row(start)) / static_cast<double>(t + 1 - start);
    }
  }
  return out;
}

Matrix concat_condition(const Matrix& text, const Matrix& global_video) {
  if (text.cols() != global_video.cols())
    throw Error(ErrorKind::invalid_argument, "concat_condition: text dim " + std::to_string(text.cols()) +
                                                 " vs video dim " + std::to_string(global_video.cols()));
  Matrix c(text.rows() + global_video.rows(), text.cols());
  c << text, global_video;
  return c;
}

Matrix null_text_embedding(Eigen::Index tokens, Eigen::Index dim) { return Matrix::Zero(tokens, dim); }

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw Error(ErrorKind::invalid_argument, "noise schedule needs >= 1 step");
  alpha_bars_.reserve(betas_.size());
  double prod = 1.0;
  for (double b : betas_) {
    if (!(b > 0.0 && b < 1.0)) throw Error(ErrorKind::invalid_argument, "beta outside (0, 1)");
    prod *= 1.0 - b;
    alpha_bars_.push_back(prod);
  }
}

NoiseSchedule NoiseSchedule::linear(double beta_start, double beta_end, std::size_t steps) {
  if (steps < 1) throw Error(ErrorKind::invalid_argument, "noise schedule needs >= 1 step");
  std::vector<double> betas(steps);
  for (std::size_t i = 0; i < steps; ++i)
    betas[i] = steps == 1 ? beta_start
                          : beta_start + (beta_end - beta_start) * static_cast<double>(i) / (steps - 1);
  return NoiseSchedule(std::move(betas));
}

double NoiseSchedule::alpha_bar(std::size_t t) const {
  if (t < 1 || t > steps())
    throw Error(ErrorKind::invalid_argument,
                "diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  return alpha_bars_[t - 1];
}

Latent forward_noise(const Latent& z0, std::size_t t, const NoiseSchedule& schedule, const Latent& eps) {
  require_same_shape(z0, eps, "forward_noise");
  const double abar = schedule.alpha_bar(t);
  return std::sqrt(abar) * z0 + std::sqrt(1.0 - abar) * eps;
}

double diffusion_loss(const Latent& eps, const Latent& eps_hat) {
  require_same_shape(eps, eps_hat, "diffusion_loss");
  if (eps.size() == 0) throw Error(ErrorKind::invalid_argument, "diffusion_loss: empty latent");
  return (eps - eps_hat).squaredNorm() / static_cast<double>(eps.size());
}

Latent cfg_combine(const Latent& cond_eps, const Latent& uncond_eps, double guidance_scale) {
  require_same_shape(cond_eps, uncond_eps, "cfg_combine");
  if (!std::isfinite(guidance_scale)) throw Error(ErrorKind::invalid_argument, "cfg_combine: non-finite scale");
  return guidance_scale * cond_eps + (1.0 - guidance_scale) * uncond_eps;
}

}  // namespace avalign::kernels

#include "avalign/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

#include "avalign/format.hpp"
#include "avalign/kernels.hpp"

namespace avalign::kernels {

namespace {

using Rows = std::vector<std::vector<double>>;

Rows to_rows(const Matrix& m) {
  Rows r(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[i][j] = m(i, j);
  return r;
}

std::vector<double> mat_vec(const Rows& m, const std::vector<double>& v) {
  std::vector<double> out(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out[i] += m[i][j] * v[j];
  return out;
}

// Scalar re-evaluation of the attentive pooling forward pass.
std::vector<double> scalar_pool(const Matrix& features, const AttentivePoolParams& p,
                                std::vector<double>* weights_out = nullptr) {
  const Rows x = to_rows(features);
  const Rows v = to_rows(p.local_proj);
  const Rows w1 = to_rows(p.query_proj);
  const Rows w2 = to_rows(p.key_proj);
  const std::size_t L = x.size(), D = x[0].size();

  const auto unit = [](std::vector<double> a) {
    double n = 0.0;
    for (double e : a) n += e * e;
    n = std::sqrt(n);
    for (double& e : a) e = n > 0.0 ? e / n : 0.0;
    return a;
  };

  std::vector<double> logit(L);
  for (std::size_t u = 0; u < L; ++u) {
    const auto h = mat_vec(v, x[u]);
    double local = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k) local += p.local_score(static_cast<Eigen::Index>(k)) * std::max(0.0, h[k]);
    const auto q = unit(mat_vec(w1, x[u]));
    double cross = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
      const auto k = unit(mat_vec(w2, x[i]));
      for (std::size_t j = 0; j < k.size(); ++j) cross += q[j] * k[j];
    }
    logit[u] = p.local_scale * local + p.cross_scale * cross;
  }
  const double top = *std::max_element(logit.begin(), logit.end());
  double z = 0.0;
  std::vector<double> weights(L);
  for (std::size_t u = 0; u < L; ++u) z += weights[u] = std::exp(logit[u] - top);
  for (double& w : weights) w /= z;
  std::vector<double> pooled(D, 0.0);
  for (std::size_t u = 0; u < L; ++u)
    for (std::size_t d = 0; d < D; ++d) pooled[d] += weights[u] * x[u][d];
  if (weights_out) *weights_out = weights;
  return pooled;
}

class Draws {
 public:
  explicit Draws(std::uint64_t seed) : rng_(seed) {}
  Matrix normal(Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * normal_(rng_);
    return m;
  }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

  AttentivePoolParams params(Eigen::Index d, Eigen::Index h, Eigen::Index p) {
    AttentivePoolParams out;
    out.local_proj = normal(h, d, 0.7);
    out.local_score = normal(h, 1, 0.7);
    out.query_proj = normal(p, d, 0.7);
    out.key_proj = normal(p, d, 0.7);
    out.local_scale = uniform(-1.5, 1.5);
    out.cross_scale = uniform(-1.5, 1.5);
    return out;
  }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
};

struct Recorder {
  std::vector<CheckResult> results;
  void add(std::string kernel, std::string check, double err, double tol) {
    results.push_back({std::move(kernel), std::move(check), err, std::isfinite(err) && err <= tol});
  }
  void add_exact(std::string kernel, std::string check, bool ok, double err = 0.0) {
    results.push_back({std::move(kernel), std::move(check), err, ok});
  }
};

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

void check_bce(Recorder& rec, Draws& draws) {
  {
    const std::vector<unsigned char> y{1, 0, 1, 1, 0};
    const std::vector<double> p{1.0, 0.0, 1.0, 1.0, 0.0};
    rec.add("onset_bce", "perfect_prediction", onset_bce(y, p), 1e-6);
  }
  {
    const std::vector<unsigned char> y{1, 0, 0, 1, 1, 0, 1};
    const std::vector<double> p(y.size(), 0.5);
    rec.add("onset_bce", "half_probability_is_ln2", std::abs(onset_bce(y, p) - std::numbers::ln2), 1e-9);
  }
  {
    const std::vector<unsigned char> y{1, 0};
    const std::vector<double> p{0.9, 0.2};
    const double expected = -(std::log(0.9) + std::log(0.8)) / 2.0;
    rec.add("onset_bce", "two_frame_example", std::abs(onset_bce(y, p) - expected), 1e-12);
  }
  {
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      const int n = draws.uniform_int(1, 32);
      std::vector<unsigned char> y(static_cast<std::size_t>(n));
      std::vector<double> p(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        y[i] = static_cast<unsigned char>(draws.uniform_int(0, 1));
        p[i] = draws.uniform(0.0, 1.0);
      }
      worst = std::max(worst, std::max(0.0, -onset_bce(y, p)));
    }
    rec.add("onset_bce", "non_negative", worst, 0.0);
  }
}

void check_pool(Recorder& rec, Draws& draws, const SelftestOptions& opt) {
  {
    const Matrix row = draws.normal(1, 5);
    const Matrix x = row.replicate(4, 1);
    const auto r = attentive_pool(x, draws.params(5, 3, 3));
    const double err = std::max((r.weights.array() - 0.25).abs().maxCoeff(),
                                (r.pooled - row.transpose()).cwiseAbs().maxCoeff());
    rec.add("attentive_pool", "identical_rows_uniform", err, 1e-12);
  }
  {
    const Matrix x = draws.normal(6, 4);
    auto p = draws.params(4, 3, 2);
    p.local_scale = p.cross_scale = 0.0;
    const auto r = attentive_pool(x, p);
    const Vector mean = x.colwise().mean().transpose();
    const double err = std::max((r.weights.array() - 1.0 / 6).abs().maxCoeff(),
                                (r.pooled - mean).cwiseAbs().maxCoeff());
    rec.add("attentive_pool", "zero_scales_column_mean", err, 1e-12);
  }
  double oracle_err = 0.0, sum_err = 0.0, min_weight = 1.0;
  double grad_err = 0.0;
  for (int draw = 0; draw < opt.gradient_draws; ++draw) {
    const int L = draws.uniform_int(1, 7), D = draws.uniform_int(2, 6);
    const int H = draws.uniform_int(1, 4), P = draws.uniform_int(1, 4);
    const Matrix x = draws.normal(L, D);
    AttentivePoolParams p = draws.params(D, H, P);

    std::vector<double> w_ref;
    const auto ref = scalar_pool(x, p, &w_ref);
    const auto r = attentive_pool(x, p);
    for (int d = 0; d < D; ++d) oracle_err = std::max(oracle_err, std::abs(r.pooled(d) - ref[d]));
    for (int u = 0; u < L; ++u) oracle_err = std::max(oracle_err, std::abs(r.weights(u) - w_ref[u]));
    sum_err = std::max(sum_err, std::abs(r.weights.sum() - 1.0));
    min_weight = std::min(min_weight, r.weights.minCoeff());

    PoolGradients g = attentive_pool_grad(x, p);
    if (opt.break_gradient) g.local_proj(0, 0) += 1e-2 * (1.0 + std::abs(g.local_proj(0, 0)));

    constexpr double h = 1e-5;
    const auto compare = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double up = attentive_pool_loss(x, p);
      param = saved - h;
      const double down = attentive_pool_loss(x, p);
      param = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double diff = std::abs(analytic - numeric);
      if (diff <= 1e-8) return;
      grad_err = std::max(grad_err, diff / std::max(std::abs(analytic), std::abs(numeric)));
    };
    for (Eigen::Index i = 0; i < p.local_proj.size(); ++i) compare(p.local_proj.data()[i], g.local_proj.data()[i]);
    for (Eigen::Index i = 0; i < p.local_score.size(); ++i) compare(p.local_score.data()[i], g.local_score.data()[i]);
    for (Eigen::Index i = 0; i < p.query_proj.size(); ++i) compare(p.query_proj.data()[i], g.query_proj.data()[i]);
    for (Eigen::Index i = 0; i < p.key_proj.size(); ++i) compare(p.key_proj.data()[i], g.key_proj.data()[i]);
    compare(p.local_scale, g.local_scale);
    compare(p.cross_scale, g.cross_scale);
  }
  rec.add("attentive_pool", "scalar_oracle", oracle_err, 1e-10);
  rec.add("attentive_pool", "weights_sum_to_one", sum_err, 1e-9);
  rec.add_exact("attentive_pool", "weights_non_negative", min_weight >= 0.0, std::max(0.0, -min_weight));
  rec.add("attentive_pool_grad", "finite_difference", grad_err, 1e-4);

  {
    const Matrix x = draws.normal(1, 4);
    const auto g = attentive_pool_grad(x, draws.params(4, 3, 3));
    rec.add("attentive_pool_grad", "single_frame_cross_scale", std::abs(g.cross_scale), 0.0);
  }
  {
    const Matrix x = Matrix::Zero(5, 4);
    const auto g = attentive_pool_grad(x, draws.params(4, 3, 3));
    const double err = std::max({g.local_proj.cwiseAbs().maxCoeff(), g.local_score.cwiseAbs().maxCoeff(),
                                 g.query_proj.cwiseAbs().maxCoeff(), g.key_proj.cwiseAbs().maxCoeff(),
                                 std::abs(g.local_scale), std::abs(g.cross_scale)});
    rec.add("attentive_pool_grad", "zero_features", err, 0.0);
  }
}

void check_shaping(Recorder& rec, Draws& draws) {
  {
    const Vector pooled = draws.normal(8, 1);
    Matrix bank = Matrix::Zero(1, 3);
    bank(0, 1) = 1.0;
    rec.add("project_global", "identity_kernel", max_abs_diff(project_global(pooled, bank), pooled.transpose()), 0.0);
    rec.add("project_global", "zero_kernels", project_global(pooled, Matrix::Zero(4, 3)).cwiseAbs().maxCoeff(), 0.0);
  }
  {
    const Vector pooled = draws.normal(8, 1);
    const Matrix banks = draws.normal(4, 3);
    const Matrix out = project_global(pooled, banks);
    double err = out.rows() == 4 && out.cols() == 8 ? 0.0 : INFINITY;
    for (int k = 0; k < 4 && std::isfinite(err); ++k)
      for (int d = 0; d < 8; ++d) {
        const double left = d > 0 ? pooled(d - 1) : 0.0;
        const double right = d < 7 ? pooled(d + 1) : 0.0;
        const double expected = banks(k, 0) * left + banks(k, 1) * pooled(d) + banks(k, 2) * right;
        err = std::max(err, std::abs(out(k, d) - expected));
      }
    rec.add("project_global", "convolution_oracle", err, 1e-12);
  }
  {
    const Matrix row = draws.normal(1, 3);
    const Matrix out = expand_context(row.replicate(10, 1));
    rec.add("expand_context", "constant_rows", max_abs_diff(out, row.replicate(10, 4)), 1e-12);
    rec.add("expand_context", "single_row", max_abs_diff(expand_context(row), row.replicate(1, 4)), 1e-12);
  }
  {
    Matrix impulse = Matrix::Zero(24, 2);
    impulse(9, 0) = 3.0;
    impulse(9, 1) = -1.5;
    const Matrix out = expand_context(impulse);
    double err = 0.0;
    for (int wi = 0; wi < 4; ++wi) {
      const int w = kContextWindows[wi];
      for (int t = 0; t < 24; ++t) {
        const bool covered = t >= 9 && t < 9 + w;
        for (int d = 0; d < 2; ++d) {
          const double expected = covered ? impulse(9, d) / w : 0.0;
          err = std::max(err, std::abs(out(t, wi * 2 + d) - expected));
        }
      }
    }
    rec.add("expand_context", "impulse_response", err, 1e-12);
  }
  {
    const Matrix text = draws.normal(77, 16);
    const Matrix video = draws.normal(4, 16);
    const Matrix c = concat_condition(text, video);
    const bool ok = c.rows() == 81 && c.topRows(77) == text && c.bottomRows(4) == video;
    rec.add_exact("concat_condition", "text_then_video_81_tokens", ok);
    const Matrix u = concat_condition(null_text_embedding(77, 16), video);
    rec.add_exact("concat_condition", "null_text_rows_zero", u.topRows(77).isZero(0.0) && u.bottomRows(4) == video);
  }
}

void check_diffusion(Recorder& rec, Draws& draws) {
  const NoiseSchedule schedule = NoiseSchedule::linear();
  {
    const Matrix z0 = draws.normal(4, 4), eps = draws.normal(4, 4);
    const NoiseSchedule tiny = NoiseSchedule::linear(1e-14, 2e-2, 1000);
    rec.add("forward_noise", "no_noise_limit", max_abs_diff(forward_noise(z0, 1, tiny, eps), z0), 1e-6);
    double err = 0.0;
    for (std::size_t t : {std::size_t{1}, std::size_t{500}, std::size_t{1000}})
      err = std::max(err, max_abs_diff(forward_noise(z0, t, schedule, Matrix::Zero(4, 4)),
                                       std::sqrt(schedule.alpha_bar(t)) * z0));
    rec.add("forward_noise", "zero_eps_scales_z0", err, 0.0);
  }
  {
    double err = 0.0;
    for (std::size_t t = 1; t <= schedule.steps(); ++t) {
      const double a = std::sqrt(schedule.alpha_bar(t)), b = std::sqrt(1.0 - schedule.alpha_bar(t));
      err = std::max(err, std::abs(a * a + b * b - 1.0));
    }
    rec.add("forward_noise", "coefficients_unit_norm", err, 1e-12);
  }
  {
    const Matrix eps = draws.normal(4, 4);
    rec.add("diffusion_loss", "perfect_denoiser", diffusion_loss(eps, eps), 0.0);
    rec.add("diffusion_loss", "unit_offset", std::abs(diffusion_loss(eps, (eps.array() + 1.0).matrix()) - 1.0), 1e-12);
    const Matrix other = draws.normal(4, 4);
    double acc = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) acc += (eps(i, j) - other(i, j)) * (eps(i, j) - other(i, j));
    rec.add("diffusion_loss", "loop_oracle", std::abs(diffusion_loss(eps, other) - acc / 16.0), 1e-12);
  }
  {
    const Matrix cond = draws.normal(4, 4), uncond = draws.normal(4, 4);
    rec.add_exact("cfg_combine", "unit_scale_returns_conditional", cfg_combine(cond, uncond, 1.0) == cond);
    rec.add("cfg_combine", "equal_inputs_fixed_point", max_abs_diff(cfg_combine(cond, cond, 7.5), cond), 1e-12);
    const Matrix out = cfg_combine(Matrix::Constant(4, 4, 2.0), Matrix::Ones(4, 4), kDefaultGuidanceScale);
    rec.add("cfg_combine", "scale_3_example", (out.array() - 4.0).abs().maxCoeff(), 1e-12);
    double err = 0.0;
    const Matrix guided = cfg_combine(cond, uncond, kDefaultGuidanceScale);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        err = std::max(err, std::abs(guided(i, j) - (3.0 * cond(i, j) - 2.0 * uncond(i, j))));
    rec.add("cfg_combine", "scale_3_scalar_oracle", err, 1e-12);
  }
}

}  // namespace

std::vector<CheckResult> run_selftest(const SelftestOptions& options) {
  Recorder rec;
  Draws draws(options.seed);
  check_bce(rec, draws);
  check_pool(rec, draws, options);
  check_shaping(rec, draws);
  check_diffusion(rec, draws);
  return std::move(rec.results);
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
}

void write_jsonl(std::ostream& out, const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    out << "{\"kernel\":" << json_quote(r.kernel) << ",\"check\":" << json_quote(r.check)
        << ",\"max_error\":" << (std::isfinite(r.max_error) ? fixed6(r.max_error) : "null") << ",\"pass\":" << (r.pass ? "true" : "false") << "}\n";
}

}  // namespace avalign::kernels

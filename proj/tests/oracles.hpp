#pragma once

// Reference implementations used only by tests. Each is written directly from
// the defining formula, without sharing code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "rodif/tensor_nn.hpp"

namespace oracle {

using Vec = std::vector<double>;

/// Central differences of f at params, one coordinate at a time.
inline Vec central_difference(const std::function<double(const rodif::nn::Mlp&)>& f, const rodif::nn::Mlp& net,
                              double h = 1e-5) {
  rodif::nn::Mlp probe = net;
  auto p = probe.params();
  Vec g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = f(probe);
    p[i] = keep - h;
    const double down = f(probe);
    p[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps coordinates
/// whose true derivative is ~0 from dominating through rounding noise.
inline double max_relative_error(const Vec& a, const Vec& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

/// Linear beta ladder and its cumulative product, k = 1..K (index 0 unused for beta).
struct Ladder {
  Vec beta, alpha_bar;
};

inline Ladder ladder(int K, double b0, double b1) {
  Ladder l;
  l.beta.assign(K + 1, 0.0);
  l.alpha_bar.assign(K + 1, 1.0);
  for (int k = 1; k <= K; ++k) {
    l.beta[k] = K == 1 ? b0 : b0 + (b1 - b0) * (k - 1) / double(K - 1);
    l.alpha_bar[k] = l.alpha_bar[k - 1] * (1.0 - l.beta[k]);
  }
  return l;
}

inline double posterior_variance(const Ladder& l, int k) {
  return l.beta[k] * (1.0 - l.alpha_bar[k - 1]) / (1.0 - l.alpha_bar[k]);
}

/// Marginal variance of a^0 when the noise predictor is identically zero and
/// a^K ~ N(0, 1): Var_{k-1} = Var_k / alpha_k + sigma_k^2, with sigma_1 = 0.
inline double zero_predictor_variance(int K, double b0, double b1) {
  const Ladder l = ladder(K, b0, b1);
  double var = 1.0;
  for (int k = K; k >= 1; --k) var = var / (1.0 - l.beta[k]) + (k > 1 ? posterior_variance(l, k) : 0.0);
  return var;
}

/// log N(x; mu, s2 I) written as a quadratic form.
inline double gaussian_quadratic_form(const Vec& x, const Vec& mu, double s2) {
  double q = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) q += (x[i] - mu[i]) * (x[i] - mu[i]) / s2;
  const double logdet = static_cast<double>(x.size()) * std::log(s2);
  return -0.5 * (q + logdet + static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
}

/// One scalar Adam step on a single coordinate.
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double w, double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return w - lr * mh / (std::sqrt(vh) + eps);
  }
};

inline double naive_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double naive_neg_log_sigmoid(double x) { return -std::log(naive_sigmoid(x)); }

}  // namespace oracle

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "streamadapt/random.hpp"
#include "streamadapt/tinyseg.hpp"

// Independent reference implementations used by the unit and acceptance tests.
namespace oracle {

// Direct O(n^4) 2-D DFT, F(u,v) = sum_{x,y} p(x,y) exp(-2 pi i (u x + v y) / n),
// with row index u paired with x (rows) and v with y (columns).
inline std::vector<std::complex<double>> naive_dft(std::span<const double> patch, int n) {
  std::vector<std::complex<double>> w(n);
  for (int k = 0; k < n; ++k) {
    const double a = -2.0 * std::numbers::pi * k / n;
    w[k] = {std::cos(a), std::sin(a)};
  }
  std::vector<std::complex<double>> out(static_cast<std::size_t>(n) * n);
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      double re = 0.0, im = 0.0;
      for (int x = 0; x < n; ++x) {
        const double* row = patch.data() + static_cast<std::size_t>(x) * n;
        int k = (u * x) % n;
        for (int y = 0; y < n; ++y) {
          // k tracks (u x + v y) mod n
          re += row[y] * w[k].real();
          im += row[y] * w[k].imag();
          k += v;
          if (k >= n) k -= n;
        }
      }
      out[static_cast<std::size_t>(u) * n + v] = {re, im};
    }
  }
  return out;
}

// Distance of an unshifted frequency index from the spectrum center after
// centering, i.e. min(u, n - u).
inline int centered(int u, int n) { return std::min(u, n - u); }

// Sum over HF of log(|F| + eps) divided by the sum over all coefficients, HF
// being max(centered(u), centered(v)) > cutoff.
inline double naive_hf_ratio(std::span<const double> patch, int n, int cutoff, double eps) {
  const auto f = naive_dft(patch, n);
  double num = 0.0, den = 0.0;
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) {
      const double t = std::log(std::abs(f[static_cast<std::size_t>(u) * n + v]) + eps);
      den += t;
      if (std::max(centered(u, n), centered(v, n)) > cutoff) num += t;
    }
  return num / den;
}

struct GradCheck {
  bool ok = true;
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::size_t kink_retries = 0;  // stencils that straddled a ReLU kink
  double worst_rel = 0.0;
  std::string worst_param;
};

inline bool grad_close(double analytic, double numeric, double rel_tol = 1e-3, double abs_tol = 1e-6) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_tol) return true;
  return diff <= rel_tol * std::max(std::abs(analytic), std::abs(numeric));
}

// Scalar objective sum(r_main * logits) + sum(r_light * light_logits) in double,
// so the upstream gradients are the random weights themselves. `pattern`, when
// given, receives the ReLU on/off state of every block output.
inline double linear_objective(const streamadapt::BasicModelParams<double>& p, const streamadapt::Frame& f,
                               const streamadapt::BasicTensor<double>& r_main,
                               const streamadapt::BasicTensor<double>& r_light,
                               std::vector<bool>* pattern = nullptr) {
  const auto c = streamadapt::forward(p, f, streamadapt::Heads::Both);
  double s = 0.0;
  for (std::size_t i = 0; i < r_main.size(); ++i) s += r_main.data[i] * c.logits->data[i];
  for (std::size_t i = 0; i < r_light.size(); ++i) s += r_light.data[i] * c.light_logits->data[i];
  if (pattern) {
    pattern->clear();
    for (const auto& feat : c.features)
      for (double v : feat.data) pattern->push_back(v > 0.0);
  }
  return s;
}

// Central differences (h = 1e-4) on every parameter of a randomly perturbed
// network, both heads, compared with backward(). The objective is only
// piecewise smooth; when the two stencil points see different ReLU patterns
// the difference straddles a kink, and h is divided by 16 until they agree.
inline GradCheck check_all_gradients(const streamadapt::ModelShape& shape, int side, std::uint64_t seed) {
  using namespace streamadapt;
  Rng rng(seed);
  BasicModelParams<double> p = init_params(shape, seed).cast<double>();
  for (auto& t : p.tensors)
    for (double& v : t.data) v += rng.uniform(-0.1, 0.1);
  p.touch();
  Frame frame(side, side, shape.in_channels);
  for (float& v : frame.data) v = static_cast<float>(rng.uniform());
  const std::size_t k = static_cast<std::size_t>(shape.class_count);
  const std::size_t hw = static_cast<std::size_t>(side) * side;
  BasicTensor<double> r_main({k, static_cast<std::size_t>(side), static_cast<std::size_t>(side)});
  BasicTensor<double> r_light = r_main;
  for (double& v : r_main.data) v = rng.uniform(-1.0, 1.0) / static_cast<double>(hw);
  for (double& v : r_light.data) v = rng.uniform(-1.0, 1.0) / static_cast<double>(hw);

  const auto cache = forward(p, frame, Heads::Both);
  const Gradients g = backward(p, cache, &r_main, &r_light);

  GradCheck out;
  std::vector<bool> pat_up, pat_down;
  for (std::size_t t = 0; t < p.tensors.size(); ++t) {
    for (std::size_t j = 0; j < p.tensors[t].size(); ++j) {
      BasicModelParams<double> q = p;
      const double orig = q.tensors[t].data[j];
      double numeric = 0.0;
      for (double h = 1e-4; h >= 1e-9; h /= 16.0) {
        q.tensors[t].data[j] = orig + h;
        q.touch();
        const double up = linear_objective(q, frame, r_main, r_light, &pat_up);
        q.tensors[t].data[j] = orig - h;
        q.touch();
        const double down = linear_objective(q, frame, r_main, r_light, &pat_down);
        numeric = (up - down) / (2.0 * h);
        if (pat_up == pat_down) break;
        ++out.kink_retries;
      }
      const double analytic = g.tensors[t].data[j];
      ++out.checked;
      if (!grad_close(analytic, numeric)) {
        ++out.failures;
        out.ok = false;
      }
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-12});
      if (std::abs(analytic - numeric) > 1e-6 && rel > out.worst_rel) {
        out.worst_rel = rel;
        out.worst_param = param_names()[t] + "[" + std::to_string(j) + "]";
      }
    }
  }
  return out;
}

struct ChiSquare {
  double statistic = 0.0;
  double critical = 0.0;
  int dof = 0;
  bool pass = false;
};

// Pearson goodness of fit of observed counts against probabilities.
inline ChiSquare chi_square(std::span<const std::uint64_t> counts, std::span<const double> probs,
                            double significance) {
  ChiSquare out;
  std::uint64_t n = 0;
  for (auto c : counts) n += c;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = probs[i] * static_cast<double>(n);
    const double d = static_cast<double>(counts[i]) - e;
    out.statistic += d * d / e;
  }
  out.dof = static_cast<int>(counts.size()) - 1;
  const boost::math::chi_squared dist(out.dof);
  out.critical = boost::math::quantile(boost::math::complement(dist, significance));
  out.pass = out.statistic <= out.critical;
  return out;
}

}  // namespace oracle

#include "advdual/pca.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "advdual/rng.hpp"

namespace advdual {

namespace {

// w = C v for the covariance C = (1/n) Xc^T Xc, without forming C.
// Deterministic chunked reduction over rows.
std::vector<double> cov_multiply(const Matrix& data, const std::vector<double>& mu,
                                 const std::vector<double>& v) {
  const int n = data.rows, d = data.cols;
  const int nc = num_chunks(n);
  std::vector<double> partial(static_cast<size_t>(nc) * d, 0.0);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < nc; ++c) {
    double* w = partial.data() + static_cast<size_t>(c) * d;
    const int end = std::min(n, (c + 1) * kReduceChunk);
    for (int i = c * kReduceChunk; i < end; ++i) {
      const double* row = data.row(i);
      double y = 0.0;
      for (int j = 0; j < d; ++j) y += (row[j] - mu[j]) * v[j];
      for (int j = 0; j < d; ++j) w[j] += y * (row[j] - mu[j]);
    }
  }
  std::vector<double> w(d, 0.0);
  for (int c = 0; c < nc; ++c) {
    const double* pw = partial.data() + static_cast<size_t>(c) * d;
    for (int j = 0; j < d; ++j) w[j] += pw[j];
  }
  const double inv = 1.0 / n;
  for (double& x : w) x *= inv;
  return w;
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void fix_sign(std::vector<double>& v) {
  size_t arg = 0;
  for (size_t i = 1; i < v.size(); ++i) {
    if (std::fabs(v[i]) > std::fabs(v[arg])) arg = i;
  }
  if (v[arg] < 0.0) {
    for (double& x : v) x = -x;
  }
}

}  // namespace

PcaResult pca_fit(const Matrix& data, int k) {
  if (data.rows < 2) throw std::invalid_argument("pca_fit: need at least 2 rows");
  if (k < 1 || k > data.cols) throw std::invalid_argument("pca_fit: bad k");
  const int n = data.rows, d = data.cols;
  std::vector<double> mu(d, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* row = data.row(i);
    for (int j = 0; j < d; ++j) mu[j] += row[j];
  }
  for (double& x : mu) x /= n;

  PcaResult res;
  RngStream rng(derive_key(0xca11u, kStreamInit));
  for (int comp = 0; comp < k; ++comp) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.next_uniform(-1.0, 1.0);
    // orthogonalize against found axes
    for (const auto& a : res.axes) {
      const double pr = dot(a, v);
      for (int j = 0; j < d; ++j) v[j] -= pr * a[j];
    }
    double nv = norm2(v);
    for (double& x : v) x /= nv;

    double lambda = 0.0;
    for (int it = 0; it < 20000; ++it) {
      std::vector<double> w = cov_multiply(data, mu, v);
      for (size_t ci = 0; ci < res.axes.size(); ++ci) {
        const double pr = dot(res.axes[ci], w);
        for (int j = 0; j < d; ++j) w[j] -= pr * res.axes[ci][j];
      }
      const double lam = dot(v, w);
      const double wn = norm2(w);
      if (wn <= 1e-300) {
        lambda = 0.0;
        break;
      }
      for (int j = 0; j < d; ++j) w[j] /= wn;
      double align = std::fabs(dot(v, w));
      v = std::move(w);
      if (std::fabs(lam - lambda) <= 1e-14 * std::max(std::fabs(lam), 1e-30) &&
          1.0 - align <= 1e-15) {
        lambda = lam;
        break;
      }
      lambda = lam;
    }
    const double top = res.eigenvalues.empty() ? lambda : res.eigenvalues.front();
    if (lambda <= 1e-12 * std::max(top, 1e-300)) {
      res.reduced = true;
      break;
    }
    fix_sign(v);
    res.axes.push_back(std::move(v));
    res.eigenvalues.push_back(lambda);
  }
  res.k = static_cast<int>(res.axes.size());
  return res;
}

Matrix pca_transform(const PcaResult& p, const Matrix& points) {
  if (p.k > 0 && static_cast<int>(p.axes[0].size()) != points.cols) {
    throw std::invalid_argument("pca_transform: dimension mismatch");
  }
  Matrix out(points.rows, p.k);
  for (int i = 0; i < points.rows; ++i) {
    const double* row = points.row(i);
    for (int c = 0; c < p.k; ++c) {
      double s = 0.0;
      for (int j = 0; j < points.cols; ++j) s += row[j] * p.axes[c][j];
      out.at(i, c) = s;
    }
  }
  return out;
}

}  // namespace advdual

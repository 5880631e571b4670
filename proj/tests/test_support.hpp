#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dnsfr/estimation.hpp"
#include "dnsfr/kpca.hpp"
#include "dnsfr/market_data.hpp"
#include "dnsfr/nelson_siegel.hpp"
#include "dnsfr/state_space.hpp"
#include "dnsfr/stats.hpp"

namespace dnsfr::testing {

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  std::normal_distribution<double> n(0.0, scale);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Eigen::MatrixXd random_spd(Rng& rng, Eigen::Index n) {
  const Eigen::MatrixXd b = random_matrix(rng, n, n);
  return b * b.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

/// Sorted random tenors in (0.5, 360).
inline std::vector<double> random_tenors(Rng& rng, Eigen::Index n) {
  std::vector<double> t;
  while (static_cast<Eigen::Index>(t.size()) < n) {
    const double v = std::round(uniform(rng, 1.0, 360.0));
    if (std::find(t.begin(), t.end(), v) == t.end()) t.push_back(v);
  }
  std::sort(t.begin(), t.end());
  return t;
}

inline MaturityGrid random_grid(Rng& rng, Eigen::Index n) { return MaturityGrid(random_tenors(rng, n)); }

/// Loadings for any number of tenors, including grids too short for MaturityGrid.
inline Eigen::MatrixXd random_loadings(Rng& rng, Eigen::Index n, double lambda) {
  const std::vector<double> t = random_tenors(rng, n);
  Eigen::MatrixXd L(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) L.row(i) = loading_row(t[static_cast<std::size_t>(i)], lambda);
  return L;
}

inline CovStructure random_cov(Rng& rng, CovKind kind, Eigen::Index N) {
  Eigen::VectorXd s(N);
  for (Eigen::Index i = 0; i < N; ++i) s(i) = uniform(rng, 0.05, 0.6);
  switch (kind) {
    case CovKind::Diagonal:
      return DiagonalCov{s};
    case CovKind::Band:
      return BandCov{s, uniform(rng, -3.0, 3.0)};
    case CovKind::FullAr:
      break;
  }
  return FullArCov{uniform(rng, 0.05, 0.6), uniform(rng, -0.9, 0.9)};
}

inline SsmParams random_params(Rng& rng, CovKind kind, Eigen::Index N, Eigen::Index Q = 0) {
  SsmParams p;
  for (int j = 0; j < 3; ++j) {
    p.psi1(j) = uniform(rng, -0.95, 0.95);
    p.psi0(j) = uniform(rng, -1.0, 1.0) * (1.0 - p.psi1(j));
    p.sigma_eta(j) = uniform(rng, 0.1, 1.0);
  }
  p.cov = random_cov(rng, kind, N);
  p.gamma = random_matrix(rng, N, Q, 0.3);
  return p;
}

/// Draws a panel from the DNS / DNS-FR measurement and transition equations,
/// starting from the stationary distribution.
inline YieldPanel simulate_panel(const SsmParams& p, const MaturityGrid& grid, Eigen::Index T, Rng& rng,
                                 const FactorPanel* factors = nullptr) {
  const auto N = static_cast<Eigen::Index>(grid.size());
  const Eigen::MatrixXd L = loading_matrix(grid, p.lambda).matrix;
  const GaussianSampler eps(Eigen::VectorXd::Zero(N), build_sigma_eps(p.cov, N));
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::Vector3d a;
  for (int j = 0; j < 3; ++j) a(j) = z(rng) * p.sigma_eta(j) / std::sqrt(1.0 - p.psi1(j) * p.psi1(j));
  Eigen::MatrixXd Y(T, N);
  const Eigen::Vector3d mu = p.mu();
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int j = 0; j < 3; ++j) a(j) = p.psi1(j) * a(j) + p.sigma_eta(j) * z(rng);
    Eigen::VectorXd y = L * (a + mu) + eps.draw(rng);
    if (factors != nullptr && p.gamma.cols() > 0) y += p.gamma * factors->values.row(t).transpose();
    Y.row(t) = y.transpose();
  }
  return make_panel(month_range({2000, 1}, static_cast<int>(T)), Y, grid);
}

/// Phi^(s-t) V_t, s >= t.
inline Eigen::Matrix3d cross_cov(const Eigen::Matrix3d& Phi, const std::vector<Eigen::Matrix3d>& V, Eigen::Index s,
                                 Eigen::Index t) {
  Eigen::Matrix3d c = V[t];
  for (Eigen::Index k = t; k < s; ++k) c = Phi * c;
  return c;
}

struct JointGaussianResult {
  std::vector<Eigen::Vector3d> means;
  std::vector<Eigen::Matrix3d> covs;
  double loglik = 0.0;
};

/// Filtered moments by brute-force conditioning of the stacked Gaussian vector
/// (x_1..x_T, observed z_1..z_T) with x_0 ~ N(a0, P0).
inline JointGaussianResult joint_gaussian_filter(const Eigen::MatrixXd& Z, const Mask& mask, const SsmParams& p,
                                                 const Eigen::MatrixXd& L, const Eigen::MatrixXd& S,
                                                 const Eigen::Vector3d& a0, const Eigen::Matrix3d& P0) {
  const Eigen::Index T = Z.rows();
  const Eigen::Index N = Z.cols();
  const Eigen::Matrix3d Phi = p.psi1.asDiagonal();
  const Eigen::Matrix3d Qm = p.sigma_eta.array().square().matrix().asDiagonal();

  // Cov(x_s, x_t) = Phi^(s-t) V_t for s >= t.
  std::vector<Eigen::Vector3d> m(T);
  std::vector<Eigen::Matrix3d> V(T);
  Eigen::Vector3d mean = a0;
  Eigen::Matrix3d var = P0;
  for (Eigen::Index t = 0; t < T; ++t) {
    mean = Phi * mean;
    var = Phi * var * Phi.transpose() + Qm;
    m[t] = mean;
    V[t] = var;
  }
  auto cross = [&](Eigen::Index s, Eigen::Index t) -> Eigen::Matrix3d {
    if (s < t) return cross_cov(Phi, V, t, s).transpose();
    return cross_cov(Phi, V, s, t);
  };

  Eigen::MatrixXd Sxx(3 * T, 3 * T);
  for (Eigen::Index s = 0; s < T; ++s) {
    for (Eigen::Index t = 0; t < T; ++t) Sxx.block(3 * s, 3 * t, 3, 3) = cross(s, t);
  }
  std::vector<std::pair<Eigen::Index, Eigen::Index>> obs;  // (t, i)
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index i = 0; i < N; ++i) {
      if (mask(t, i)) obs.emplace_back(t, i);
    }
  }
  const auto M = static_cast<Eigen::Index>(obs.size());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(M, 3 * T);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(M, M);
  Eigen::VectorXd zobs(M);
  for (Eigen::Index r = 0; r < M; ++r) {
    H.block(r, 3 * obs[r].first, 1, 3) = L.row(obs[r].second);
    zobs(r) = Z(obs[r].first, obs[r].second);
    for (Eigen::Index c = 0; c < M; ++c) {
      if (obs[r].first == obs[c].first) R(r, c) = S(obs[r].second, obs[c].second);
    }
  }
  Eigen::VectorXd mx(3 * T);
  for (Eigen::Index t = 0; t < T; ++t) mx.segment<3>(3 * t) = m[t];

  JointGaussianResult out;
  for (Eigen::Index t = 0; t < T; ++t) {
    Eigen::Index k = 0;
    while (k < M && obs[k].first <= t) ++k;
    const Eigen::Vector3d prior_mean = m[t];
    const Eigen::Matrix3d prior_cov = V[t];
    if (k == 0) {
      out.means.push_back(prior_mean);
      out.covs.push_back(prior_cov);
      continue;
    }
    const Eigen::MatrixXd Hk = H.topRows(k);
    const Eigen::MatrixXd Szz = Hk * Sxx * Hk.transpose() + R.topLeftCorner(k, k);
    const Eigen::MatrixXd Sxz = Sxx.middleRows(3 * t, 3) * Hk.transpose();
    const Eigen::VectorXd resid = zobs.head(k) - Hk * mx;
    const Eigen::LDLT<Eigen::MatrixXd> solver(Szz);
    out.means.push_back(prior_mean + Sxz * solver.solve(resid));
    out.covs.push_back(prior_cov - Sxz * solver.solve(Sxz.transpose()));
    if (t == T - 1) {
      out.loglik = -0.5 * (resid.dot(solver.solve(resid)) + std::log(Szz.determinant()));
    }
  }
  return out;
}

/// FitResult carrying `p` and its filter output, without estimation.
inline FitResult fit_from_params(const YieldPanel& y, const FactorPanel* U, const SsmParams& p) {
  FitResult fit;
  fit.params = p;
  const NsLoadingMatrix L = loading_matrix(y.grid, p.lambda);
  fit.filter = run_filter(deflate(y, U, p, L), p, L.matrix, stationary_init(p));
  fit.loglik = fit.filter.loglik;
  fit.converged = true;
  return fit;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dnsfr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace dnsfr::testing

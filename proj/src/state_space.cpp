#include "dnsfr/state_space.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace dnsfr {
namespace {

void symmetrize(Eigen::Matrix3d& P) { P = 0.5 * (P + P.transpose()).eval(); }

void check_sigma(const Eigen::VectorXd& sigma, Eigen::Index N) {
  if (sigma.size() != N) throw std::invalid_argument("build_sigma_eps: sigma must have N entries");
  if (!(sigma.array() > 0.0).all()) throw std::invalid_argument("build_sigma_eps: sigma must be positive");
}

}  // namespace

CovKind kind_of(const CovStructure& cov) {
  return std::visit(
      [](const auto& c) {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, DiagonalCov>) return CovKind::Diagonal;
        else if constexpr (std::is_same_v<C, BandCov>) return CovKind::Band;
        else return CovKind::FullAr;
      },
      cov);
}

Eigen::Vector3d SsmParams::mu() const { return psi0.array() / (1.0 - psi1.array()); }

void SsmParams::validate() const {
  if (!(psi1.array().abs() < 1.0).all()) throw std::invalid_argument("SsmParams: |psi1| must be < 1");
  if (!(sigma_eta.array() > 0.0).all()) throw std::invalid_argument("SsmParams: sigma_eta must be positive");
  if (!mu().allFinite()) throw std::invalid_argument("SsmParams: factor mean is not finite");
  if (!(lambda > 0.0)) throw std::invalid_argument("SsmParams: lambda must be positive");
}

double band_rho_bound(Eigen::Index N) {
  const double n = static_cast<double>(N);
  return 0.5 * std::sqrt(1.0 + std::numbers::pi * std::numbers::pi / (1.0 + 4.0 * n * n));
}

double rho_from_theta(double theta, Eigen::Index N) {
  const double bound = band_rho_bound(N);
  // Logistic evaluated on the side that cannot overflow.
  const double sig = theta >= 0.0 ? 1.0 / (1.0 + std::exp(-theta)) : std::exp(theta) / (1.0 + std::exp(theta));
  return 2.0 * bound * sig - bound;
}

Eigen::MatrixXd build_sigma_eps(const CovStructure& cov, Eigen::Index N) {
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(N, N);
  std::visit(
      [&](const auto& c) {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, DiagonalCov>) {
          check_sigma(c.sigma, N);
          S.diagonal() = c.sigma.array().square().matrix();
        } else if constexpr (std::is_same_v<C, BandCov>) {
          check_sigma(c.sigma, N);
          S.diagonal() = c.sigma.array().square().matrix();
          const double rho = N >= 2 ? rho_from_theta(c.theta, N) : 0.0;
          for (Eigen::Index i = 0; i + 1 < N; ++i) {
            S(i, i + 1) = S(i + 1, i) = rho * c.sigma(i) * c.sigma(i + 1);
          }
        } else {
          if (!(c.sigma > 0.0)) throw std::invalid_argument("build_sigma_eps: sigma must be positive");
          if (!(std::abs(c.rho) < 1.0)) throw std::invalid_argument("build_sigma_eps: |rho| must be < 1");
          const double var = c.sigma * c.sigma;
          for (Eigen::Index i = 0; i < N; ++i) {
            for (Eigen::Index j = 0; j < N; ++j) {
              S(i, j) = var * std::pow(c.rho, static_cast<double>(std::abs(i - j)));
            }
          }
        }
      },
      cov);
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw std::domain_error("build_sigma_eps: matrix is not positive definite");
  return S;
}

DeflatedPanel deflate(const YieldPanel& panel, const FactorPanel* factors, const SsmParams& params,
                      const NsLoadingMatrix& loadings) {
  const Eigen::Index T = panel.periods();
  const Eigen::Index N = panel.tenor_count();
  if (loadings.matrix.rows() != N) throw std::invalid_argument("deflate: loading matrix rows != tenor count");
  const bool regress = factors != nullptr && params.gamma.cols() > 0;
  if (regress) {
    if (factors->values.rows() != T || factors->values.cols() != params.gamma.cols() || params.gamma.rows() != N) {
      throw std::invalid_argument("deflate: factor panel / Gamma dimension mismatch");
    }
  }
  const Eigen::VectorXd level = loadings.matrix * params.mu();
  DeflatedPanel out;
  out.mask = panel.mask;
  out.values = Eigen::MatrixXd::Constant(T, N, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index t = 0; t < T; ++t) {
    Eigen::VectorXd shift = level;
    if (regress) shift += params.gamma * factors->values.row(t).transpose();
    for (Eigen::Index i = 0; i < N; ++i) {
      if (panel.mask(t, i)) out.values(t, i) = panel.values(t, i) - shift(i);
    }
  }
  return out;
}

StateMoments stationary_init(const SsmParams& params) {
  StateMoments m;
  m.mean.setZero();
  m.cov = (params.sigma_eta.array().square() / (1.0 - params.psi1.array().square())).matrix().asDiagonal();
  return m;
}

StateMoments kf_predict(const Eigen::Vector3d& a_prev, const Eigen::Matrix3d& P_prev, const SsmParams& params) {
  StateMoments out;
  out.mean = params.psi1.cwiseProduct(a_prev);
  out.cov = params.psi1.asDiagonal() * P_prev * params.psi1.asDiagonal();
  out.cov.diagonal() += params.sigma_eta.cwiseAbs2();
  symmetrize(out.cov);
  return out;
}

UpdateResult kf_update(const Eigen::Vector3d& a_pred, const Eigen::Matrix3d& P_pred,
                       const Eigen::Ref<const Eigen::VectorXd>& observed, std::span<const Eigen::Index> obs_rows,
                       const Eigen::Ref<const Eigen::MatrixXd>& loadings,
                       const Eigen::Ref<const Eigen::MatrixXd>& sigma_eps) {
  const auto n = static_cast<Eigen::Index>(obs_rows.size());
  if (observed.size() != n) throw std::invalid_argument("kf_update: observed length != row count");
  UpdateResult out;
  if (n == 0) {
    out.mean = a_pred;
    out.cov = P_pred;
    return out;
  }
  Eigen::MatrixXd Lo(n, 3);
  Eigen::MatrixXd So(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    Lo.row(r) = loadings.row(obs_rows[r]);
    for (Eigen::Index c = 0; c < n; ++c) So(r, c) = sigma_eps(obs_rows[r], obs_rows[c]);
  }
  out.innovation = observed - Lo * a_pred;
  const Eigen::MatrixXd PLt = P_pred * Lo.transpose();  // 3 x n
  Eigen::MatrixXd L = Lo * PLt + So;
  L = 0.5 * (L + L.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(L);
  if (llt.info() != Eigen::Success) throw std::domain_error("kf_update: innovation covariance is not positive definite");
  const Eigen::MatrixXd gain = llt.solve(PLt.transpose()).transpose();  // 3 x n
  out.mean = a_pred + gain * out.innovation;
  out.cov = (Eigen::Matrix3d::Identity() - gain * Lo) * P_pred;
  symmetrize(out.cov);
  out.innovation_cov = std::move(L);
  return out;
}

namespace {

double innovation_term(const Eigen::VectorXd& e, const Eigen::MatrixXd& L) {
  Eigen::LLT<Eigen::MatrixXd> llt(L);
  if (llt.info() != Eigen::Success) throw std::domain_error("log_likelihood: singular innovation covariance");
  const Eigen::VectorXd w = llt.matrixL().solve(e);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return w.squaredNorm() + logdet;
}

}  // namespace

FilterOutput run_filter(const DeflatedPanel& Z, const SsmParams& params, const Eigen::Ref<const Eigen::MatrixXd>& loadings,
                        const Eigen::Ref<const Eigen::MatrixXd>& sigma_eps, const StateMoments& init) {
  const Eigen::Index T = Z.values.rows();
  const Eigen::Index N = Z.values.cols();
  if (T < 1) throw std::invalid_argument("run_filter: need at least one period");
  if (loadings.rows() != N || sigma_eps.rows() != N || sigma_eps.cols() != N) {
    throw std::invalid_argument("run_filter: loadings / covariance do not match tenor count");
  }
  FilterOutput out;
  out.a_pred.reserve(T);
  out.P_pred.reserve(T);
  out.a_filt.reserve(T);
  out.P_filt.reserve(T);
  out.innovations.reserve(T);
  out.innovation_cov.reserve(T);

  Eigen::Vector3d a = init.mean;
  Eigen::Matrix3d P = init.cov;
  std::vector<Eigen::Index> rows;
  rows.reserve(N);
  double sum = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    const StateMoments pred = kf_predict(a, P, params);
    rows.clear();
    for (Eigen::Index i = 0; i < N; ++i) {
      if (Z.mask(t, i)) rows.push_back(i);
    }
    Eigen::VectorXd z(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) z(r) = Z.values(t, rows[r]);
    UpdateResult upd = kf_update(pred.mean, pred.cov, z, rows, loadings, sigma_eps);
    if (!rows.empty()) sum += innovation_term(upd.innovation, upd.innovation_cov);
    a = upd.mean;
    P = upd.cov;
    out.a_pred.push_back(pred.mean);
    out.P_pred.push_back(pred.cov);
    out.a_filt.push_back(upd.mean);
    out.P_filt.push_back(upd.cov);
    out.innovations.push_back(std::move(upd.innovation));
    out.innovation_cov.push_back(std::move(upd.innovation_cov));
  }
  out.loglik = -0.5 * sum;
  return out;
}

FilterOutput run_filter(const DeflatedPanel& Z, const SsmParams& params, const Eigen::Ref<const Eigen::MatrixXd>& loadings,
                        const StateMoments& init) {
  return run_filter(Z, params, loadings, build_sigma_eps(params.cov, Z.values.cols()), init);
}

double log_likelihood(const FilterOutput& output) {
  double sum = 0.0;
  for (std::size_t t = 0; t < output.innovations.size(); ++t) {
    if (output.innovations[t].size() == 0) continue;
    sum += innovation_term(output.innovations[t], output.innovation_cov[t]);
  }
  return -0.5 * sum;
}

}  // namespace dnsfr

#pragma once

#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dnsfr/kpca.hpp"
#include "dnsfr/market_data.hpp"
#include "dnsfr/nelson_siegel.hpp"

namespace dnsfr {

/// Structure 1: independent errors with per-tenor standard deviations.
struct DiagonalCov {
  Eigen::VectorXd sigma;
};

/// Structure 2: tridiagonal band, common adjacent correlation rho(theta).
struct BandCov {
  Eigen::VectorXd sigma;
  double theta = 0.0;
};

/// Structure 3: common variance with correlation rho^|i-j|.
struct FullArCov {
  double sigma = 1.0;
  double rho = 0.0;
};

using CovStructure = std::variant<DiagonalCov, BandCov, FullArCov>;

enum class CovKind { Diagonal = 1, Band = 2, FullAr = 3 };

CovKind kind_of(const CovStructure& cov);

/// Parameters of the deflated DNS / DNS-FR state-space model.
struct SsmParams {
  double lambda = kDefaultLambda;
  Eigen::Vector3d psi0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d psi1 = Eigen::Vector3d::Zero();
  Eigen::Vector3d sigma_eta = Eigen::Vector3d::Ones();
  CovStructure cov = DiagonalCov{};
  Eigen::MatrixXd gamma;  // N x Q; N x 0 for plain DNS

  /// Unconditional factor mean psi0 / (1 - psi1).
  [[nodiscard]] Eigen::Vector3d mu() const;
  [[nodiscard]] Eigen::Index factor_count() const { return gamma.cols(); }
  /// Throws std::invalid_argument when stationarity or positivity is violated.
  void validate() const;
};

/// Bound B_N on |rho| guaranteeing a positive-definite tridiagonal band.
double band_rho_bound(Eigen::Index N);

/// rho = 2 B_N sigmoid(theta) - B_N.
double rho_from_theta(double theta, Eigen::Index N);

/// Measurement error covariance. Throws std::domain_error when the result is
/// not positive definite.
Eigen::MatrixXd build_sigma_eps(const CovStructure& cov, Eigen::Index N);

/// Deflated observations Y - Lambda mu - Gamma U; cells with mask == false are NaN.
struct DeflatedPanel {
  Eigen::MatrixXd values;
  Mask mask;
};

DeflatedPanel deflate(const YieldPanel& panel, const FactorPanel* factors, const SsmParams& params,
                      const NsLoadingMatrix& loadings);

struct StateMoments {
  Eigen::Vector3d mean;
  Eigen::Matrix3d cov;
};

/// Stationary initialization: zero mean, diag(sigma_eta^2 / (1 - psi1^2)).
StateMoments stationary_init(const SsmParams& params);

/// a = diag(psi1) a_prev, P = diag(psi1) P_prev diag(psi1) + diag(sigma_eta^2), symmetrized.
StateMoments kf_predict(const Eigen::Vector3d& a_prev, const Eigen::Matrix3d& P_prev, const SsmParams& params);

struct UpdateResult {
  Eigen::Vector3d mean;
  Eigen::Matrix3d cov;
  Eigen::VectorXd innovation;
  Eigen::MatrixXd innovation_cov;
};

/// Measurement update restricted to the observed rows. `observed` holds the
/// values at `obs_rows`; `loadings` and `sigma_eps` are the full N-row
/// matrices. An empty row set returns the prediction unchanged. Throws
/// std::domain_error when the innovation covariance is not positive definite.
UpdateResult kf_update(const Eigen::Vector3d& a_pred, const Eigen::Matrix3d& P_pred,
                       const Eigen::Ref<const Eigen::VectorXd>& observed, std::span<const Eigen::Index> obs_rows,
                       const Eigen::Ref<const Eigen::MatrixXd>& loadings,
                       const Eigen::Ref<const Eigen::MatrixXd>& sigma_eps);

struct FilterOutput {
  std::vector<Eigen::Vector3d> a_pred;
  std::vector<Eigen::Matrix3d> P_pred;
  std::vector<Eigen::Vector3d> a_filt;
  std::vector<Eigen::Matrix3d> P_filt;
  std::vector<Eigen::VectorXd> innovations;
  std::vector<Eigen::MatrixXd> innovation_cov;
  double loglik = 0.0;

  [[nodiscard]] std::size_t periods() const { return a_filt.size(); }
};

FilterOutput run_filter(const DeflatedPanel& Z, const SsmParams& params, const Eigen::Ref<const Eigen::MatrixXd>& loadings,
                        const StateMoments& init);

/// Same, with an explicit measurement covariance instead of params.cov.
FilterOutput run_filter(const DeflatedPanel& Z, const SsmParams& params, const Eigen::Ref<const Eigen::MatrixXd>& loadings,
                        const Eigen::Ref<const Eigen::MatrixXd>& sigma_eps, const StateMoments& init);

/// -1/2 sum_t (e_t' L_t^{-1} e_t + log|L_t|) over periods with observations.
double log_likelihood(const FilterOutput& output);

}  // namespace dnsfr

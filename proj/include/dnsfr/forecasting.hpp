#pragma once

#include <vector>

#include <Eigen/Dense>

#include "dnsfr/estimation.hpp"
#include "dnsfr/kpca.hpp"
#include "dnsfr/nelson_siegel.hpp"
#include "dnsfr/state_space.hpp"

namespace dnsfr {

struct StateForecast {
  std::vector<Eigen::Vector3d> means;
  std::vector<Eigen::Matrix3d> covs;
};

/// k-step state moments for k = 1..h. Each step is one kf_predict call, so the
/// first step equals kf_predict(a_N, P_N) exactly.
StateForecast forecast_states(const Eigen::Vector3d& a_N, const Eigen::Matrix3d& P_N, const SsmParams& params,
                              int h);

struct ForecastResult {
  int horizon = 0;
  Eigen::MatrixXd yields;                     // h x N
  std::vector<Eigen::MatrixXd> covariances;   // h of N x N
  Eigen::MatrixXd state_means;                // h x 3, deflated coordinates
  std::vector<Eigen::Matrix3d> state_covs;
  /// Reference factors used for the forecast periods (h x Q); empty for DNS.
  Eigen::MatrixXd factors;
  /// True when the refitted kPCA basis no longer lines up column by column with
  /// the in-sample basis.
  bool basis_reordered = false;
};

/// yields_k = Lambda (mean_k + mu), covariance_k = Lambda cov_k Lambda^T + Sigma_eps.
ForecastResult forecast_dns(const FitResult& fit, const NsLoadingMatrix& loadings, int h);

/// Three-step DNS-FR forecast: DNS forecast of the reference curve, kPCA refit
/// on the in-sample plus forecast reference panel with gamma frozen, then the
/// response forecast Lambda (mean_k + mu) + Gamma U_{T+k}. Gamma from the
/// in-sample fit is reused as is.
ForecastResult forecast_dnsfr(const FitResult& response_fit, const FitResult& reference_fit, const KpcaModel& kpca,
                              const YieldPanel& reference_panel, const NsLoadingMatrix& loadings, int h);

/// Rows are forecast steps labelled by month, columns are tenors.
void write_forecast_csv(const ForecastResult& forecast, const std::vector<MonthStamp>& dates,
                        const std::vector<double>& tenors, const std::filesystem::path& path);

}  // namespace dnsfr

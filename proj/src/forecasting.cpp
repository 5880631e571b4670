#include "dnsfr/forecasting.hpp"

#include <fstream>
#include <stdexcept>

namespace dnsfr {

StateForecast forecast_states(const Eigen::Vector3d& a_N, const Eigen::Matrix3d& P_N, const SsmParams& params,
                              int h) {
  if (h < 1) throw std::invalid_argument("forecast_states: horizon must be >= 1");
  StateForecast out;
  out.means.reserve(static_cast<std::size_t>(h));
  out.covs.reserve(static_cast<std::size_t>(h));
  Eigen::Vector3d a = a_N;
  Eigen::Matrix3d P = P_N;
  for (int k = 0; k < h; ++k) {
    const StateMoments next = kf_predict(a, P, params);
    a = next.mean;
    P = next.cov;
    out.means.push_back(a);
    out.covs.push_back(P);
  }
  return out;
}

ForecastResult forecast_dns(const FitResult& fit, const NsLoadingMatrix& loadings, int h) {
  if (fit.filter.periods() == 0) throw std::invalid_argument("forecast_dns: fit has no filter output");
  const Eigen::MatrixXd& Lambda = loadings.matrix;
  const Eigen::Index N = Lambda.rows();
  const StateForecast states = forecast_states(fit.filter.a_filt.back(), fit.filter.P_filt.back(), fit.params, h);
  const Eigen::MatrixXd sigma_eps = build_sigma_eps(fit.params.cov, N);
  const Eigen::Vector3d mu = fit.params.mu();

  ForecastResult out;
  out.horizon = h;
  out.yields.resize(h, N);
  out.state_means.resize(h, 3);
  for (int k = 0; k < h; ++k) {
    out.state_means.row(k) = states.means[k].transpose();
    out.yields.row(k) = (Lambda * (states.means[k] + mu)).transpose();
    Eigen::MatrixXd cov = Lambda * states.covs[k] * Lambda.transpose() + sigma_eps;
    out.covariances.push_back(0.5 * (cov + cov.transpose()));
  }
  out.state_covs = states.covs;
  return out;
}

ForecastResult forecast_dnsfr(const FitResult& response_fit, const FitResult& reference_fit, const KpcaModel& kpca,
                              const YieldPanel& reference_panel, const NsLoadingMatrix& loadings, int h) {
  const Eigen::Index Q = response_fit.params.gamma.cols();
  if (Q != kpca.components()) throw std::invalid_argument("forecast_dnsfr: Gamma columns != kPCA components");

  // Step 1: reference forecast.
  const NsLoadingMatrix ref_loadings = loading_matrix(reference_panel.grid, reference_fit.params.lambda);
  const ForecastResult ref_forecast = forecast_dns(reference_fit, ref_loadings, h);

  // Step 2: refit the eigenbasis on the augmented reference panel, gamma frozen.
  const Eigen::Index T = reference_panel.periods();
  YieldPanel augmented = make_panel(
      month_range(reference_panel.dates.front(), static_cast<int>(T + h)),
      (Eigen::MatrixXd(T + h, reference_panel.tenor_count()) << reference_panel.values, ref_forecast.yields)
          .finished(),
      reference_panel.grid);
  const KpcaModel refit = fit_kpca(augmented, kpca.config, Q);
  const FactorPanel U = extract_factors(refit, augmented);

  // Step 3: response forecast with the in-sample Gamma.
  ForecastResult out = forecast_dns(response_fit, loadings, h);
  out.factors = U.values.bottomRows(h);
  for (int k = 0; k < h; ++k) {
    out.yields.row(k) += (response_fit.params.gamma * out.factors.row(k).transpose()).transpose();
  }
  if (kpca.Z.rows() == refit.Z.rows()) {
    const Eigen::MatrixXd overlap = (kpca.Z.transpose() * refit.Z).cwiseAbs();
    for (Eigen::Index q = 0; q < Q; ++q) {
      Eigen::Index match = 0;
      overlap.col(q).maxCoeff(&match);
      if (match != q) out.basis_reordered = true;
    }
  }
  return out;
}

void write_forecast_csv(const ForecastResult& forecast, const std::vector<MonthStamp>& dates,
                        const std::vector<double>& tenors, const std::filesystem::path& path) {
  if (static_cast<Eigen::Index>(dates.size()) != forecast.yields.rows() ||
      static_cast<Eigen::Index>(tenors.size()) != forecast.yields.cols()) {
    throw std::invalid_argument("write_forecast_csv: shape mismatch");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "step,date";
  for (double t : tenors) out << ',' << format_double(t);
  out << '\n';
  for (std::size_t k = 0; k < dates.size(); ++k) {
    out << k + 1 << ',' << dates[k].to_string();
    for (Eigen::Index i = 0; i < forecast.yields.cols(); ++i) {
      out << ',' << format_double(forecast.yields(static_cast<Eigen::Index>(k), i));
    }
    out << '\n';
  }
}

}  // namespace dnsfr

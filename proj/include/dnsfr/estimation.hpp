#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dnsfr/kpca.hpp"
#include "dnsfr/market_data.hpp"
#include "dnsfr/nelson_siegel.hpp"
#include "dnsfr/state_space.hpp"

namespace dnsfr {

/// Maps SsmParams to unconstrained coordinates and back.
///
/// Layout: psi0 (3), atanh psi1 (3), log sigma_eta (3), covariance block,
/// vec(Gamma) column-major (N Q). The covariance block is N log-sigmas for the
/// diagonal structure, N log-sigmas then theta for the band, and log sigma then
/// atanh rho for the AR structure.
class ParamLayout {
 public:
  ParamLayout(CovKind kind, Eigen::Index tenors, Eigen::Index factors);

  [[nodiscard]] CovKind kind() const { return kind_; }
  [[nodiscard]] Eigen::Index tenors() const { return tenors_; }
  [[nodiscard]] Eigen::Index factors() const { return factors_; }
  [[nodiscard]] Eigen::Index cov_size() const;
  [[nodiscard]] Eigen::Index size() const;

  /// Offset and length of the coordinates entering the likelihood nonlinearly
  /// (atanh psi1, log sigma_eta and the covariance block).
  [[nodiscard]] Eigen::Index nonlinear_offset() const { return 3; }
  [[nodiscard]] Eigen::Index nonlinear_size() const { return 6 + cov_size(); }

  [[nodiscard]] Eigen::VectorXd pack(const SsmParams& params) const;
  [[nodiscard]] SsmParams unpack(const Eigen::Ref<const Eigen::VectorXd>& x, double lambda) const;

 private:
  CovKind kind_;
  Eigen::Index tenors_;
  Eigen::Index factors_;
};

struct FitOptions {
  int starts = 5;
  int max_evaluations = 50000;
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
  /// Standard deviation of the perturbation applied to the nonlinear
  /// coordinates of starts after the first.
  double start_spread = 0.5;
  /// Concentrate mu and Gamma out of the likelihood by generalized least squares
  /// so the simplex only searches the nonlinear coordinates.
  bool profile_linear = true;
  /// First start; the default start is derived from static NS fits otherwise.
  std::optional<SsmParams> init;
};

struct FitResult {
  SsmParams params;
  double loglik = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  FilterOutput filter;
  /// Best log-likelihood after each simplex iteration of the winning start.
  std::vector<double> best_trace;
  /// Final log-likelihood of every start, in start order.
  std::vector<double> start_logliks;
};

/// Default start: psi0 from static NS factor means with psi1 = 0.9, sigma_eps
/// from static-fit residuals, sigma_eta from factor differences, Gamma = 0.
SsmParams default_start(const YieldPanel& panel, CovKind kind, Eigen::Index factors, double lambda);

/// Copy of `params` with Gamma replaced by an N x Q zero matrix.
SsmParams with_zero_regression(const SsmParams& params, Eigen::Index tenors, Eigen::Index factors);

/// Log-likelihood of the panel under `params`.
double evaluate_loglik(const YieldPanel& panel, const FactorPanel* factors, const SsmParams& params);

struct ProfiledLikelihood {
  double loglik = 0.0;
  Eigen::Vector3d mu;
  Eigen::MatrixXd gamma;
};

/// Maximizes the log-likelihood over mu and Gamma with every other parameter of
/// `params` held fixed. The innovations are affine in (mu, vec Gamma), so one
/// filter pass over the data and the regressor columns gives the exact maximum.
ProfiledLikelihood profile_linear_terms(const YieldPanel& panel, const FactorPanel* factors, const SsmParams& params);

/// Marginal maximum likelihood by multi-start Nelder-Mead. `factors` must be
/// present iff Q > 0. Throws std::runtime_error when every start ends at a
/// non-finite likelihood.
FitResult fit_mle(const YieldPanel& panel, const FactorPanel* factors, CovKind kind, Eigen::Index Q,
                  double lambda = kDefaultLambda, const FitOptions& options = {});

enum class StateChoice { Filtered, Predicted };

/// Lambda (a_t + mu) + Gamma U_t for every period.
Eigen::MatrixXd fitted_yields(const FitResult& fit, const FactorPanel* factors, const NsLoadingMatrix& loadings,
                              StateChoice states = StateChoice::Filtered);

struct RmseTable {
  std::vector<double> tenors;
  Eigen::VectorXd rmse;
  double mean = 0.0;
};

/// Per-tenor RMSE over recorded cells plus the unweighted mean over tenors.
RmseTable rmse_table(const YieldPanel& actual, const Eigen::MatrixXd& fitted);

/// Same, against a complete matrix of actual values.
RmseTable rmse_table(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& fitted, const std::vector<double>& tenors);

void write_rmse_csv(const RmseTable& table, const std::filesystem::path& path);

struct WindowConfig {
  Eigen::Index window = 60;
  Eigen::Index horizon = 12;
  CovKind kind = CovKind::Band;
  Eigen::Index Q = 3;
  double lambda = kDefaultLambda;
  FitOptions fit;
  /// Fixed kernel width; searched per window on `gamma_grid` when absent.
  std::optional<double> gamma;
  GammaGrid gamma_grid;
};

struct WindowRow {
  MonthStamp date;  // window midpoint
  double gamma = 0.0;
  double dns_in = 0.0;
  double dns_out = 0.0;
  double dnsfr_in = 0.0;
  double dnsfr_out = 0.0;
};

/// Rolling-window study: fit DNS and DNS-FR in each window, forecast `horizon`
/// months and record in- and out-of-sample mean RMSE. Panels must share dates
/// and be complete.
std::vector<WindowRow> moving_window(const YieldPanel& response, const YieldPanel& reference,
                                     const WindowConfig& config);

void write_window_csv(const std::vector<WindowRow>& rows, const std::filesystem::path& path);

}  // namespace dnsfr

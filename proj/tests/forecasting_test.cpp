#include <gtest/gtest.h>

#include <cmath>

#include "dnsfr/forecasting.hpp"
#include "test_support.hpp"

using namespace dnsfr;
using namespace dnsfr::testing;

TEST(ForecastStates, MemorylessDynamics) {
  Rng rng(1);
  SsmParams p = random_params(rng, CovKind::Diagonal, 3);
  p.psi1.setZero();
  const StateForecast f = forecast_states(Eigen::Vector3d(1, 2, 3), random_spd(rng, 3), p, 4);
  const Eigen::Matrix3d Q = p.sigma_eta.array().square().matrix().asDiagonal();
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(f.means[k], Eigen::Vector3d::Zero());
    EXPECT_EQ(f.covs[k], Q);
  }
}

TEST(ForecastStates, FirstStepIsKfPredict) {
  Rng rng(2);
  const SsmParams p = random_params(rng, CovKind::Band, 4);
  const Eigen::Vector3d a = random_matrix(rng, 3, 1);
  const Eigen::Matrix3d P = random_spd(rng, 3);
  const StateMoments one = kf_predict(a, P, p);
  const StateForecast f = forecast_states(a, P, p, 3);
  EXPECT_EQ(f.means[0], one.mean);
  EXPECT_EQ(f.covs[0], one.cov);
  EXPECT_THROW(forecast_states(a, P, p, 0), std::invalid_argument);
}

TEST(ForecastStates, UnrolledOracle) {
  Rng rng(3);
  const SsmParams p = random_params(rng, CovKind::Diagonal, 3);
  const Eigen::Vector3d a = random_matrix(rng, 3, 1);
  const Eigen::Matrix3d P = random_spd(rng, 3);
  const StateForecast f = forecast_states(a, P, p, 5);
  const Eigen::Matrix3d Phi = p.psi1.asDiagonal();
  const Eigen::Matrix3d Q = p.sigma_eta.array().square().matrix().asDiagonal();
  Eigen::Matrix3d Phik = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d acc = Eigen::Matrix3d::Zero();
  for (int k = 1; k <= 5; ++k) {
    // P_k = Phi^k P Phi^k' + sum_{j<k} Phi^j Q Phi^j'.
    acc += Phik * Q * Phik.transpose();
    Phik = Phi * Phik;
    EXPECT_LT((f.means[k - 1] - Phik * a).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((f.covs[k - 1] - (Phik * P * Phik.transpose() + acc)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ForecastStates, ConvergesToStationaryCovariance) {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const SsmParams p = random_params(rng, CovKind::Diagonal, 2);
    const StateForecast f = forecast_states(random_matrix(rng, 3, 1), random_spd(rng, 3), p, 500);
    const Eigen::Matrix3d stationary = stationary_init(p).cov;
    EXPECT_LT((f.covs.back() - stationary).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(f.means.back().cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(ForecastDns, DeterministicMeanReversion) {
  const MaturityGrid grid({3, 12, 60, 120});
  SsmParams p;
  p.psi1.setZero();
  p.sigma_eta.setZero();
  p.psi0 = Eigen::Vector3d(3.0, -1.0, 0.5);
  p.cov = DiagonalCov{Eigen::Vector4d::Constant(0.1)};
  p.gamma.resize(4, 0);
  const YieldPanel y = make_panel(month_range({2000, 1}, 3), Eigen::MatrixXd::Ones(3, 4), grid);
  FitResult fit = fit_from_params(y, nullptr, p);
  const NsLoadingMatrix L = loading_matrix(grid, p.lambda);
  const ForecastResult f = forecast_dns(fit, L, 6);
  const Eigen::VectorXd level = L.matrix * p.mu();
  for (int k = 0; k < 6; ++k) EXPECT_LT((f.yields.row(k).transpose() - level).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ForecastDns, HandComputedFirstStep) {
  const MaturityGrid grid({12, 36, 120, 240});
  SsmParams p;
  p.psi1 = Eigen::Vector3d(0.9, 0.5, 0.2);
  p.sigma_eta = Eigen::Vector3d(0.1, 0.2, 0.3);
  p.psi0 = Eigen::Vector3d(0.4, -0.3, 0.1);
  p.cov = DiagonalCov{Eigen::Vector4d(0.05, 0.07, 0.04, 0.06)};
  p.gamma.resize(4, 0);
  FitResult fit;
  fit.params = p;
  fit.filter.a_filt = {Eigen::Vector3d(0.3, -0.2, 0.1)};
  fit.filter.P_filt = {Eigen::Matrix3d::Identity() * 0.01};
  const NsLoadingMatrix L = loading_matrix(grid, p.lambda);
  const ForecastResult f = forecast_dns(fit, L, 1);
  const Eigen::Vector3d mu(0.4 / 0.1, -0.3 / 0.5, 0.1 / 0.8);
  for (Eigen::Index i = 0; i < 4; ++i) {
    const Eigen::RowVector3d l = loading_row(grid[static_cast<std::size_t>(i)], p.lambda);
    const double expected = l(0) * (0.9 * 0.3 + mu(0)) + l(1) * (0.5 * -0.2 + mu(1)) + l(2) * (0.2 * 0.1 + mu(2));
    EXPECT_NEAR(f.yields(0, i), expected, 1e-12);
  }
  const Eigen::Matrix3d P1 = kf_predict(fit.filter.a_filt[0], fit.filter.P_filt[0], p).cov;
  const Eigen::MatrixXd cov = L.matrix * P1 * L.matrix.transpose() + Eigen::MatrixXd(Eigen::Vector4d(0.0025, 0.0049, 0.0016, 0.0036).asDiagonal());
  EXPECT_LT((f.covariances[0] - cov).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ForecastDns, VarianceAccumulates) {
  Rng rng(5);
  SsmParams p = random_params(rng, CovKind::Band, 5);
  p.psi1 = p.psi1.cwiseAbs();
  const YieldPanel y = simulate_panel(p, MaturityGrid({3, 12, 36, 120, 360}), 30, rng);
  const ForecastResult f = forecast_dns(fit_from_params(y, nullptr, p), loading_matrix(y.grid, p.lambda), 24);
  for (int k = 1; k < 24; ++k) {
    for (Eigen::Index i = 0; i < 5; ++i) EXPECT_GE(f.covariances[k](i, i), f.covariances[k - 1](i, i) - 1e-14);
  }
  for (const Eigen::MatrixXd& c : f.covariances) EXPECT_EQ(c, c.transpose());
}

namespace {

struct FrSetup {
  YieldPanel reference;
  YieldPanel response;
  KpcaModel kpca;
  FactorPanel U;
  FitResult ref_fit;
  SsmParams resp_params;
};

FrSetup fr_setup(std::uint64_t seed) {
  Rng rng(seed);
  const MaturityGrid grid = MaturityGrid::canonical();
  FrSetup s;
  const SsmParams ref_params = random_params(rng, CovKind::Diagonal, 12);
  s.reference = simulate_panel(ref_params, grid, 40, rng);
  s.kpca = fit_kpca(s.reference, {0.05}, 3);
  s.U = extract_factors(s.kpca, s.reference);
  s.ref_fit = fit_from_params(s.reference, nullptr, ref_params);
  s.resp_params = random_params(rng, CovKind::Band, 12, 3);
  s.response = simulate_panel(s.resp_params, grid, 40, rng, &s.U);
  return s;
}

}  // namespace

TEST(ForecastDnsfr, ZeroGammaMatchesDns) {
  FrSetup s = fr_setup(6);
  s.resp_params.gamma.setZero();
  const FitResult fr = fit_from_params(s.response, &s.U, s.resp_params);
  const NsLoadingMatrix L = loading_matrix(s.response.grid, kDefaultLambda);
  const ForecastResult a = forecast_dnsfr(fr, s.ref_fit, s.kpca, s.reference, L, 12);
  const ForecastResult b = forecast_dns(fr, L, 12);
  EXPECT_EQ(a.yields, b.yields);
  for (int k = 0; k < 12; ++k) EXPECT_EQ(a.covariances[k], b.covariances[k]);
}

TEST(ForecastDnsfr, ThreeStepRecomputation) {
  const FrSetup s = fr_setup(7);
  const FitResult fr = fit_from_params(s.response, &s.U, s.resp_params);
  const NsLoadingMatrix L = loading_matrix(s.response.grid, kDefaultLambda);
  const int h = 6;
  const ForecastResult f = forecast_dnsfr(fr, s.ref_fit, s.kpca, s.reference, L, h);

  const ForecastResult ref = forecast_dns(s.ref_fit, L, h);
  Eigen::MatrixXd stacked(40 + h, 12);
  stacked << s.reference.values, ref.yields;
  const Eigen::MatrixXd K = kernel_matrix(Eigen::MatrixXd(stacked.transpose()), {0.05});
  const KpcaModel refit = fit_kpca(K, 3);
  const Eigen::MatrixXd Uh = stacked.bottomRows(h) * refit.Z;
  EXPECT_LT((f.factors - Uh).cwiseAbs().maxCoeff(), 1e-10);
  const ForecastResult base = forecast_dns(fr, L, h);
  const Eigen::MatrixXd expected = base.yields + Uh * s.resp_params.gamma.transpose();
  EXPECT_LT((f.yields - expected).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(f.horizon, h);
}

TEST(WriteForecastCsv, Layout) {
  const FrSetup s = fr_setup(8);
  const ForecastResult f = forecast_dns(s.ref_fit, loading_matrix(s.reference.grid, kDefaultLambda), 2);
  const auto dir = scratch_dir("forecast_csv");
  write_forecast_csv(f, month_range({2003, 5}, 2), s.reference.grid.tenors(), dir / "f.csv");
  const std::string text = slurp(dir / "f.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "step,date,1,3,6,9,12,24,36,60,84,120,240,360");
  EXPECT_NE(text.find("\n2,2003-06,"), std::string::npos);
  EXPECT_THROW(write_forecast_csv(f, month_range({2003, 5}, 3), s.reference.grid.tenors(), dir / "g.csv"),
               std::invalid_argument);
}

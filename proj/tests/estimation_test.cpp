#include <gtest/gtest.h>

#include <cmath>

#include "dnsfr/estimation.hpp"
#include "test_support.hpp"

using namespace dnsfr;
using namespace dnsfr::testing;

namespace {

SsmParams truth(Eigen::Index N, CovKind kind = CovKind::Diagonal) {
  SsmParams p;
  p.psi1 = Eigen::Vector3d(0.95, 0.8, 0.7);
  p.sigma_eta = Eigen::Vector3d(0.15, 0.25, 0.35);
  const Eigen::Vector3d mu(4.0, -1.5, 0.8);
  p.psi0 = mu.cwiseProduct(Eigen::Vector3d::Ones() - p.psi1);
  switch (kind) {
    case CovKind::Diagonal:
      p.cov = DiagonalCov{Eigen::VectorXd::Constant(N, 0.08)};
      break;
    case CovKind::Band:
      p.cov = BandCov{Eigen::VectorXd::Constant(N, 0.08), 0.7};
      break;
    case CovKind::FullAr:
      p.cov = FullArCov{0.08, 0.3};
      break;
  }
  p.gamma.resize(N, 0);
  return p;
}

// Scaled difference in units of the larger magnitude's ulp.
double ulps(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), std::numeric_limits<double>::min()});
  return std::abs(a - b) / (scale * std::numeric_limits<double>::epsilon());
}

double max_ulps(const SsmParams& a, const SsmParams& b) {
  double worst = 0.0;
  for (int j = 0; j < 3; ++j) {
    worst = std::max({worst, ulps(a.psi0(j), b.psi0(j)), ulps(a.psi1(j), b.psi1(j)),
                      ulps(a.sigma_eta(j), b.sigma_eta(j))});
  }
  const auto va = [](const CovStructure& c) -> Eigen::VectorXd {
    return std::visit(
        [](const auto& s) -> Eigen::VectorXd {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, DiagonalCov>) {
            return s.sigma;
          } else if constexpr (std::is_same_v<T, BandCov>) {
            Eigen::VectorXd v(s.sigma.size() + 1);
            v << s.sigma, s.theta;
            return v;
          } else {
            return Eigen::Vector2d(s.sigma, s.rho);
          }
        },
        c);
  };
  const Eigen::VectorXd ca = va(a.cov);
  const Eigen::VectorXd cb = va(b.cov);
  for (Eigen::Index i = 0; i < ca.size(); ++i) worst = std::max(worst, ulps(ca(i), cb(i)));
  for (Eigen::Index i = 0; i < a.gamma.size(); ++i) worst = std::max(worst, ulps(a.gamma.data()[i], b.gamma.data()[i]));
  return worst;
}

}  // namespace

TEST(ParamLayout, Sizes) {
  EXPECT_EQ(ParamLayout(CovKind::Diagonal, 12, 0).size(), 9 + 12);
  EXPECT_EQ(ParamLayout(CovKind::Band, 12, 3).size(), 9 + 13 + 36);
  EXPECT_EQ(ParamLayout(CovKind::FullAr, 12, 2).size(), 9 + 2 + 24);
  EXPECT_EQ(ParamLayout(CovKind::Band, 12, 3).nonlinear_size(), 6 + 13);
}

TEST(ParamLayout, PackUnpackIsBijective) {
  Rng rng(31);
  double worst = 0.0;
  for (int k = 0; k < 100000; ++k) {
    const auto kind = static_cast<CovKind>(1 + k % 3);
    const Eigen::Index N = 1 + k % 12;
    const Eigen::Index Q = k % 4;
    const ParamLayout layout(kind, N, Q);
    const SsmParams p = random_params(rng, kind, N, Q);
    worst = std::max(worst, max_ulps(layout.unpack(layout.pack(p), p.lambda), p));
    if (k % 10 == 0) {
      const Eigen::VectorXd x = random_matrix(rng, layout.size(), 1);
      const Eigen::VectorXd back = layout.pack(layout.unpack(x, p.lambda));
      EXPECT_LT((back - x).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
  // atanh / tanh and log / exp round trips lose a few ulps.
  EXPECT_LE(worst, 16.0);
}

TEST(ParamLayout, UnpackAlwaysValid) {
  Rng rng(32);
  const ParamLayout layout(CovKind::Band, 12, 2);
  for (int k = 0; k < 1000; ++k) {
    const SsmParams p = layout.unpack(random_matrix(rng, layout.size(), 1, 3.0), kDefaultLambda);
    EXPECT_NO_THROW(p.validate());
  }
}

TEST(Profile, MatchesPlainLikelihoodAtOptimum) {
  Rng rng(33);
  const MaturityGrid grid = MaturityGrid::canonical();
  const FactorPanel U{month_range({2000, 1}, 60), random_matrix(rng, 60, 2)};
  for (CovKind kind : {CovKind::Diagonal, CovKind::Band, CovKind::FullAr}) {
    SsmParams p = truth(12, kind);
    p.gamma = random_matrix(rng, 12, 2, 0.2);
    YieldPanel y = simulate_panel(p, grid, 60, rng, &U);
    y.mask(3, 4) = false;
    y.values(3, 4) = std::nan("");

    const ProfiledLikelihood prof = profile_linear_terms(y, &U, p);
    SsmParams at = p;
    at.psi0 = prof.mu.cwiseProduct(Eigen::Vector3d::Ones() - p.psi1);
    at.gamma = prof.gamma;
    EXPECT_NEAR(prof.loglik, evaluate_loglik(y, &U, at), 1e-8 * std::abs(prof.loglik));
    // No other linear term does better.
    for (int k = 0; k < 5; ++k) {
      SsmParams other = at;
      other.psi0 += 0.01 * random_matrix(rng, 3, 1);
      other.gamma += 0.01 * random_matrix(rng, 12, 2);
      EXPECT_LT(evaluate_loglik(y, &U, other), prof.loglik);
    }
  }
}

TEST(FitMle, RecoversSimulatedDynamics) {
  Rng rng(34);
  const MaturityGrid grid({3, 12, 36, 60, 120, 360});
  const SsmParams p = truth(6);
  const YieldPanel y = simulate_panel(p, grid, 400, rng);
  FitOptions opts;
  opts.starts = 1;
  opts.tolerance = 1e-6;
  const FitResult fit = fit_mle(y, nullptr, CovKind::Diagonal, 0, kDefaultLambda, opts);
  EXPECT_TRUE(fit.converged);
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(fit.params.psi1(j), p.psi1(j), 0.1);
    EXPECT_NEAR(fit.params.sigma_eta(j) / p.sigma_eta(j), 1.0, 0.2);
  }
  EXPECT_EQ(fit.loglik, fit.filter.loglik);
  EXPECT_EQ(fit.loglik, evaluate_loglik(y, nullptr, fit.params));
  for (std::size_t i = 1; i < fit.best_trace.size(); ++i) EXPECT_GE(fit.best_trace[i], fit.best_trace[i - 1]);
}

TEST(FitMle, ProfiledAndFullSearchAgree) {
  Rng rng(35);
  const MaturityGrid grid({6, 24, 60, 120});
  const SsmParams p = truth(4);
  const YieldPanel y = simulate_panel(p, grid, 150, rng);
  FitOptions opts;
  opts.starts = 1;
  opts.tolerance = 1e-9;
  const FitResult prof = fit_mle(y, nullptr, CovKind::Diagonal, 0, kDefaultLambda, opts);
  opts.profile_linear = false;
  opts.init = prof.params;
  const FitResult full = fit_mle(y, nullptr, CovKind::Diagonal, 0, kDefaultLambda, opts);
  // The full search started at the profiled optimum cannot improve on it materially.
  EXPECT_GE(full.loglik, prof.loglik);
  EXPECT_NEAR(full.loglik, prof.loglik, 1e-4);
}

TEST(FitMle, NestingWithDnsStart) {
  Rng rng(36);
  const MaturityGrid grid({3, 12, 60, 120});
  for (int rep = 0; rep < 3; ++rep) {
    const YieldPanel y = simulate_panel(truth(4), grid, 80, rng);
    const FactorPanel U{y.dates, random_matrix(rng, 80, 2)};
    FitOptions opts;
    opts.starts = 2;
    opts.seed = static_cast<std::uint64_t>(rep);
    opts.max_evaluations = 3000;
    const FitResult dns = fit_mle(y, nullptr, CovKind::Diagonal, 0, kDefaultLambda, opts);
    opts.init = with_zero_regression(dns.params, 4, 2);
    const FitResult fr = fit_mle(y, &U, CovKind::Diagonal, 2, kDefaultLambda, opts);
    EXPECT_GE(fr.loglik, dns.loglik);
    EXPECT_EQ(evaluate_loglik(y, &U, *opts.init), dns.loglik);
  }
}

TEST(FitMle, MultiStartIsDeterministic) {
  Rng rng(37);
  const YieldPanel y = simulate_panel(truth(4), MaturityGrid({6, 24, 60, 120}), 50, rng);
  FitOptions opts;
  opts.starts = 3;
  opts.seed = 11;
  opts.max_evaluations = 2000;
  const FitResult a = fit_mle(y, nullptr, CovKind::Band, 0, kDefaultLambda, opts);
  const FitResult b = fit_mle(y, nullptr, CovKind::Band, 0, kDefaultLambda, opts);
  EXPECT_EQ(a.loglik, b.loglik);
  EXPECT_EQ(a.start_logliks, b.start_logliks);
  EXPECT_EQ(a.start_logliks.size(), 3u);
}

TEST(FitMle, SinglePeriodDoesNotCrash) {
  Rng rng(38);
  const YieldPanel y = simulate_panel(truth(4), MaturityGrid({3, 12, 60, 120}), 1, rng);
  FitOptions opts;
  opts.starts = 1;
  opts.max_evaluations = 2000;
  try {
    const FitResult fit = fit_mle(y, nullptr, CovKind::Diagonal, 0, kDefaultLambda, opts);
    EXPECT_TRUE(!fit.converged || fit.params.sigma_eta.maxCoeff() > 0.0);
  } catch (const std::runtime_error&) {
    SUCCEED();
  }
}

TEST(FitMle, RejectsMissingFactors) {
  Rng rng(39);
  const YieldPanel y = simulate_panel(truth(4), MaturityGrid({6, 24, 60, 120}), 10, rng);
  EXPECT_THROW(fit_mle(y, nullptr, CovKind::Diagonal, 2), std::invalid_argument);
}

TEST(FittedYields, DirectRecomputation) {
  Rng rng(40);
  const MaturityGrid grid({3, 12, 60, 120, 360});
  SsmParams p = truth(5);
  p.gamma = random_matrix(rng, 5, 2, 0.3);
  const FactorPanel U{month_range({2000, 1}, 20), random_matrix(rng, 20, 2)};
  const YieldPanel y = simulate_panel(p, grid, 20, rng, &U);
  const FitResult fit = fit_from_params(y, &U, p);
  const NsLoadingMatrix L = loading_matrix(grid, p.lambda);
  const Eigen::MatrixXd got = fitted_yields(fit, &U, L);
  const Eigen::MatrixXd pred = fitted_yields(fit, &U, L, StateChoice::Predicted);
  for (Eigen::Index t = 0; t < 20; ++t) {
    for (Eigen::Index i = 0; i < 5; ++i) {
      double v = 0.0;
      double w = 0.0;
      for (int j = 0; j < 3; ++j) {
        v += L.matrix(i, j) * (fit.filter.a_filt[t](j) + p.mu()(j));
        w += L.matrix(i, j) * (fit.filter.a_pred[t](j) + p.mu()(j));
      }
      for (Eigen::Index q = 0; q < 2; ++q) {
        v += p.gamma(i, q) * U.values(t, q);
        w += p.gamma(i, q) * U.values(t, q);
      }
      EXPECT_NEAR(got(t, i), v, 1e-12);
      EXPECT_NEAR(pred(t, i), w, 1e-12);
    }
  }
}

TEST(FittedYields, ZeroGammaReducesToDns) {
  Rng rng(41);
  const MaturityGrid grid({3, 12, 60, 120});
  const SsmParams p = truth(4);
  const YieldPanel y = simulate_panel(p, grid, 30, rng);
  const FactorPanel U{y.dates, random_matrix(rng, 30, 3)};
  const NsLoadingMatrix L = loading_matrix(grid, p.lambda);
  const Eigen::MatrixXd dns = fitted_yields(fit_from_params(y, nullptr, p), nullptr, L);
  const SsmParams zero = with_zero_regression(p, 4, 3);
  EXPECT_EQ(fitted_yields(fit_from_params(y, &U, zero), &U, L), dns);
}

TEST(FittedYields, NoiselessPanelIsReproduced) {
  Rng rng(42);
  const MaturityGrid grid({3, 12, 60, 120, 360});
  SsmParams p = truth(5);
  p.cov = DiagonalCov{Eigen::VectorXd::Constant(5, 1e-7)};
  const YieldPanel y = simulate_panel(p, grid, 40, rng);
  const Eigen::MatrixXd fitted = fitted_yields(fit_from_params(y, nullptr, p), nullptr, loading_matrix(grid, p.lambda));
  EXPECT_LT((fitted - y.values).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FittedYields, InvariantUnderBasisPermutation) {
  Rng rng(43);
  const MaturityGrid grid({3, 12, 60, 120});
  SsmParams p = truth(4);
  p.gamma = random_matrix(rng, 4, 3, 0.3);
  const FactorPanel U{month_range({2000, 1}, 25), random_matrix(rng, 25, 3)};
  const YieldPanel y = simulate_panel(p, grid, 25, rng, &U);
  Eigen::PermutationMatrix<3> perm;
  perm.indices() << 2, 0, 1;
  SsmParams q = p;
  q.gamma = p.gamma * perm;
  FactorPanel V = U;
  V.values = U.values * perm;
  const NsLoadingMatrix L = loading_matrix(grid, p.lambda);
  const Eigen::MatrixXd a = fitted_yields(fit_from_params(y, &U, p), &U, L);
  const Eigen::MatrixXd b = fitted_yields(fit_from_params(y, &V, q), &V, L);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RmseTable, PerfectFitAndSingleOffset) {
  Rng rng(44);
  const YieldPanel y = make_panel(month_range({2000, 1}, 10), random_matrix(rng, 10, 4), MaturityGrid({1, 2, 3, 4}));
  const RmseTable zero = rmse_table(y, y.values);
  EXPECT_EQ(zero.rmse, Eigen::VectorXd::Zero(4));
  EXPECT_EQ(zero.mean, 0.0);
  Eigen::MatrixXd shifted = y.values;
  shifted.col(2).array() += 1.0;
  const RmseTable one = rmse_table(y, shifted);
  EXPECT_NEAR(one.rmse(2), 1.0, 1e-12);
  EXPECT_EQ(one.rmse(0), 0.0);
  EXPECT_NEAR(one.mean, 0.25, 1e-12);
}

TEST(RmseTable, SkipsMissingCellsAndRejectsEmptyTenor) {
  YieldPanel y = make_panel(month_range({2000, 1}, 2), Eigen::MatrixXd::Zero(2, 4), MaturityGrid({1, 2, 3, 4}));
  y.mask(0, 0) = false;
  y.values(0, 0) = std::nan("");
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(2, 4);
  f.col(0) << 100.0, 3.0;
  f.col(1) << 0.0, 4.0;
  const RmseTable t = rmse_table(y, f);
  EXPECT_DOUBLE_EQ(t.rmse(0), 3.0);
  EXPECT_DOUBLE_EQ(t.rmse(1), std::sqrt(8.0));
  y.mask(1, 0) = false;
  y.values(1, 0) = std::nan("");
  EXPECT_THROW(rmse_table(y, f), DataError);
}

TEST(MovingWindow, WindowCount) {
  Rng rng(45);
  const MaturityGrid grid = MaturityGrid::canonical();
  const Eigen::Index T = 24 + 6 + 2;
  const YieldPanel resp = simulate_panel(truth(12), grid, T, rng);
  const YieldPanel ref = simulate_panel(truth(12), grid, T, rng);
  WindowConfig cfg;
  cfg.window = 24;
  cfg.horizon = 6;
  cfg.kind = CovKind::Diagonal;
  cfg.Q = 2;
  cfg.gamma = 0.05;
  cfg.fit.starts = 1;
  cfg.fit.max_evaluations = 400;
  const std::vector<WindowRow> rows = moving_window(resp, ref, cfg);
  ASSERT_EQ(rows.size(), static_cast<std::size_t>(T - 24 - 6 + 1));
  EXPECT_EQ(rows.front().date, resp.dates[12]);
  EXPECT_EQ(rows.back().date, resp.dates[14]);
  for (const WindowRow& r : rows) {
    EXPECT_TRUE(std::isfinite(r.dns_in) && std::isfinite(r.dns_out));
    EXPECT_TRUE(std::isfinite(r.dnsfr_in) && std::isfinite(r.dnsfr_out));
  }

  const YieldPanel exact_resp = resp.slice(0, 30);
  const YieldPanel exact_ref = ref.slice(0, 30);
  EXPECT_EQ(moving_window(exact_resp, exact_ref, cfg).size(), 1u);
  EXPECT_THROW(moving_window(resp.slice(0, 29), ref.slice(0, 29), cfg), DataError);
}

TEST(DefaultStart, StaticFitSeeds) {
  Rng rng(46);
  const YieldPanel y = simulate_panel(truth(12), MaturityGrid::canonical(), 50, rng);
  const SsmParams s = default_start(y, CovKind::Band, 3, kDefaultLambda);
  EXPECT_EQ(s.psi1, Eigen::Vector3d::Constant(0.9));
  EXPECT_EQ(s.gamma, Eigen::MatrixXd::Zero(12, 3));
  EXPECT_NO_THROW(s.validate());
  const Eigen::Vector3d mean = fit_static_ns(y, kDefaultLambda).factors.colwise().mean().transpose();
  EXPECT_LT((s.mu() - mean).cwiseAbs().maxCoeff(), 1e-10);
}

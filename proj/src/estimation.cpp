#include "dnsfr/estimation.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "dnsfr/forecasting.hpp"
#include "dnsfr/optimizer.hpp"
#include "dnsfr/stats.hpp"

namespace dnsfr {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSigmaFloor = 1e-4;

void check_factors(const YieldPanel& panel, const FactorPanel* factors, Eigen::Index Q, const char* where) {
  if ((Q > 0) != (factors != nullptr)) {
    throw std::invalid_argument(std::string(where) + ": factor panel must be supplied iff Q > 0");
  }
  if (factors != nullptr && (factors->values.rows() != panel.periods() || factors->values.cols() != Q)) {
    throw std::invalid_argument(std::string(where) + ": factor panel must be T x Q");
  }
}

Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& M, const Eigen::VectorXd& b) {
  if (M.rows() == 0) return Eigen::VectorXd();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  if (ldlt.info() == Eigen::Success) {
    Eigen::VectorXd beta = ldlt.solve(b);
    const double scale = b.norm() + M.norm() * beta.norm();
    if (beta.allFinite() && (M * beta - b).norm() <= 1e-9 * std::max(scale, 1e-300)) return beta;
  }
  // Collinear regressors (e.g. a factor that is constant in time): minimum-norm solution.
  return Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(M).solve(b);
}

}  // namespace

ParamLayout::ParamLayout(CovKind kind, Eigen::Index tenors, Eigen::Index factors)
    : kind_(kind), tenors_(tenors), factors_(factors) {
  if (tenors < 1) throw std::invalid_argument("ParamLayout: need at least one tenor");
  if (factors < 0) throw std::invalid_argument("ParamLayout: negative factor count");
}

Eigen::Index ParamLayout::cov_size() const {
  switch (kind_) {
    case CovKind::Diagonal: return tenors_;
    case CovKind::Band: return tenors_ + 1;
    case CovKind::FullAr: return 2;
  }
  return 0;
}

Eigen::Index ParamLayout::size() const { return 9 + cov_size() + tenors_ * factors_; }

Eigen::VectorXd ParamLayout::pack(const SsmParams& params) const {
  if (kind_of(params.cov) != kind_) throw std::invalid_argument("ParamLayout::pack: covariance structure mismatch");
  if (params.gamma.rows() != (factors_ > 0 ? tenors_ : params.gamma.rows()) || params.gamma.cols() != factors_) {
    throw std::invalid_argument("ParamLayout::pack: Gamma must be N x Q");
  }
  Eigen::VectorXd x(size());
  x.segment<3>(0) = params.psi0;
  x.segment<3>(3) = params.psi1.array().atanh().matrix();
  x.segment<3>(6) = params.sigma_eta.array().log().matrix();
  auto block = x.segment(9, cov_size());
  std::visit(
      [&](const auto& c) {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, FullArCov>) {
          block(0) = std::log(c.sigma);
          block(1) = std::atanh(c.rho);
        } else {
          if (c.sigma.size() != tenors_) throw std::invalid_argument("ParamLayout::pack: sigma must have N entries");
          block.head(tenors_) = c.sigma.array().log().matrix();
          if constexpr (std::is_same_v<C, BandCov>) block(tenors_) = c.theta;
        }
      },
      params.cov);
  if (factors_ > 0) {
    x.tail(tenors_ * factors_) = params.gamma.reshaped();
  }
  return x;
}

SsmParams ParamLayout::unpack(const Eigen::Ref<const Eigen::VectorXd>& x, double lambda) const {
  if (x.size() != size()) throw std::invalid_argument("ParamLayout::unpack: wrong vector length");
  SsmParams p;
  p.lambda = lambda;
  p.psi0 = x.segment<3>(0);
  p.psi1 = x.segment<3>(3).array().tanh().matrix();
  p.sigma_eta = x.segment<3>(6).array().exp().matrix();
  const auto block = x.segment(9, cov_size());
  switch (kind_) {
    case CovKind::Diagonal: p.cov = DiagonalCov{block.array().exp().matrix()}; break;
    case CovKind::Band: p.cov = BandCov{block.head(tenors_).array().exp().matrix(), block(tenors_)}; break;
    case CovKind::FullAr: p.cov = FullArCov{std::exp(block(0)), std::tanh(block(1))}; break;
  }
  p.gamma = Eigen::MatrixXd::Zero(tenors_, factors_);
  if (factors_ > 0) p.gamma.reshaped() = x.tail(tenors_ * factors_);
  return p;
}

SsmParams default_start(const YieldPanel& panel, CovKind kind, Eigen::Index factors, double lambda) {
  const StaticNsFit st = fit_static_ns(panel, lambda);
  const Eigen::Index T = panel.periods();
  const Eigen::Index N = panel.tenor_count();

  SsmParams p;
  p.lambda = lambda;
  p.psi1 = Eigen::Vector3d::Constant(0.9);
  p.psi0 = st.factors.colwise().mean().transpose() * 0.1;
  if (T >= 3) {
    const Eigen::MatrixXd d = st.factors.bottomRows(T - 1) - st.factors.topRows(T - 1);
    const Eigen::RowVector3d centred_mean = d.colwise().mean();
    for (int j = 0; j < 3; ++j) {
      const double var = (d.col(j).array() - centred_mean(j)).square().sum() / static_cast<double>(T - 2);
      p.sigma_eta(j) = std::max(std::sqrt(var), kSigmaFloor);
    }
  } else {
    p.sigma_eta.setConstant(0.1);
  }

  Eigen::VectorXd sigma(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    double ss = 0.0;
    int n = 0;
    for (Eigen::Index t = 0; t < T; ++t) {
      const double r = st.residuals(t, i);
      if (std::isfinite(r)) {
        ss += r * r;
        ++n;
      }
    }
    sigma(i) = n > 0 ? std::max(std::sqrt(ss / n), kSigmaFloor) : 0.1;
  }
  switch (kind) {
    case CovKind::Diagonal: p.cov = DiagonalCov{sigma}; break;
    case CovKind::Band: p.cov = BandCov{sigma, 0.0}; break;
    case CovKind::FullAr: p.cov = FullArCov{std::sqrt(sigma.squaredNorm() / static_cast<double>(N)), 0.0}; break;
  }
  p.gamma = Eigen::MatrixXd::Zero(N, factors);
  return p;
}

SsmParams with_zero_regression(const SsmParams& params, Eigen::Index tenors, Eigen::Index factors) {
  SsmParams p = params;
  p.gamma = Eigen::MatrixXd::Zero(tenors, factors);
  return p;
}

double evaluate_loglik(const YieldPanel& panel, const FactorPanel* factors, const SsmParams& params) {
  params.validate();
  const NsLoadingMatrix loadings = loading_matrix(panel.grid, params.lambda);
  const DeflatedPanel Z = deflate(panel, factors, params, loadings);
  return run_filter(Z, params, loadings.matrix, stationary_init(params)).loglik;
}

ProfiledLikelihood profile_linear_terms(const YieldPanel& panel, const FactorPanel* factors, const SsmParams& params) {
  params.validate();
  const Eigen::Index T = panel.periods();
  const Eigen::Index N = panel.tenor_count();
  const Eigen::Index Q = params.gamma.cols();
  check_factors(panel, factors, Q, "profile_linear_terms");
  if (Q > 0 && params.gamma.rows() != N) throw std::invalid_argument("profile_linear_terms: Gamma must be N x Q");

  const Eigen::MatrixXd Lambda = loading_matrix(panel.grid, params.lambda).matrix;
  const Eigen::MatrixXd S = build_sigma_eps(params.cov, N);
  // Column 0 carries the data, columns 1..3 the mu regressors, the rest vec(Gamma).
  const Eigen::Index k = 3 + N * Q;
  const Eigen::Index cols = k + 1;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3, cols);
  Eigen::Matrix3d P = stationary_init(params).cov;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(cols, cols);
  double logdet = 0.0;
  std::vector<Eigen::Index> rows;
  rows.reserve(N);
  for (Eigen::Index t = 0; t < T; ++t) {
    P = kf_predict(Eigen::Vector3d::Zero(), P, params).cov;
    A = params.psi1.asDiagonal() * A;
    rows.clear();
    for (Eigen::Index i = 0; i < N; ++i) {
      if (panel.mask(t, i)) rows.push_back(i);
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    if (n == 0) continue;

    Eigen::MatrixXd Lo(n, 3);
    Eigen::MatrixXd So(n, n);
    Eigen::MatrixXd obs = Eigen::MatrixXd::Zero(n, cols);
    for (Eigen::Index r = 0; r < n; ++r) {
      const Eigen::Index i = rows[r];
      Lo.row(r) = Lambda.row(i);
      for (Eigen::Index c = 0; c < n; ++c) So(r, c) = S(i, rows[c]);
      obs(r, 0) = panel.values(t, i);
      obs.block(r, 1, 1, 3) = Lambda.row(i);
      for (Eigen::Index q = 0; q < Q; ++q) obs(r, 4 + i + q * N) = factors->values(t, q);
    }
    const Eigen::MatrixXd E = obs - Lo * A;
    const Eigen::MatrixXd PLt = P * Lo.transpose();
    Eigen::MatrixXd L = Lo * PLt + So;
    L = 0.5 * (L + L.transpose()).eval();
    Eigen::LLT<Eigen::MatrixXd> llt(L);
    if (llt.info() != Eigen::Success) {
      throw std::domain_error("profile_linear_terms: innovation covariance is not positive definite");
    }
    const Eigen::MatrixXd gain = llt.solve(PLt.transpose()).transpose();
    A += gain * E;
    P = (Eigen::Matrix3d::Identity() - gain * Lo) * P;
    P = 0.5 * (P + P.transpose()).eval();
    const Eigen::MatrixXd white = llt.matrixL().solve(E);
    M.noalias() += white.transpose() * white;
    logdet += 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }

  const Eigen::MatrixXd Mxx = M.bottomRightCorner(k, k);
  const Eigen::VectorXd b = M.col(0).tail(k);
  const Eigen::VectorXd beta = solve_normal_equations(Mxx, b);
  const double quad = M(0, 0) - 2.0 * beta.dot(b) + beta.dot(Mxx * beta);

  ProfiledLikelihood out;
  out.loglik = -0.5 * (quad + logdet);
  out.mu = beta.head<3>();
  out.gamma = Eigen::MatrixXd::Zero(N, Q);
  if (Q > 0) out.gamma.reshaped() = beta.tail(N * Q);
  return out;
}

FitResult fit_mle(const YieldPanel& panel, const FactorPanel* factors, CovKind kind, Eigen::Index Q, double lambda,
                  const FitOptions& options) {
  if (panel.periods() < 1) throw std::invalid_argument("fit_mle: empty panel");
  if (options.starts < 1) throw std::invalid_argument("fit_mle: need at least one start");
  check_factors(panel, factors, Q, "fit_mle");
  const Eigen::Index N = panel.tenor_count();
  const ParamLayout layout(kind, N, Q);

  SsmParams start = options.init ? *options.init : default_start(panel, kind, Q, lambda);
  start.lambda = lambda;
  const Eigen::VectorXd x0 = layout.pack(start);
  const Eigen::Index off = layout.nonlinear_offset();
  const Eigen::Index len = layout.nonlinear_size();

  // Complete parameters from the optimizer's coordinates.
  auto profiled_params = [&](const Eigen::VectorXd& y) {
    Eigen::VectorXd x = x0;
    x.segment(off, len) = y;
    SsmParams p = layout.unpack(x, lambda);
    const ProfiledLikelihood prof = profile_linear_terms(panel, factors, p);
    p.psi0 = prof.mu.cwiseProduct(Eigen::Vector3d::Ones() - p.psi1);
    p.gamma = prof.gamma;
    return std::pair{p, prof.loglik};
  };
  auto objective = [&](const Eigen::VectorXd& y) {
    try {
      if (options.profile_linear) return -profiled_params(y).second;
      return -evaluate_loglik(panel, factors, layout.unpack(y, lambda));
    } catch (const std::exception&) {
      return kInf;
    }
  };
  auto plain_loglik = [&](const SsmParams& p) {
    try {
      const double ll = evaluate_loglik(panel, factors, p);
      return std::isfinite(ll) ? ll : -kInf;
    } catch (const std::exception&) {
      return -kInf;
    }
  };

  SimplexOptions simplex;
  simplex.max_evaluations = options.max_evaluations;
  simplex.diameter_tolerance = options.tolerance;

  FitResult best;
  best.loglik = -kInf;
  bool have_best = false;
  int total_evaluations = 0;
  std::vector<double> start_logliks;
  for (int s = 0; s < options.starts; ++s) {
    Eigen::VectorXd y0 = options.profile_linear ? Eigen::VectorXd(x0.segment(off, len)) : x0;
    if (s > 0) {
      Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(s)));
      Eigen::VectorXd noise(len);
      standard_normals(rng, noise);
      y0.segment(options.profile_linear ? 0 : off, len) += options.start_spread * noise;
    }
    const SimplexResult nm = nelder_mead(objective, y0, simplex);
    total_evaluations += nm.evaluations;

    SsmParams params;
    double ll = -kInf;
    try {
      params = options.profile_linear ? profiled_params(nm.x).first : layout.unpack(nm.x, lambda);
      ll = plain_loglik(params);
    } catch (const std::exception&) {
      ll = -kInf;
    }
    start_logliks.push_back(ll);
    if (!have_best || ll > best.loglik) {
      have_best = true;
      best.params = params;
      best.loglik = ll;
      best.iterations = nm.iterations;
      best.converged = nm.converged;
      best.best_trace.clear();
      for (double v : nm.best_trace) best.best_trace.push_back(-v);
    }
  }
  // A supplied start is itself a candidate, so the result never falls below it.
  if (options.init) {
    const double ll = plain_loglik(start);
    if (ll > best.loglik) {
      best.params = start;
      best.loglik = ll;
      best.iterations = 0;
      best.converged = true;
      best.best_trace.assign(1, ll);
    }
  }
  if (!std::isfinite(best.loglik)) throw std::runtime_error("fit_mle: every start ended at a non-finite likelihood");

  const NsLoadingMatrix loadings = loading_matrix(panel.grid, lambda);
  best.filter = run_filter(deflate(panel, factors, best.params, loadings), best.params, loadings.matrix,
                           stationary_init(best.params));
  best.loglik = best.filter.loglik;
  best.evaluations = total_evaluations;
  best.start_logliks = std::move(start_logliks);
  return best;
}

Eigen::MatrixXd fitted_yields(const FitResult& fit, const FactorPanel* factors, const NsLoadingMatrix& loadings,
                              StateChoice states) {
  const auto T = static_cast<Eigen::Index>(fit.filter.periods());
  const Eigen::Index Q = fit.params.gamma.cols();
  if (Q > 0 && (factors == nullptr || factors->values.rows() != T || factors->values.cols() != Q)) {
    throw std::invalid_argument("fitted_yields: factor panel must be T x Q");
  }
  const Eigen::Vector3d mu = fit.params.mu();
  Eigen::MatrixXd out(T, loadings.matrix.rows());
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::Vector3d& a = states == StateChoice::Filtered ? fit.filter.a_filt[t] : fit.filter.a_pred[t];
    Eigen::VectorXd y = loadings.matrix * (a + mu);
    if (Q > 0) y += fit.params.gamma * factors->values.row(t).transpose();
    out.row(t) = y.transpose();
  }
  return out;
}

RmseTable rmse_table(const YieldPanel& actual, const Eigen::MatrixXd& fitted) {
  if (fitted.rows() != actual.periods() || fitted.cols() != actual.tenor_count()) {
    throw std::invalid_argument("rmse_table: shape mismatch");
  }
  RmseTable table;
  table.tenors = actual.grid.tenors();
  table.rmse.resize(actual.tenor_count());
  for (Eigen::Index i = 0; i < actual.tenor_count(); ++i) {
    double ss = 0.0;
    int n = 0;
    for (Eigen::Index t = 0; t < actual.periods(); ++t) {
      if (!actual.mask(t, i)) continue;
      const double d = actual.values(t, i) - fitted(t, i);
      ss += d * d;
      ++n;
    }
    if (n == 0) throw DataError("rmse_table: tenor " + format_double(table.tenors[i]) + " has no observations");
    table.rmse(i) = std::sqrt(ss / n);
  }
  table.mean = table.rmse.mean();
  return table;
}

RmseTable rmse_table(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& fitted, const std::vector<double>& tenors) {
  if (actual.rows() != fitted.rows() || actual.cols() != fitted.cols() ||
      static_cast<std::size_t>(actual.cols()) != tenors.size()) {
    throw std::invalid_argument("rmse_table: shape mismatch");
  }
  if (actual.rows() == 0) throw DataError("rmse_table: no observations");
  RmseTable table;
  table.tenors = tenors;
  table.rmse = (actual - fitted).array().square().colwise().mean().sqrt().transpose();
  table.mean = table.rmse.mean();
  return table;
}

void write_rmse_csv(const RmseTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "tenor,rmse\n";
  for (std::size_t i = 0; i < table.tenors.size(); ++i) {
    out << format_double(table.tenors[i]) << ',' << format_double(table.rmse(static_cast<Eigen::Index>(i))) << '\n';
  }
  out << "mean," << format_double(table.mean) << '\n';
}

std::vector<WindowRow> moving_window(const YieldPanel& response, const YieldPanel& reference,
                                     const WindowConfig& config) {
  if (response.dates != reference.dates) throw DataError("moving_window: panels must share dates");
  if (config.window < 2 || config.horizon < 1) throw std::invalid_argument("moving_window: bad window or horizon");
  const Eigen::Index T = response.periods();
  if (T < config.window + config.horizon) {
    throw DataError("moving_window: need at least window + horizon periods, have " + std::to_string(T));
  }
  const NsLoadingMatrix resp_loadings = loading_matrix(response.grid, config.lambda);
  const int h = static_cast<int>(config.horizon);

  std::vector<WindowRow> rows;
  for (Eigen::Index s = 0; s + config.window + config.horizon <= T; ++s) {
    const YieldPanel resp_in = response.slice(s, config.window);
    const YieldPanel ref_in = reference.slice(s, config.window);
    const YieldPanel resp_out = response.slice(s + config.window, config.horizon);

    WindowRow row;
    row.date = response.dates[static_cast<std::size_t>(s + config.window / 2)];

    const FitResult dns = fit_mle(resp_in, nullptr, config.kind, 0, config.lambda, config.fit);
    row.dns_in = rmse_table(resp_in, fitted_yields(dns, nullptr, resp_loadings)).mean;
    row.dns_out = rmse_table(resp_out, forecast_dns(dns, resp_loadings, h).yields).mean;

    const FitResult ref_fit = fit_mle(ref_in, nullptr, config.kind, 0, config.lambda, config.fit);
    const KernelConfig kernel =
        config.gamma ? KernelConfig{*config.gamma} : grid_search_gamma(ref_in, config.Q, config.gamma_grid);
    row.gamma = kernel.gamma;
    const KpcaModel kpca = fit_kpca(ref_in, kernel, config.Q);
    const FactorPanel U = extract_factors(kpca, ref_in);
    FitOptions fr_options = config.fit;
    fr_options.init = with_zero_regression(dns.params, resp_in.tenor_count(), config.Q);
    const FitResult fr = fit_mle(resp_in, &U, config.kind, config.Q, config.lambda, fr_options);
    row.dnsfr_in = rmse_table(resp_in, fitted_yields(fr, &U, resp_loadings)).mean;
    row.dnsfr_out =
        rmse_table(resp_out, forecast_dnsfr(fr, ref_fit, kpca, ref_in, resp_loadings, h).yields).mean;
    rows.push_back(row);
  }
  return rows;
}

void write_window_csv(const std::vector<WindowRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "date,gamma,dns_in_rmse,dns_out_rmse,dnsfr_in_rmse,dnsfr_out_rmse\n";
  for (const WindowRow& r : rows) {
    out << r.date.to_string() << ',' << format_double(r.gamma) << ',' << format_double(r.dns_in) << ','
        << format_double(r.dns_out) << ',' << format_double(r.dnsfr_in) << ',' << format_double(r.dnsfr_out) << '\n';
  }
}

}  // namespace dnsfr

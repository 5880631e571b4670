#include "dnsfr/serialization.hpp"

#include <fstream>
#include <stdexcept>

namespace dnsfr {

Json to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) throw std::invalid_argument("matrix_from_json: expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) throw std::invalid_argument("matrix_from_json: ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw std::invalid_argument("vector_from_json: expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

Json to_json(const SsmParams& p) {
  Json j;
  j["lambda"] = p.lambda;
  j["psi0"] = to_json(Eigen::VectorXd(p.psi0));
  j["psi1"] = to_json(Eigen::VectorXd(p.psi1));
  j["sigma_eta"] = to_json(Eigen::VectorXd(p.sigma_eta));
  j["mu"] = to_json(Eigen::VectorXd(p.mu()));
  Json cov;
  std::visit(
      [&](const auto& c) {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, DiagonalCov>) {
          cov["structure"] = 1;
          cov["sigma"] = to_json(c.sigma);
        } else if constexpr (std::is_same_v<C, BandCov>) {
          cov["structure"] = 2;
          cov["sigma"] = to_json(c.sigma);
          cov["theta"] = c.theta;
          cov["rho"] = rho_from_theta(c.theta, c.sigma.size());
        } else {
          cov["structure"] = 3;
          cov["sigma"] = c.sigma;
          cov["rho"] = c.rho;
        }
      },
      p.cov);
  j["cov"] = std::move(cov);
  j["gamma_rows"] = p.gamma.rows();
  j["gamma"] = to_json(p.gamma);
  return j;
}

SsmParams params_from_json(const Json& j) {
  SsmParams p;
  p.lambda = j.at("lambda").get<double>();
  p.psi0 = vector_from_json(j.at("psi0"));
  p.psi1 = vector_from_json(j.at("psi1"));
  p.sigma_eta = vector_from_json(j.at("sigma_eta"));
  const Json& cov = j.at("cov");
  switch (cov.at("structure").get<int>()) {
    case 1: p.cov = DiagonalCov{vector_from_json(cov.at("sigma"))}; break;
    case 2: p.cov = BandCov{vector_from_json(cov.at("sigma")), cov.at("theta").get<double>()}; break;
    case 3: p.cov = FullArCov{cov.at("sigma").get<double>(), cov.at("rho").get<double>()}; break;
    default: throw std::invalid_argument("params_from_json: unknown covariance structure");
  }
  p.gamma = matrix_from_json(j.at("gamma"));
  if (p.gamma.size() == 0) p.gamma.resize(j.at("gamma_rows").get<Eigen::Index>(), 0);
  p.validate();
  return p;
}

Json to_json(const FitResult& fit) {
  Json j;
  j["loglik"] = fit.loglik;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["evaluations"] = fit.evaluations;
  j["start_logliks"] = fit.start_logliks;
  j["params"] = to_json(fit.params);
  return j;
}

Json to_json(const KpcaModel& model) {
  Json j;
  j["gamma"] = model.config.gamma;
  j["tenors"] = model.tenors;
  j["eigenvalues"] = to_json(model.eigenvalues);
  j["retained_energy"] = model.retained_energy();
  j["Z"] = to_json(model.Z);
  j["A"] = to_json(model.A);
  return j;
}

Json forecast_covariance_json(const ForecastResult& forecast, const std::vector<MonthStamp>& dates) {
  Json steps = Json::array();
  for (int k = 0; k < forecast.horizon; ++k) {
    Json s;
    s["step"] = k + 1;
    if (static_cast<std::size_t>(k) < dates.size()) s["date"] = dates[static_cast<std::size_t>(k)].to_string();
    s["yield_cov"] = to_json(forecast.covariances[static_cast<std::size_t>(k)]);
    s["state_mean"] = to_json(Eigen::VectorXd(forecast.state_means.row(k).transpose()));
    s["state_cov"] = to_json(Eigen::MatrixXd(forecast.state_covs[static_cast<std::size_t>(k)]));
    steps.push_back(std::move(s));
  }
  Json j;
  j["horizon"] = forecast.horizon;
  j["basis_reordered"] = forecast.basis_reordered;
  j["steps"] = std::move(steps);
  return j;
}

void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return Json::parse(in);
}

}  // namespace dnsfr

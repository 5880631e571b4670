#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dnsfr/estimation.hpp"
#include "dnsfr/forecasting.hpp"
#include "dnsfr/kpca.hpp"
#include "dnsfr/state_space.hpp"

namespace dnsfr {

using Json = nlohmann::ordered_json;

/// Matrices are arrays of rows; vectors are flat arrays.
Json to_json(const Eigen::MatrixXd& m);
Json to_json(const Eigen::VectorXd& v);
Eigen::MatrixXd matrix_from_json(const Json& j);
Eigen::VectorXd vector_from_json(const Json& j);

Json to_json(const SsmParams& params);
SsmParams params_from_json(const Json& j);

/// Parameters, log-likelihood and optimizer metadata (the filter is not stored).
Json to_json(const FitResult& fit);

/// Eigenvalues, Z, A and gamma.
Json to_json(const KpcaModel& model);

/// Per-step yield and state covariances.
Json forecast_covariance_json(const ForecastResult& forecast, const std::vector<MonthStamp>& dates);

/// Pretty-printed with a trailing newline.
void write_json(const Json& j, const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

}  // namespace dnsfr

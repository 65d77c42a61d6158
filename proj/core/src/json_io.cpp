#include "regretlab/json_io.hpp"

#include "regretlab/error.hpp"

namespace regretlab {

nlohmann::json matrix_to_json(const MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (j.is_number()) return MatrixXd::Constant(1, 1, j.get<double>());
  require(j.is_array() && !j.empty(), "matrix must be a non-empty array of rows");
  if (j[0].is_number()) {
    // A flat array is read as a column vector.
    MatrixXd v(j.size(), 1);
    for (std::size_t i = 0; i < j.size(); ++i) {
      require(j[i].is_number(), "matrix entries must be numbers");
      v(static_cast<Eigen::Index>(i), 0) = j[i].get<double>();
    }
    return v;
  }
  const std::size_t cols = j[0].size();
  require(cols > 0, "matrix rows must be non-empty");
  MatrixXd M(j.size(), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    require(j[i].is_array() && j[i].size() == cols, "matrix rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c) {
      require(j[i][c].is_number(), "matrix entries must be numbers");
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
    }
  }
  return M;
}

nlohmann::json fir_to_json(const FirResponse& resp) {
  nlohmann::json out;
  out["horizon"] = resp.horizon();
  out["taps_x"] = nlohmann::json::array();
  out["taps_u"] = nlohmann::json::array();
  for (int k = 0; k < resp.horizon(); ++k) {
    out["taps_x"].push_back(matrix_to_json(resp.taps_x[k]));
    out["taps_u"].push_back(matrix_to_json(resp.taps_u[k]));
  }
  return out;
}

FirResponse fir_from_json(const nlohmann::json& j) {
  FirResponse resp;
  for (const auto& t : j.at("taps_x")) resp.taps_x.push_back(matrix_from_json(t));
  for (const auto& t : j.at("taps_u")) resp.taps_u.push_back(matrix_from_json(t));
  resp.validate();
  return resp;
}

}  // namespace regretlab

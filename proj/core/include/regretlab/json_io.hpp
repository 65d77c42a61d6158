#pragma once

#include <nlohmann/json.hpp>

#include "regretlab/lti.hpp"

namespace regretlab {

// Matrices are row-major nested arrays: [[a00, a01], [a10, a11]].
nlohmann::json matrix_to_json(const MatrixXd& M);
MatrixXd matrix_from_json(const nlohmann::json& j);

nlohmann::json fir_to_json(const FirResponse& resp);
FirResponse fir_from_json(const nlohmann::json& j);

}  // namespace regretlab

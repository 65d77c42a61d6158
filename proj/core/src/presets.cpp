#include "regretlab/presets.hpp"

#include "regretlab/error.hpp"

namespace regretlab::presets {

LinearSystem example_dynamics(double sigma_w) {
  LinearSystem sys;
  sys.A.resize(3, 3);
  sys.A << 1.01, 0.01, 0.00,
           0.01, 1.01, 0.01,
           0.00, 0.01, 1.01;
  sys.B = MatrixXd::Identity(3, 3);
  sys.sigma_w = sigma_w;
  return sys;
}

LqrWeights example_weights(double q) {
  return {q * MatrixXd::Identity(3, 3), MatrixXd::Identity(3, 3)};
}

LinearSystem model_free_system(double sigma_w) {
  LinearSystem sys;
  sys.A.resize(3, 3);
  sys.A << 0.95, 0.01, 0.00,
           0.01, 0.95, 0.01,
           0.00, 0.01, 0.95;
  sys.B.resize(3, 2);
  sys.B << 1.0, 0.1,
           0.0, 0.1,
           0.0, 0.1;
  sys.sigma_w = sigma_w;
  return sys;
}

LqrWeights model_free_weights() {
  return {MatrixXd::Identity(3, 3), MatrixXd::Identity(2, 2)};
}

std::vector<std::string> system_preset_names() { return {"exampledynamics", "modelfree_sys"}; }

bool has_system_preset(const std::string& name) {
  return name == "exampledynamics" || name == "modelfree_sys";
}

LinearSystem system_preset(const std::string& name, double sigma_w) {
  if (name == "exampledynamics") return example_dynamics(sigma_w);
  if (name == "modelfree_sys") return model_free_system(sigma_w);
  fail(ErrorCode::kConfig, "unknown system preset '" + name + "'");
}

}  // namespace regretlab::presets

#pragma once

#include <string>
#include <vector>

#include "regretlab/lti.hpp"

namespace regretlab::presets {

// Weakly coupled, slightly unstable 3-state chain with B = I (rho(A) ~ 1.0241).
LinearSystem example_dynamics(double sigma_w = 1.0);
// Q = q I, R = I on the example dynamics (q = 1e-3 for the stability
// experiment, q = 10 for the regret experiment).
LqrWeights example_weights(double q);

// Stable 3-state, 2-input system used for the model-free comparison.
LinearSystem model_free_system(double sigma_w = 1.0);
LqrWeights model_free_weights();

std::vector<std::string> system_preset_names();
bool has_system_preset(const std::string& name);
LinearSystem system_preset(const std::string& name, double sigma_w = 1.0);

}  // namespace regretlab::presets

#pragma once

#include "regretlab/lti.hpp"
#include "regretlab/model_free.hpp"

namespace regretlab::oracle {

// Expected finite-horizon average cost (1/T) sum_t E c_t from x_0 = 0 with
// u_t = K x_t + sigma eta_t, by propagating the state covariance.
inline double finite_horizon_cost(const LinearSystem& s, const LqrWeights& w, const MatrixXd& K,
                                  long T, double sigma) {
  const int n = s.nx();
  const MatrixXd M = s.A + s.B * K;
  const MatrixXd W = w.Q + K.transpose() * w.R * K;
  const MatrixXd N = s.sigma_w * s.sigma_w * MatrixXd::Identity(n, n) +
                     sigma * sigma * s.B * s.B.transpose();
  MatrixXd S = MatrixXd::Zero(n, n);
  double total = 0.0;
  for (long t = 0; t < T; ++t) {
    total += (W * S).trace() + sigma * sigma * w.R.trace();
    S = M * S * M.transpose() + N;
  }
  return total / static_cast<double>(T);
}

// Central differences of finite_horizon_cost in vec(K).
inline VectorXd finite_difference_gradient(const LinearSystem& s, const LqrWeights& w,
                                           const MatrixXd& K, long T, double sigma,
                                           double h = 1e-4) {
  const VectorXd th = model_free::vec(K);
  VectorXd g(th.size());
  for (int i = 0; i < th.size(); ++i) {
    VectorXd a = th, b = th;
    a(i) += h;
    b(i) -= h;
    g(i) = (finite_horizon_cost(s, w, model_free::unvec(a, s.nu(), s.nx()), T, sigma) -
            finite_horizon_cost(s, w, model_free::unvec(b, s.nu(), s.nx()), T, sigma)) /
           (2.0 * h);
  }
  return g;
}

}  // namespace regretlab::oracle

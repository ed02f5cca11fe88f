#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "brm/approx.hpp"
#include "brm/mdp.hpp"

namespace brm {

enum class Mode { kEval, kCtrl };

enum class EstimatorKind { kUs, kSc, kBff, kNbff, kPd };

const char* estimator_name(EstimatorKind k);
EstimatorKind estimator_from_name(const std::string& name);
const char* mode_name(Mode m);
Mode mode_from_name(const std::string& name);

// How many records past m a window must cover: future[0..n] = s_{m+1}..s_{m+n+1}.
int window_lookahead(EstimatorKind kind, int n_steps);

// uniform alpha_i = 1/n
std::vector<double> uniform_weights(int n);

struct GradientEstimate {
  Eigen::VectorXd grad;
  double j = 0.0;
  // future terms that had to fall back to the realized next state because the
  // episode ended before supplying them
  int fallback_terms = 0;
};

// The product estimators share one shape: F = j(s,a,s_{m+1}) * grad_j where
// grad_j is the residual gradient evaluated with some surrogate next state.
//   US:   surrogate is an independent redraw from (s,a) -- simulator privilege.
//   SC:   surrogate is the realized s_{m+1} itself.
//   BFF:  surrogate is s_m + (s_{m+2} - s_{m+1}).
//   nBFF: weighted average over n future one-step increments, weights alpha
//         summing to 1.
GradientEstimate us_gradient(const TrajectoryWindow& w, const QApprox& q,
                             const Policy* pi, Mode mode, double gamma,
                             const Env& env, Rng& rng);
GradientEstimate sc_gradient(const TrajectoryWindow& w, const QApprox& q,
                             const Policy* pi, Mode mode, double gamma);
GradientEstimate bff_gradient(const TrajectoryWindow& w, const QApprox& q,
                              const Policy* pi, Mode mode, double gamma,
                              const Env& env);
GradientEstimate nbff_gradient(const TrajectoryWindow& w, const QApprox& q,
                               const Policy* pi, Mode mode, double gamma,
                               const Env& env, const std::vector<double>& alpha);

// Tabular fast path: the same estimators expressed as sparse table writes
// (at most 1 + |A| distinct entries for eval, 2 for ctrl, per future term).
// Coefficients are stored before the j scaling so that colliding entries
// merge exactly the way the dense route merges them.
struct SparseGradient {
  double j = 0.0;
  int fallback_terms = 0;
  std::vector<std::pair<int, double>> entries;  // (flat index, coefficient)

  // acc[idx] += coeff * j, in stored order
  void apply_to(Eigen::VectorXd& acc) const;
  Eigen::VectorXd to_dense(Eigen::Index dim) const;
};

SparseGradient tabular_gradient(EstimatorKind kind, const TrajectoryWindow& w,
                                const TabularQ& q, const Policy* pi, Mode mode,
                                double gamma, const Env& env, Rng* rng,
                                const std::vector<double>& alpha = {});

// Saddle-point updates for min_theta max_omega E[delta*y - y^2/2]:
//   omega_{k+1} = omega_k + beta*j*grad_y - y*grad_y   (beta on the first
//                 term only, as specified)
//   theta_{k+1} = theta_k - eta * grad_j * y(s,a; omega_{k+1})
// delta is realized by the single-sample residual j at the observed next
// state, which is the point of the method: no second draw is needed.
Eigen::VectorXd pd_dual_increment(const TrajectoryWindow& w, const QApprox& q,
                                  const QApprox& dual, const Policy* pi,
                                  Mode mode, double gamma, double beta);
Eigen::VectorXd pd_theta_grad(const TrajectoryWindow& w, const QApprox& q,
                              const QApprox& dual, const Policy* pi, Mode mode,
                              double gamma);

struct PdUpdate {
  Eigen::VectorXd dual_step;   // already applied to the dual parameters
  Eigen::VectorXd theta_grad;  // multiply by eta_k and descend
  double j = 0.0;
};

// Single-transition form: applies the dual ascent step to `dual`, then forms
// the theta gradient against the updated dual.
PdUpdate pd_update(const TrajectoryWindow& w, const QApprox& q, QApprox& dual,
                   const Policy* pi, Mode mode, double gamma, double beta);

}  // namespace brm

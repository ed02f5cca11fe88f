#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "brm/approx.hpp"
#include "brm/estimators.hpp"
#include "brm/mdp.hpp"

namespace brm {

// Exact tabular MDP model. P[a](s, s') is the transition kernel, R(s, a) the
// expected one-step reward, r_next(s') the realized reward as a function of
// the landing state (well defined for the ring, whose reward depends on s'
// only).
struct ExactModel {
  int n_states = 0;
  int n_actions = 0;
  std::vector<Eigen::MatrixXd> P;
  Eigen::MatrixXd R;
  Eigen::VectorXd r_next;
};

// Route 1: Monte Carlo. Every (s, a) pair is re-simulated `reps_per_pair`
// times through the real env step; P is the empirical landing histogram and R
// the empirical mean of realized rewards.
ExactModel estimate_model_mc(const TabularRingEnv& env, int reps_per_pair,
                             Rng& rng);

// Route 2: closed form. The pre-snap landing point is Gaussian on the line;
// each grid cell's probability is the wrapped-Gaussian mass of its snap
// interval, summed over +-8 wraps of the circle.
ExactModel exact_model_analytic(const TabularRingEnv& env);

// max over |P_a - P_b| and |R_a - R_b|
double model_max_abs_diff(const ExactModel& a, const ExactModel& b);

// Pi(s, b) = pi(b | grid point s)
Eigen::MatrixXd policy_matrix(const Policy& pi, const TabularRingEnv& env);

// Fixed point of Q = R + gamma * P^pi Q via one dense linear solve.
Eigen::MatrixXd exact_q_eval(const ExactModel& m, const Eigen::MatrixXd& Pi,
                             double gamma);

// Fixed point of Q = R + gamma * P max_b Q via value iteration, run to
// sup-norm tolerance `tol` between successive iterates.
Eigen::MatrixXd exact_q_ctrl(const ExactModel& m, double gamma,
                             double tol = 1e-10, int max_iters = 1000000);

// Stationary distribution of the state chain induced by behavior matrix Mu,
// by power iteration.
Eigen::VectorXd stationary_state(const ExactModel& m, const Eigen::MatrixXd& Mu,
                                 double tol = 1e-14, int max_iters = 1000000);

// rho(s, a) = stationary_state(s) * Mu(s, a)
Eigen::MatrixXd stationary_sa(const ExactModel& m, const Eigen::MatrixXd& Mu);

// Exact stationary mean of the named gradient estimator on the tabular ring:
// a full enumeration over (s, a, landing states) weighted by rho and the
// model kernels. `behavior` supplies the action at the intermediate state of
// the future-shift construction and is ignored by the other estimators.
Eigen::VectorXd exact_mean_gradient(EstimatorKind kind, const ExactModel& m,
                                    const TabularRingEnv& env,
                                    const TabularQ& q, const Policy* target_pi,
                                    const Eigen::MatrixXd& behavior,
                                    const Eigen::MatrixXd& rho, Mode mode,
                                    double gamma);

// Same quantity for the independent-redraw estimator in factored form,
// rho * mean-residual * mean-residual-gradient. A second arithmetic route to
// exact_mean_gradient(kUs, ...): the two must agree to numerical precision
// because the two landing draws are independent.
Eigen::VectorXd exact_mean_gradient_factored(const ExactModel& m,
                                             const TabularRingEnv& env,
                                             const TabularQ& q,
                                             const Policy* target_pi,
                                             const Eigen::MatrixXd& rho,
                                             Mode mode, double gamma);

// Monte Carlo estimate of the per-step mean gradient gap under the behavior
// policy's stationary regime. One long rollout is generated; on each window
// all three estimators are evaluated (the independent-redraw one with its own
// draw), and the paired differences against the unbiased one are accumulated.
struct BiasProbe {
  Eigen::VectorXd mean_us;
  Eigen::VectorXd mean_sc_minus_us;
  Eigen::VectorXd mean_bff_minus_us;
  Eigen::VectorXd se_us;
  Eigen::VectorXd se_sc_minus_us;
  Eigen::VectorXd se_bff_minus_us;
  uint64_t samples = 0;

  double sc_bias_norm() const { return mean_sc_minus_us.norm(); }
  double bff_bias_norm() const { return mean_bff_minus_us.norm(); }
  // conservative error radius for the bias norms: sqrt(sum of squared SEs)
  double sc_bias_err() const { return se_sc_minus_us.norm(); }
  double bff_bias_err() const { return se_bff_minus_us.norm(); }
};

BiasProbe probe_stationary_bias(const Env& env, const QApprox& q,
                                const Policy* target_pi,
                                const Policy& behavior, Mode mode,
                                double gamma, uint64_t samples,
                                uint64_t burnin, uint64_t seed);

}  // namespace brm

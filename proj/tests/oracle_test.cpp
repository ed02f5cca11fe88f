#include <doctest.h>

#include <cmath>

#include "brm/oracle.hpp"

using namespace brm;

TEST_SUITE("oracle") {

TEST_CASE("analytic model rows are proper distributions") {
  TabularRingEnv env(16, 1.0, 0.7);
  const auto m = exact_model_analytic(env);
  REQUIRE(m.n_states == 16);
  REQUIRE(m.n_actions == 2);
  for (int a = 0; a < 2; ++a)
    for (int s = 0; s < 16; ++s) {
      CHECK(m.P[a].row(s).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(m.P[a].row(s).minCoeff() >= 0.0);
    }
  // expected reward must be the kernel-weighted landing reward
  for (int a = 0; a < 2; ++a)
    for (int s = 0; s < 16; ++s)
      CHECK(m.R(s, a) ==
            doctest::Approx(m.P[a].row(s).dot(m.r_next)).epsilon(1e-12));
}

TEST_CASE("monte carlo model agrees with the closed form") {
  TabularRingEnv env(8, 1.0, 1.0);
  const auto exact = exact_model_analytic(env);
  Rng rng(42);
  const auto mc = estimate_model_mc(env, 40000, rng);
  // binomial SE at p ~ 0.25 with 40000 reps is ~0.0022; allow 5 SEs
  CHECK(model_max_abs_diff(exact, mc) < 0.011);
}

TEST_CASE("two-cell chain has the geometric-series value") {
  // on two cells both landing rewards are 1 (sin 0 and sin pi vanish), so
  // Q = 1 / (1 - gamma) no matter what the kernel looks like
  TabularRingEnv env(2, 1.0, 1.0);
  const auto m = exact_model_analytic(env);
  UniformPolicy mu(2);
  const auto q = exact_q_eval(m, policy_matrix(mu, env), 0.9);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a)
      CHECK(q(s, a) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("evaluation fixed point satisfies its own equation") {
  TabularRingEnv env(12, 1.0, 0.8);
  const auto m = exact_model_analytic(env);
  SinRingPolicy pi;
  const auto Pi = policy_matrix(pi, env);
  const auto q = exact_q_eval(m, Pi, 0.9);
  const Eigen::VectorXd v = (Pi.array() * q.array()).rowwise().sum();
  for (int a = 0; a < 2; ++a)
    for (int s = 0; s < 12; ++s)
      CHECK(q(s, a) ==
            doctest::Approx(m.R(s, a) + 0.9 * m.P[a].row(s).dot(v))
                .epsilon(1e-10));
}

TEST_CASE("control fixed point satisfies the max-form equation") {
  TabularRingEnv env(12, 1.0, 0.8);
  const auto m = exact_model_analytic(env);
  const auto q = exact_q_ctrl(m, 0.9, 1e-12);
  const Eigen::VectorXd v = q.rowwise().maxCoeff();
  for (int a = 0; a < 2; ++a)
    for (int s = 0; s < 12; ++s)
      CHECK(q(s, a) ==
            doctest::Approx(m.R(s, a) + 0.9 * m.P[a].row(s).dot(v))
                .epsilon(1e-9));
  // greedy values dominate the evaluation values of any fixed policy
  UniformPolicy mu(2);
  const auto q_mu = exact_q_eval(m, policy_matrix(mu, env), 0.9);
  CHECK(q.maxCoeff() >= q_mu.maxCoeff() - 1e-9);
}

TEST_CASE("stationary distribution is invariant and uniform on the symmetric ring") {
  TabularRingEnv env(16, 1.0, 1.0);
  const auto m = exact_model_analytic(env);
  UniformPolicy mu(2);
  const auto Mu = policy_matrix(mu, env);
  const auto d = stationary_state(m, Mu);
  CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-12));
  // uniform behavior on the rotation-symmetric ring mixes to uniform
  for (int s = 0; s < 16; ++s)
    CHECK(d[s] == doctest::Approx(1.0 / 16).epsilon(1e-9));

  // invariance under the induced chain
  Eigen::MatrixXd Pmu = Eigen::MatrixXd::Zero(16, 16);
  for (int a = 0; a < 2; ++a)
    Pmu += Mu.col(a).asDiagonal() * m.P[a];
  CHECK((d.transpose() * Pmu - d.transpose()).cwiseAbs().maxCoeff() < 1e-10);

  const auto rho = stationary_sa(m, Mu);
  CHECK(rho.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rho(3, 0) == doctest::Approx(d[3] * 0.5).epsilon(1e-12));
}

TEST_CASE("skewed behavior moves the stationary distribution off uniform") {
  TabularRingEnv env(16, 1.0, 0.5);
  const auto m = exact_model_analytic(env);
  SinRingPolicy mu;
  const auto d = stationary_state(m, policy_matrix(mu, env));
  CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((d.array() - 1.0 / 16).abs().maxCoeff() > 1e-3);
}

TEST_CASE("factored and enumerated means of the independent redraw agree") {
  TabularRingEnv env(8, 1.0, 1.0);
  const auto m = exact_model_analytic(env);
  SinRingPolicy target;
  UniformPolicy mu(2);
  const auto Mu = policy_matrix(mu, env);
  const auto rho = stationary_sa(m, Mu);

  TabularQ q(8, 2, env.spacing());
  Rng rng(9);
  for (int i = 0; i < 16; ++i) q.params()[i] = rng.uniform(-1.0, 1.0);

  for (Mode mode : {Mode::kEval, Mode::kCtrl}) {
    const Policy* pi = mode == Mode::kEval ? &target : nullptr;
    const auto enumerated = exact_mean_gradient(EstimatorKind::kUs, m, env, q,
                                                pi, Mu, rho, mode, 0.9);
    const auto factored =
        exact_mean_gradient_factored(m, env, q, pi, rho, mode, 0.9);
    CHECK((enumerated - factored).norm() < 1e-13);
  }
}

TEST_CASE("monte carlo probe matches the enumerated means") {
  TabularRingEnv env(8, 1.0, 1.0);
  const auto m = exact_model_analytic(env);
  SinRingPolicy target;
  UniformPolicy mu(2);
  const auto Mu = policy_matrix(mu, env);
  const auto rho = stationary_sa(m, Mu);

  TabularQ q(8, 2, env.spacing());
  Rng rng(21);
  for (int i = 0; i < 16; ++i) q.params()[i] = rng.uniform(-1.0, 1.0);

  const auto probe = probe_stationary_bias(env, q, &target, mu, Mode::kEval,
                                           0.9, 400000, 2000, 77);
  CHECK(probe.samples == 400000);

  const auto us = exact_mean_gradient(EstimatorKind::kUs, m, env, q, &target,
                                      Mu, rho, Mode::kEval, 0.9);
  const auto sc = exact_mean_gradient(EstimatorKind::kSc, m, env, q, &target,
                                      Mu, rho, Mode::kEval, 0.9);
  const auto bff = exact_mean_gradient(EstimatorKind::kBff, m, env, q, &target,
                                       Mu, rho, Mode::kEval, 0.9);

  for (int i = 0; i < 16; ++i) {
    CHECK(std::abs(probe.mean_us[i] - us[i]) < 6.0 * probe.se_us[i]);
    CHECK(std::abs(probe.mean_sc_minus_us[i] - (sc[i] - us[i])) <
          6.0 * probe.se_sc_minus_us[i]);
    CHECK(std::abs(probe.mean_bff_minus_us[i] - (bff[i] - us[i])) <
          6.0 * probe.se_bff_minus_us[i]);
  }
  CHECK(probe.se_us.norm() > 0.0);
  CHECK(probe.se_sc_minus_us.norm() > 0.0);
  CHECK(probe.mean_bff_minus_us.allFinite());
}

}  // TEST_SUITE

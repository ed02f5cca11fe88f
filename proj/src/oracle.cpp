#include "brm/oracle.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace brm {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

void check_model(const ExactModel& m) {
  if (m.n_states <= 0 || static_cast<int>(m.P.size()) != m.n_actions)
    throw std::invalid_argument("malformed exact model");
}

}  // namespace

ExactModel estimate_model_mc(const TabularRingEnv& env, int reps_per_pair,
                             Rng& rng) {
  const int n = env.n();
  const int na = env.num_actions();
  ExactModel m;
  m.n_states = n;
  m.n_actions = na;
  m.P.assign(na, Eigen::MatrixXd::Zero(n, n));
  m.R = Eigen::MatrixXd::Zero(n, na);
  m.r_next = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < n; ++k) m.r_next[k] = std::sin(env.grid_point(k)) + 1.0;
  for (int s = 0; s < n; ++s) {
    const State sx = make_state1(env.grid_point(s));
    for (int a = 0; a < na; ++a) {
      double rsum = 0.0;
      for (int rep = 0; rep < reps_per_pair; ++rep) {
        const StepResult res = env.step(sx, a, rng);
        m.P[a](s, env.index_of(res.s_next)) += 1.0;
        rsum += res.reward;
      }
      m.P[a].row(s) /= static_cast<double>(reps_per_pair);
      m.R(s, a) = rsum / static_cast<double>(reps_per_pair);
    }
  }
  return m;
}

ExactModel exact_model_analytic(const TabularRingEnv& env) {
  const int n = env.n();
  const int na = env.num_actions();
  const double h = env.spacing();
  const double sd = env.sigma() * std::sqrt(env.epsilon());
  if (!(sd > 0.0)) throw std::invalid_argument("analytic model needs sigma > 0");
  // enough circle wraps that the un-covered Gaussian mass is below 1e-300
  const int wraps =
      8 + static_cast<int>(std::ceil(10.0 * sd / kTwoPi));
  ExactModel m;
  m.n_states = n;
  m.n_actions = na;
  m.P.assign(na, Eigen::MatrixXd::Zero(n, n));
  m.R = Eigen::MatrixXd::Zero(n, na);
  m.r_next = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < n; ++k) m.r_next[k] = std::sin(env.grid_point(k)) + 1.0;
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < na; ++a) {
      const double mu = env.grid_point(s) + env.drift_value(a) * env.epsilon();
      for (int k = 0; k < n; ++k) {
        // the snap preimage of grid cell k is [h*k - h/2, h*k + h/2) plus
        // every 2*pi translate of it
        double p = 0.0;
        for (int w = -wraps; w <= wraps; ++w) {
          const double lo = h * k - 0.5 * h + kTwoPi * w - mu;
          const double hi = lo + h;
          p += normal_cdf(hi / sd) - normal_cdf(lo / sd);
        }
        m.P[a](s, k) = p;
      }
      m.R(s, a) = m.P[a].row(s).dot(m.r_next);
    }
  }
  return m;
}

double model_max_abs_diff(const ExactModel& a, const ExactModel& b) {
  if (a.n_states != b.n_states || a.n_actions != b.n_actions)
    throw std::invalid_argument("model shape mismatch");
  double d = (a.R - b.R).cwiseAbs().maxCoeff();
  for (int i = 0; i < a.n_actions; ++i)
    d = std::max(d, (a.P[i] - b.P[i]).cwiseAbs().maxCoeff());
  return d;
}

Eigen::MatrixXd policy_matrix(const Policy& pi, const TabularRingEnv& env) {
  Eigen::MatrixXd out(env.n(), pi.num_actions());
  Eigen::VectorXd p(pi.num_actions());
  for (int s = 0; s < env.n(); ++s) {
    pi.probs(make_state1(env.grid_point(s)), p);
    out.row(s) = p.transpose();
  }
  return out;
}

Eigen::MatrixXd exact_q_eval(const ExactModel& m, const Eigen::MatrixXd& Pi,
                             double gamma) {
  check_model(m);
  const int n = m.n_states;
  const int na = m.n_actions;
  const int N = n * na;
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(N, N);
  Eigen::VectorXd r(N);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < na; ++a) {
      const int row = s * na + a;
      r[row] = m.R(s, a);
      for (int sp = 0; sp < n; ++sp)
        for (int b = 0; b < na; ++b)
          A(row, sp * na + b) -= gamma * m.P[a](s, sp) * Pi(sp, b);
    }
  }
  const Eigen::VectorXd qflat = A.partialPivLu().solve(r);
  Eigen::MatrixXd Q(n, na);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < na; ++a) Q(s, a) = qflat[s * na + a];
  return Q;
}

Eigen::MatrixXd exact_q_ctrl(const ExactModel& m, double gamma, double tol,
                             int max_iters) {
  check_model(m);
  const int n = m.n_states;
  const int na = m.n_actions;
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, na);
  Eigen::MatrixXd Qn(n, na);
  for (int it = 0; it < max_iters; ++it) {
    const Eigen::VectorXd vmax = Q.rowwise().maxCoeff();
    for (int a = 0; a < na; ++a) Qn.col(a) = m.R.col(a) + gamma * (m.P[a] * vmax);
    const double d = (Qn - Q).cwiseAbs().maxCoeff();
    Q.swap(Qn);
    if (d < tol) return Q;
  }
  throw std::runtime_error("value iteration did not reach tolerance");
}

Eigen::VectorXd stationary_state(const ExactModel& m, const Eigen::MatrixXd& Mu,
                                 double tol, int max_iters) {
  check_model(m);
  const int n = m.n_states;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  for (int a = 0; a < m.n_actions; ++a)
    K += Mu.col(a).asDiagonal() * m.P[a];
  Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / n);
  Eigen::VectorXd vn(n);
  for (int it = 0; it < max_iters; ++it) {
    vn.noalias() = K.transpose() * v;
    vn /= vn.sum();
    const double d = (vn - v).cwiseAbs().maxCoeff();
    v.swap(vn);
    if (d < tol) return v;
  }
  throw std::runtime_error("stationary distribution did not converge");
}

Eigen::MatrixXd stationary_sa(const ExactModel& m, const Eigen::MatrixXd& Mu) {
  const Eigen::VectorXd v = stationary_state(m, Mu);
  return v.asDiagonal() * Mu;
}

namespace {

struct Enumerator {
  Enumerator(const ExactModel& m, const TabularRingEnv& env, const TabularQ& q,
             const Policy* target_pi, Mode mode, double gamma)
      : m_(m), env_(env), q_(q), pi_(target_pi), mode_(mode), gamma_(gamma) {
    check_model(m);
    if (mode == Mode::kEval && pi_ == nullptr)
      throw std::invalid_argument("eval-mode enumeration needs a target policy");
    grid_.reserve(m.n_states);
    for (int k = 0; k < m.n_states; ++k)
      grid_.push_back(make_state1(env.grid_point(k)));
  }

  double j(int s, int a, int k) const {
    const double r = m_.r_next[k];
    return mode_ == Mode::kEval
               ? residual_eval(q_, *pi_, gamma_, grid_[s], a, r, grid_[k])
               : residual_ctrl(q_, gamma_, grid_[s], a, r, grid_[k]);
  }

  void add_grad(int s, int a, const State& boot, double scale,
                Eigen::VectorXd& out) const {
    if (mode_ == Mode::kEval)
      add_grad_residual_eval(q_, *pi_, gamma_, grid_[s], a, boot, false, scale,
                             out);
    else
      add_grad_residual_ctrl(q_, gamma_, grid_[s], a, boot, false, scale, out);
  }

  const ExactModel& m_;
  const TabularRingEnv& env_;
  const TabularQ& q_;
  const Policy* pi_;
  Mode mode_;
  double gamma_;
  std::vector<State> grid_;
};

}  // namespace

Eigen::VectorXd exact_mean_gradient(EstimatorKind kind, const ExactModel& m,
                                    const TabularRingEnv& env,
                                    const TabularQ& q, const Policy* target_pi,
                                    const Eigen::MatrixXd& behavior,
                                    const Eigen::MatrixXd& rho, Mode mode,
                                    double gamma) {
  const Enumerator e(m, env, q, target_pi, mode, gamma);
  const int n = m.n_states;
  const int na = m.n_actions;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(q.param_count());
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < na; ++a) {
      const double w_sa = rho(s, a);
      if (w_sa == 0.0) continue;
      switch (kind) {
        case EstimatorKind::kUs:
          // genuinely independent landing draws: a full double sum
          for (int s1 = 0; s1 < n; ++s1) {
            const double c = w_sa * m.P[a](s, s1) * e.j(s, a, s1);
            for (int s2 = 0; s2 < n; ++s2)
              e.add_grad(s, a, e.grid_[s2], c * m.P[a](s, s2), out);
          }
          break;
        case EstimatorKind::kSc:
          for (int s1 = 0; s1 < n; ++s1)
            e.add_grad(s, a, e.grid_[s1],
                       w_sa * m.P[a](s, s1) * e.j(s, a, s1), out);
          break;
        case EstimatorKind::kBff:
          for (int s1 = 0; s1 < n; ++s1) {
            const double c1 = w_sa * m.P[a](s, s1) * e.j(s, a, s1);
            for (int a1 = 0; a1 < na; ++a1) {
              const double c2 = c1 * behavior(s1, a1);
              for (int s2 = 0; s2 < n; ++s2) {
                const State boot = env.shift_by_increment(
                    e.grid_[s], e.grid_[s1], e.grid_[s2]);
                e.add_grad(s, a, boot, c2 * m.P[a1](s1, s2), out);
              }
            }
          }
          break;
        default:
          throw std::invalid_argument(
              "enumeration covers the us/sc/bff estimators only");
      }
    }
  }
  return out;
}

Eigen::VectorXd exact_mean_gradient_factored(const ExactModel& m,
                                             const TabularRingEnv& env,
                                             const TabularQ& q,
                                             const Policy* target_pi,
                                             const Eigen::MatrixXd& rho,
                                             Mode mode, double gamma) {
  const Enumerator e(m, env, q, target_pi, mode, gamma);
  const int n = m.n_states;
  const int na = m.n_actions;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(q.param_count());
  Eigen::VectorXd gbar(q.param_count());
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < na; ++a) {
      const double w_sa = rho(s, a);
      if (w_sa == 0.0) continue;
      double jbar = 0.0;
      gbar.setZero();
      for (int s1 = 0; s1 < n; ++s1) {
        jbar += m.P[a](s, s1) * e.j(s, a, s1);
        e.add_grad(s, a, e.grid_[s1], m.P[a](s, s1), gbar);
      }
      out += (w_sa * jbar) * gbar;
    }
  }
  return out;
}

BiasProbe probe_stationary_bias(const Env& env, const QApprox& q,
                                const Policy* target_pi,
                                const Policy& behavior, Mode mode,
                                double gamma, uint64_t samples,
                                uint64_t burnin, uint64_t seed) {
  if (samples < 2) throw std::invalid_argument("probe needs >= 2 samples");
  Rng rng_traj(Rng::mix(seed, kStreamTrajectory));
  Rng rng_us(Rng::mix(seed, kStreamResample));
  const Trajectory traj =
      generate_trajectory(env, behavior, burnin + samples + 2, rng_traj);

  const Eigen::Index dim = q.param_count();
  Eigen::VectorXd sum_us = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd sum_dsc = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd sum_dbf = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd ss_us = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd ss_dsc = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd ss_dbf = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd d(dim);

  for (uint64_t m = burnin; m < burnin + samples; ++m) {
    const auto w = window(traj, m, 1);
    if (!w) throw std::logic_error("probe window fell off the trajectory");
    const GradientEstimate us =
        us_gradient(*w, q, target_pi, mode, gamma, env, rng_us);
    const GradientEstimate sc = sc_gradient(*w, q, target_pi, mode, gamma);
    const GradientEstimate bf = bff_gradient(*w, q, target_pi, mode, gamma, env);
    sum_us += us.grad;
    ss_us += us.grad.cwiseAbs2();
    d = sc.grad - us.grad;
    sum_dsc += d;
    ss_dsc += d.cwiseAbs2();
    d = bf.grad - us.grad;
    sum_dbf += d;
    ss_dbf += d.cwiseAbs2();
  }

  const double N = static_cast<double>(samples);
  auto finish = [N](const Eigen::VectorXd& sum, const Eigen::VectorXd& ss,
                    Eigen::VectorXd& mean, Eigen::VectorXd& se) {
    mean = sum / N;
    se = ((ss / N - mean.cwiseAbs2()).cwiseMax(0.0) / (N - 1.0)).cwiseSqrt();
  };
  BiasProbe out;
  out.samples = samples;
  finish(sum_us, ss_us, out.mean_us, out.se_us);
  finish(sum_dsc, ss_dsc, out.mean_sc_minus_us, out.se_sc_minus_us);
  finish(sum_dbf, ss_dbf, out.mean_bff_minus_us, out.se_bff_minus_us);
  return out;
}

}  // namespace brm

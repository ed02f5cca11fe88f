#include "brm/estimators.hpp"

#include <cmath>
#include <stdexcept>

namespace brm {

const char* estimator_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::kUs: return "us";
    case EstimatorKind::kSc: return "sc";
    case EstimatorKind::kBff: return "bff";
    case EstimatorKind::kNbff: return "nbff";
    case EstimatorKind::kPd: return "pd";
  }
  return "?";
}

EstimatorKind estimator_from_name(const std::string& name) {
  if (name == "us") return EstimatorKind::kUs;
  if (name == "sc") return EstimatorKind::kSc;
  if (name == "bff") return EstimatorKind::kBff;
  if (name == "nbff") return EstimatorKind::kNbff;
  if (name == "pd") return EstimatorKind::kPd;
  throw std::invalid_argument("unknown estimator: " + name);
}

const char* mode_name(Mode m) { return m == Mode::kEval ? "eval" : "ctrl"; }

Mode mode_from_name(const std::string& name) {
  if (name == "eval") return Mode::kEval;
  if (name == "ctrl" || name == "control") return Mode::kCtrl;
  throw std::invalid_argument("unknown mode: " + name);
}

int window_lookahead(EstimatorKind kind, int n_steps) {
  switch (kind) {
    case EstimatorKind::kBff: return 1;
    case EstimatorKind::kNbff: return n_steps;
    default: return 0;
  }
}

std::vector<double> uniform_weights(int n) {
  if (n < 1) throw std::invalid_argument("nbff needs n >= 1");
  return std::vector<double>(static_cast<size_t>(n), 1.0 / n);
}

namespace {

double window_residual(const TrajectoryWindow& w, const QApprox& q,
                       const Policy* pi, Mode mode, double gamma) {
  if (mode == Mode::kEval) {
    if (pi == nullptr) throw std::invalid_argument("eval mode needs a policy");
    return residual_eval(q, *pi, gamma, w.s, w.a, w.r, w.future[0], w.terminal);
  }
  return residual_ctrl(q, gamma, w.s, w.a, w.r, w.future[0], w.terminal);
}

void add_term(const TrajectoryWindow& w, const QApprox& q, const Policy* pi,
              Mode mode, double gamma, const State& s_boot, double scale,
              Eigen::VectorXd& accum) {
  if (mode == Mode::kEval) {
    add_grad_residual_eval(q, *pi, gamma, w.s, w.a, s_boot, w.terminal, scale,
                           accum);
  } else {
    add_grad_residual_ctrl(q, gamma, w.s, w.a, s_boot, w.terminal, scale,
                           accum);
  }
}

GradientEstimate start_estimate(const TrajectoryWindow& w, const QApprox& q,
                                const Policy* pi, Mode mode, double gamma) {
  if (w.future.empty()) throw std::invalid_argument("window has no next state");
  GradientEstimate est;
  est.grad = Eigen::VectorXd::Zero(q.param_count());
  est.j = window_residual(w, q, pi, mode, gamma);
  return est;
}

void check_weights(const std::vector<double>& alpha) {
  if (alpha.empty()) throw std::invalid_argument("nbff needs weights");
  double sum = 0.0;
  for (double a : alpha) {
    if (!std::isfinite(a)) throw std::invalid_argument("nbff weight not finite");
    sum += a;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("nbff weights must sum to 1");
  }
}

}  // namespace

GradientEstimate us_gradient(const TrajectoryWindow& w, const QApprox& q,
                             const Policy* pi, Mode mode, double gamma,
                             const Env& env, Rng& rng) {
  GradientEstimate est = start_estimate(w, q, pi, mode, gamma);
  const State s_boot =
      w.terminal ? w.future[0] : env.resample_next(w.s, w.a, rng);
  add_term(w, q, pi, mode, gamma, s_boot, 1.0, est.grad);
  est.grad *= est.j;
  return est;
}

GradientEstimate sc_gradient(const TrajectoryWindow& w, const QApprox& q,
                             const Policy* pi, Mode mode, double gamma) {
  GradientEstimate est = start_estimate(w, q, pi, mode, gamma);
  add_term(w, q, pi, mode, gamma, w.future[0], 1.0, est.grad);
  est.grad *= est.j;
  return est;
}

GradientEstimate bff_gradient(const TrajectoryWindow& w, const QApprox& q,
                              const Policy* pi, Mode mode, double gamma,
                              const Env& env) {
  GradientEstimate est = start_estimate(w, q, pi, mode, gamma);
  State s_boot;
  if (w.future.size() >= 2) {
    s_boot = env.shift_by_increment(w.s, w.future[0], w.future[1]);
  } else {
    s_boot = w.future[0];
    if (!w.terminal) est.fallback_terms = 1;
  }
  add_term(w, q, pi, mode, gamma, s_boot, 1.0, est.grad);
  est.grad *= est.j;
  return est;
}

GradientEstimate nbff_gradient(const TrajectoryWindow& w, const QApprox& q,
                               const Policy* pi, Mode mode, double gamma,
                               const Env& env, const std::vector<double>& alpha) {
  check_weights(alpha);
  GradientEstimate est = start_estimate(w, q, pi, mode, gamma);
  for (size_t k = 1; k <= alpha.size(); ++k) {
    State s_boot;
    if (w.future.size() >= k + 1) {
      s_boot = env.shift_by_increment(w.s, w.future[k - 1], w.future[k]);
    } else {
      s_boot = w.future[0];
      if (!w.terminal) ++est.fallback_terms;
    }
    add_term(w, q, pi, mode, gamma, s_boot, alpha[k - 1], est.grad);
  }
  est.grad *= est.j;
  return est;
}

// ------------------------------------------------------------ tabular route

void SparseGradient::apply_to(Eigen::VectorXd& acc) const {
  for (const auto& [idx, coeff] : entries) acc[idx] += coeff * j;
}

Eigen::VectorXd SparseGradient::to_dense(Eigen::Index dim) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  apply_to(v);
  return v;
}

namespace {

// merge-preserving append: a colliding index accumulates onto its first
// occurrence, exactly like += into a dense slot
void push_coeff(SparseGradient& g, int idx, double coeff) {
  for (auto& [i, c] : g.entries) {
    if (i == idx) {
      c += coeff;
      return;
    }
  }
  g.entries.emplace_back(idx, coeff);
}

// one residual-gradient term, Algorithm-2/4 write pattern
void push_term(SparseGradient& g, const TrajectoryWindow& w, const TabularQ& q,
               const Policy* pi, Mode mode, double gamma, const State& s_boot,
               double scale) {
  const int na = q.num_actions();
  if (!w.terminal) {
    if (mode == Mode::kEval) {
      Eigen::VectorXd p(na);
      pi->probs(s_boot, p);
      const int bi = q.state_index(s_boot);
      for (int b = 0; b < na; ++b) {
        push_coeff(g, q.flat_index(bi, b), scale * gamma * p[b]);
      }
    } else {
      const int astar = argmax_action(q, s_boot);
      push_coeff(g, q.flat_index(q.state_index(s_boot), astar), scale * gamma);
    }
  }
  push_coeff(g, q.flat_index(q.state_index(w.s), w.a), -scale);
}

}  // namespace

SparseGradient tabular_gradient(EstimatorKind kind, const TrajectoryWindow& w,
                                const TabularQ& q, const Policy* pi, Mode mode,
                                double gamma, const Env& env, Rng* rng,
                                const std::vector<double>& alpha) {
  if (w.future.empty()) throw std::invalid_argument("window has no next state");
  SparseGradient g;
  g.j = window_residual(w, q, pi, mode, gamma);

  switch (kind) {
    case EstimatorKind::kUs: {
      if (rng == nullptr) throw std::invalid_argument("us needs an rng");
      const State s_boot =
          w.terminal ? w.future[0] : env.resample_next(w.s, w.a, *rng);
      push_term(g, w, q, pi, mode, gamma, s_boot, 1.0);
      break;
    }
    case EstimatorKind::kSc:
      push_term(g, w, q, pi, mode, gamma, w.future[0], 1.0);
      break;
    case EstimatorKind::kBff: {
      State s_boot;
      if (w.future.size() >= 2) {
        s_boot = env.shift_by_increment(w.s, w.future[0], w.future[1]);
      } else {
        s_boot = w.future[0];
        if (!w.terminal) g.fallback_terms = 1;
      }
      push_term(g, w, q, pi, mode, gamma, s_boot, 1.0);
      break;
    }
    case EstimatorKind::kNbff: {
      check_weights(alpha);
      for (size_t k = 1; k <= alpha.size(); ++k) {
        State s_boot;
        if (w.future.size() >= k + 1) {
          s_boot = env.shift_by_increment(w.s, w.future[k - 1], w.future[k]);
        } else {
          s_boot = w.future[0];
          if (!w.terminal) ++g.fallback_terms;
        }
        push_term(g, w, q, pi, mode, gamma, s_boot, alpha[k - 1]);
      }
      break;
    }
    case EstimatorKind::kPd:
      throw std::invalid_argument("pd does not have a tabular fast path");
  }
  return g;
}

// -------------------------------------------------------------- primal-dual

Eigen::VectorXd pd_dual_increment(const TrajectoryWindow& w, const QApprox& q,
                                  const QApprox& dual, const Policy* pi,
                                  Mode mode, double gamma, double beta) {
  if (w.future.empty()) throw std::invalid_argument("window has no next state");
  const double j = window_residual(w, q, pi, mode, gamma);
  const double y = q_value(dual, w.s, w.a);
  Eigen::VectorXd coeff = Eigen::VectorXd::Zero(dual.num_actions());
  coeff[w.a] = beta * j - y;
  Eigen::VectorXd incr = Eigen::VectorXd::Zero(dual.param_count());
  dual.grad_weighted(w.s, coeff, incr);
  return incr;
}

Eigen::VectorXd pd_theta_grad(const TrajectoryWindow& w, const QApprox& q,
                              const QApprox& dual, const Policy* pi, Mode mode,
                              double gamma) {
  const double y = q_value(dual, w.s, w.a);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(q.param_count());
  add_term(w, q, pi, mode, gamma, w.future[0], y, grad);
  return grad;
}

PdUpdate pd_update(const TrajectoryWindow& w, const QApprox& q, QApprox& dual,
                   const Policy* pi, Mode mode, double gamma, double beta) {
  PdUpdate upd;
  upd.j = window_residual(w, q, pi, mode, gamma);
  upd.dual_step = pd_dual_increment(w, q, dual, pi, mode, gamma, beta);
  dual.params() += upd.dual_step;
  upd.theta_grad = pd_theta_grad(w, q, dual, pi, mode, gamma);
  return upd;
}

}  // namespace brm

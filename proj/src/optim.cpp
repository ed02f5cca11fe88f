#include "brm/optim.hpp"

#include <algorithm>
#include <cmath>

#include "brm/approx.hpp"

namespace brm {

Eigen::VectorXd batch_mean(const std::vector<Eigen::VectorXd>& grads) {
  if (grads.empty()) throw std::invalid_argument("batch_mean: empty batch");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(grads[0].size());
  for (const auto& g : grads) acc += g;
  return acc / static_cast<double>(grads.size());
}

void sgd_step(Eigen::VectorXd& theta, const Eigen::VectorXd& mean_grad,
              double eta) {
  theta -= eta * mean_grad;
}

void adam_step(AdamState& state, const OptimizerSpec& spec,
               Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  ++state.t;
  state.m = spec.beta1 * state.m + (1.0 - spec.beta1) * grad;
  state.v = spec.beta2 * state.v + (1.0 - spec.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(spec.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(spec.beta2, static_cast<double>(state.t));
  theta.array() -= spec.lr * (state.m.array() / bc1) /
                   ((state.v.array() / bc2).sqrt() + spec.eps_hat);
}

Optimizer::Optimizer(const OptimizerSpec& spec, Eigen::Index dim)
    : spec_(spec), adam_(dim) {}

void Optimizer::step(Eigen::VectorXd& theta, const Eigen::VectorXd& mean_grad) {
  if (!mean_grad.allFinite()) throw DivergedError(t_);
  ++t_;
  double eta = spec_.lr;
  if (spec_.lr_pow != 0.0)
    eta *= std::pow(static_cast<double>(t_), -spec_.lr_pow);
  if (spec_.kind == OptimizerSpec::Kind::kSgd) {
    sgd_step(theta, mean_grad, eta);
  } else {
    OptimizerSpec eff = spec_;
    eff.lr = eta;
    adam_step(adam_, eff, theta, mean_grad);
  }
  if (!theta.allFinite()) throw DivergedError(t_ - 1);
}

ReplayBuffer::ReplayBuffer(size_t capacity) : cap_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be > 0");
  buf_.reserve(capacity);
}

void ReplayBuffer::push(TrajectoryWindow w) {
  if (buf_.size() < cap_) {
    buf_.push_back(std::move(w));
  } else {
    buf_[next_] = std::move(w);
    next_ = (next_ + 1) % cap_;
  }
}

const TrajectoryWindow& ReplayBuffer::at(size_t i) const {
  if (i >= buf_.size()) throw std::out_of_range("replay index");
  if (buf_.size() < cap_) return buf_[i];
  return buf_[(next_ + i) % cap_];
}

const TrajectoryWindow& ReplayBuffer::sample(Rng& rng) const {
  if (buf_.empty()) throw std::logic_error("sampling from empty replay buffer");
  return buf_[rng.uniform_int(static_cast<int>(buf_.size()))];
}

double ExplorationSchedule::at(uint64_t k) const {
  return std::max(floor, start * std::pow(decay, static_cast<double>(k)));
}

std::vector<TrajectoryWindow> sample_batch(const Trajectory& traj,
                                           int batch_size, int lookahead,
                                           Rng& rng) {
  std::vector<TrajectoryWindow> batch;
  batch.reserve(batch_size);
  const int n = static_cast<int>(traj.size());
  for (int i = 0; i < batch_size; ++i) {
    const size_t m = static_cast<size_t>(rng.uniform_int(n));
    batch.push_back(window_with_fallback(traj, m, lookahead));
  }
  return batch;
}

namespace {

double power_lr(double base, double pow_exp, uint64_t k) {
  if (pow_exp == 0.0) return base;
  return base * std::pow(static_cast<double>(k), -pow_exp);
}

GradientEstimate dense_gradient(EstimatorKind kind, const TrajectoryWindow& w,
                                const QApprox& q, const Policy* pi, Mode mode,
                                double gamma, const Env& env, Rng& rng_us,
                                const std::vector<double>& alpha) {
  switch (kind) {
    case EstimatorKind::kUs:
      return us_gradient(w, q, pi, mode, gamma, env, rng_us);
    case EstimatorKind::kSc:
      return sc_gradient(w, q, pi, mode, gamma);
    case EstimatorKind::kBff:
      return bff_gradient(w, q, pi, mode, gamma, env);
    case EstimatorKind::kNbff:
      return nbff_gradient(w, q, pi, mode, gamma, env, alpha);
    case EstimatorKind::kPd:
      break;
  }
  throw std::logic_error("pd has no single-sample product form");
}

// surrogate-state terms per window, the denominator of the fallback rate
uint64_t surrogate_terms(EstimatorKind kind, int n) {
  if (kind == EstimatorKind::kBff) return 1;
  if (kind == EstimatorKind::kNbff) return static_cast<uint64_t>(n);
  return 0;
}

struct BatchStepper {
  BatchStepper(const TrainOptions& opt, QApprox& q, QApprox* dual,
               const Policy* pi, const Env& env, Rng& rng_us)
      : opt_(opt),
        q_(q),
        dual_(dual),
        pi_(pi),
        env_(env),
        rng_us_(rng_us),
        optim_(opt.optimizer, q.param_count()),
        acc_(q.param_count()),
        dual_acc_(dual ? dual->param_count() : 0),
        alpha_(opt.alpha.empty() ? uniform_weights(opt.nbff_n) : opt.alpha),
        tab_(opt.use_tabular_route ? dynamic_cast<TabularQ*>(&q) : nullptr) {
    if (opt_.use_tabular_route && tab_ == nullptr)
      throw std::invalid_argument(
          "tabular gradient route requires a TabularQ approximator");
    if (opt_.estimator == EstimatorKind::kPd && dual_ == nullptr)
      throw std::invalid_argument("pd training requires a dual approximator");
  }

  // one parameter update from `batch`; throws DivergedError on non-finite
  // gradients or parameters
  void update(const std::vector<const TrajectoryWindow*>& batch,
              TrainResult& stats) {
    const auto bs = static_cast<double>(batch.size());
    if (opt_.estimator == EstimatorKind::kPd) {
      // dual ascent first: the theta gradient is taken against the already
      // advanced dual parameters
      const double beta_k =
          power_lr(opt_.pd_beta, opt_.pd_beta_pow, optim_.steps_taken() + 1);
      dual_acc_.setZero();
      for (const auto* w : batch)
        dual_acc_ += pd_dual_increment(*w, q_, *dual_, pi_, opt_.mode,
                                       opt_.gamma, beta_k);
      dual_acc_ /= bs;
      if (!dual_acc_.allFinite()) throw DivergedError(optim_.steps_taken());
      dual_->params() += dual_acc_;
      if (!dual_->params().allFinite())
        throw DivergedError(optim_.steps_taken());
      acc_.setZero();
      for (const auto* w : batch)
        acc_ += pd_theta_grad(*w, q_, *dual_, pi_, opt_.mode, opt_.gamma);
      acc_ /= bs;
      optim_.step(q_.params(), acc_);
    } else {
      acc_.setZero();
      for (const auto* w : batch) {
        if (tab_ != nullptr) {
          const SparseGradient sg =
              tabular_gradient(opt_.estimator, *w, *tab_, pi_, opt_.mode,
                               opt_.gamma, env_, &rng_us_, alpha_);
          sg.apply_to(acc_);
          stats.fallback_terms += sg.fallback_terms;
        } else {
          const GradientEstimate g =
              dense_gradient(opt_.estimator, *w, q_, pi_, opt_.mode,
                             opt_.gamma, env_, rng_us_, alpha_);
          acc_ += g.grad;
          stats.fallback_terms += g.fallback_terms;
        }
        stats.gradient_terms += surrogate_terms(opt_.estimator, opt_.nbff_n);
      }
      acc_ /= bs;
      optim_.step(q_.params(), acc_);
    }
    stats.updates_done = optim_.steps_taken();
  }

  uint64_t steps_taken() const { return optim_.steps_taken(); }

 private:
  const TrainOptions& opt_;
  QApprox& q_;
  QApprox* dual_;
  const Policy* pi_;
  const Env& env_;
  Rng& rng_us_;
  Optimizer optim_;
  Eigen::VectorXd acc_;
  Eigen::VectorXd dual_acc_;
  std::vector<double> alpha_;
  TabularQ* tab_;
};

}  // namespace

TrainResult train_offline(const Env& env, const Trajectory& traj,
                          const Policy* target_pi, std::unique_ptr<QApprox> q,
                          std::unique_ptr<QApprox> dual,
                          const TrainOptions& opt, uint64_t seed,
                          const TrainCallbacks& cb) {
  const int lookahead = window_lookahead(opt.estimator, opt.nbff_n);
  Rng rng_batch(Rng::mix(seed, kStreamBatch));
  Rng rng_us(Rng::mix(seed, kStreamResample));
  TrainResult out;
  BatchStepper stepper(opt, *q, dual.get(), target_pi, env, rng_us);
  std::vector<const TrajectoryWindow*> refs(opt.batch_size);
  try {
    for (uint64_t k = 0; k < opt.updates; ++k) {
      if (cb.on_metric && k % opt.metric_stride == 0) cb.on_metric(k, *q);
      const auto batch = sample_batch(traj, opt.batch_size, lookahead, rng_batch);
      for (int i = 0; i < opt.batch_size; ++i) refs[i] = &batch[i];
      stepper.update(refs, out);
    }
    if (cb.on_metric) cb.on_metric(opt.updates, *q);
  } catch (const DivergedError& e) {
    out.diverged = true;
    out.diverged_at = e.step;
  }
  out.q = std::move(q);
  out.dual = std::move(dual);
  return out;
}

TrainResult train_cartpole(const CartPoleEnv& env, std::unique_ptr<QApprox> q,
                           std::unique_ptr<QApprox> dual,
                           const TrainOptions& opt, uint64_t seed,
                           const TrainCallbacks& cb) {
  const int lookahead = window_lookahead(opt.estimator, opt.nbff_n);
  Rng rng_traj(Rng::mix(seed, kStreamTrajectory));
  Rng rng_batch(Rng::mix(seed, kStreamBatch));
  Rng rng_us(Rng::mix(seed, kStreamResample));
  ReplayBuffer replay(opt.replay_capacity);
  double eps = opt.exploration.at(0);
  EpsGreedyPolicy behavior(q.get(), &eps);

  TrainResult out;
  BatchStepper stepper(opt, *q, dual.get(), nullptr, env, rng_us);
  std::vector<const TrajectoryWindow*> refs(opt.batch_size);

  // per-episode rollout storage; nodes has one more entry than acts/rews
  std::vector<State> nodes;
  std::vector<int> acts;
  std::vector<double> rews;
  auto build_window = [&](int m, bool is_term) {
    TrajectoryWindow w;
    w.s = nodes[m];
    w.a = acts[m];
    w.r = rews[m];
    w.terminal = is_term;
    const int last =
        std::min<int>(m + 1 + lookahead, static_cast<int>(nodes.size()) - 1);
    for (int i = m + 1; i <= last; ++i) w.future.push_back(nodes[i]);
    return w;
  };
  auto do_update = [&]() {
    for (int i = 0; i < opt.batch_size; ++i) refs[i] = &replay.sample(rng_batch);
    stepper.update(refs, out);
    eps = opt.exploration.at(stepper.steps_taken());
    if (cb.on_metric && stepper.steps_taken() % opt.metric_stride == 0)
      cb.on_metric(stepper.steps_taken(), *q);
  };

  if (cb.on_metric) cb.on_metric(0, *q);
  try {
    for (int ep = 0; ep < opt.episodes; ++ep) {
      nodes.assign(1, env.initial_state(rng_traj));
      acts.clear();
      rews.clear();
      double ep_reward = 0.0;
      bool term = false;
      while (!term) {
        const int a = behavior.sample(nodes.back(), rng_traj);
        const StepResult res = env.step(nodes.back(), a, rng_traj);
        acts.push_back(a);
        rews.push_back(res.reward);
        nodes.push_back(res.s_next);
        ep_reward += res.reward;
        const int t = static_cast<int>(acts.size());
        term = res.terminal || t >= opt.episode_cap;
        // the window at m = t-1-lookahead just received its last future state
        const int m = t - 1 - lookahead;
        if (m >= 0) replay.push(build_window(m, term && m == t - 1));
        if (replay.size() >= static_cast<size_t>(opt.batch_size)) do_update();
      }
      // windows still waiting for future states at the episode end: emit them
      // with truncated futures (estimators fall back per their own rule)
      const int t = static_cast<int>(acts.size());
      for (int m = std::max(0, t - lookahead); m < t; ++m)
        replay.push(build_window(m, m == t - 1));
      if (cb.on_episode) cb.on_episode(ep, ep_reward);
    }
  } catch (const DivergedError& e) {
    out.diverged = true;
    out.diverged_at = e.step;
  }
  out.q = std::move(q);
  out.dual = std::move(dual);
  return out;
}

}  // namespace brm

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "brm/estimators.hpp"
#include "brm/mdp.hpp"

namespace brm {

struct OptimizerSpec {
  enum class Kind { kSgd, kAdam };
  Kind kind = Kind::kSgd;
  double lr = 0.1;
  double lr_pow = 0.0;  // step k uses lr * k^{-lr_pow}, k counted from 1
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

// thrown when a gradient or parameter vector stops being finite
struct DivergedError : std::runtime_error {
  explicit DivergedError(uint64_t at)
      : std::runtime_error("run diverged at update " + std::to_string(at)),
        step(at) {}
  uint64_t step;
};

// mean over batch members, summed in index order
Eigen::VectorXd batch_mean(const std::vector<Eigen::VectorXd>& grads);

void sgd_step(Eigen::VectorXd& theta, const Eigen::VectorXd& mean_grad,
              double eta);

struct AdamState {
  explicit AdamState(Eigen::Index dim)
      : m(Eigen::VectorXd::Zero(dim)), v(Eigen::VectorXd::Zero(dim)) {}
  Eigen::VectorXd m, v;
  uint64_t t = 0;
};

// standard Adam with bias correction
void adam_step(AdamState& state, const OptimizerSpec& spec,
               Eigen::VectorXd& theta, const Eigen::VectorXd& grad);

class Optimizer {
 public:
  Optimizer(const OptimizerSpec& spec, Eigen::Index dim);
  // applies one update with the schedule's step-k learning rate; throws
  // DivergedError when the gradient or the updated parameters are non finite
  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& mean_grad);
  uint64_t steps_taken() const { return t_; }

 private:
  OptimizerSpec spec_;
  AdamState adam_;
  uint64_t t_ = 0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity);
  void push(TrajectoryWindow w);  // strictly FIFO eviction at capacity
  size_t size() const { return buf_.size(); }
  size_t capacity() const { return cap_; }
  const TrajectoryWindow& sample(Rng& rng) const;
  // logical order: 0 = oldest surviving element
  const TrajectoryWindow& at(size_t i) const;

 private:
  std::vector<TrajectoryWindow> buf_;
  size_t cap_;
  size_t next_ = 0;  // slot the next push overwrites once full
};

// epsilon_explore(k) = max(floor, start * decay^k), decayed per parameter update
struct ExplorationSchedule {
  double start = 1.0;
  double decay = 0.99;
  double floor = 0.1;
  double at(uint64_t k) const;
};

// uniform-with-replacement start positions over the whole trajectory;
// boundary positions yield partial windows that estimators resolve by their
// own fallback rule
std::vector<TrajectoryWindow> sample_batch(const Trajectory& traj,
                                           int batch_size, int lookahead,
                                           Rng& rng);

struct TrainOptions {
  Mode mode = Mode::kEval;
  EstimatorKind estimator = EstimatorKind::kBff;
  int nbff_n = 1;
  std::vector<double> alpha;  // empty -> uniform 1/n
  double gamma = 0.9;
  uint64_t updates = 0;
  int batch_size = 50;
  OptimizerSpec optimizer;
  uint64_t metric_stride = 1000;
  bool use_tabular_route = false;  // sparse table writes instead of dense grads
  // primal-dual: beta_k = pd_beta * k^{-pd_beta_pow}; eta comes from optimizer
  double pd_beta = 0.1;
  double pd_beta_pow = 0.0;
  // online (cart-pole)
  int episodes = 200;
  size_t replay_capacity = 10000;
  ExplorationSchedule exploration;
  int episode_cap = CartPoleEnv::kEpisodeCap;
};

struct TrainCallbacks {
  // called at every metric_stride updates (including update 0) and once more
  // after the final update
  std::function<void(uint64_t update, const QApprox& q)> on_metric;
  std::function<void(int episode, double reward)> on_episode;  // online only
};

struct TrainResult {
  std::unique_ptr<QApprox> q;
  std::unique_ptr<QApprox> dual;  // primal-dual only
  uint64_t updates_done = 0;
  uint64_t gradient_terms = 0;
  uint64_t fallback_terms = 0;
  bool diverged = false;
  uint64_t diverged_at = 0;
};

// Offline training: batches are sampled from a fixed pre-generated trajectory.
// `target_pi` supplies the bootstrap policy for eval mode (ignored for ctrl).
TrainResult train_offline(const Env& env, const Trajectory& traj,
                          const Policy* target_pi, std::unique_ptr<QApprox> q,
                          std::unique_ptr<QApprox> dual,
                          const TrainOptions& opt, uint64_t seed,
                          const TrainCallbacks& cb);

// Online cart-pole training: acts epsilon-greedily on the current Q,
// interleaving environment steps with one replay-batch update per step once
// the buffer holds a full batch.
TrainResult train_cartpole(const CartPoleEnv& env, std::unique_ptr<QApprox> q,
                           std::unique_ptr<QApprox> dual,
                           const TrainOptions& opt, uint64_t seed,
                           const TrainCallbacks& cb);

}  // namespace brm

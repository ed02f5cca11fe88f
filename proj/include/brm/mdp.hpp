#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "brm/rng.hpp"

namespace brm {

// States are small (1-D ring angle, 4-D cart-pole); fixed max size avoids a
// heap allocation per state.
using State = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 4, 1>;

inline State make_state1(double s) {
  State x(1);
  x[0] = s;
  return x;
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

// reduce to [0, 2*pi)
double wrap_angle(double s);
// reduce to (-pi, pi]; recovers a circular increment from wrapped endpoints
double circular_diff(double a, double b);

struct StepResult {
  State s_next;
  double reward = 0.0;
  bool terminal = false;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual int state_dim() const = 0;
  virtual int num_actions() const = 0;
  virtual State initial_state(Rng& rng) const = 0;
  virtual StepResult step(const State& s, int a, Rng& rng) const = 0;
  virtual bool episodic() const { return false; }
  // Re-simulation from an arbitrary (s, a). All built-in envs support it; it
  // is a simulator privilege unavailable to a purely model-free agent.
  virtual bool supports_resample() const { return true; }
  State resample_next(const State& s, int a, Rng& rng) const;
  // Surrogate next state s_m + (s2 - s1), with env-specific geometry (ring
  // envs take the circular difference and re-wrap).
  virtual State shift_by_increment(const State& s, const State& s1,
                                   const State& s2) const;

 protected:
  void check_action(int a) const;
};

enum class DriftKind { kActionSign, kConstant };

// One-step dynamics ds = mu(s,a)*eps + sigma*Z*sqrt(eps) on the circle,
// mu(s,a) = a in {-1,+1} (or a constant, for degenerate-kernel tests),
// reward r(s',s,a) = sin(s') + 1.
class ContinuousRingEnv : public Env {
 public:
  ContinuousRingEnv(double epsilon, double sigma,
                    DriftKind drift = DriftKind::kActionSign,
                    double drift_const = 0.0);
  int state_dim() const override { return 1; }
  int num_actions() const override { return 2; }
  State initial_state(Rng&) const override { return make_state1(0.0); }
  StepResult step(const State& s, int a, Rng& rng) const override;
  State shift_by_increment(const State& s, const State& s1,
                           const State& s2) const override;

  // deterministic core with the noise variable injected; step() draws z
  StepResult step_with_noise(const State& s, int a, double z) const;
  double epsilon() const { return epsilon_; }
  double sigma() const { return sigma_; }
  double drift_value(int a) const;

 private:
  double epsilon_;
  double sigma_;
  DriftKind drift_kind_;
  double drift_const_;
};

// Same diffusion restricted to the grid {2*pi*k/n}: the raw move is snapped
// to the nearest grid point in circular distance. Drift scale is 2*pi/n per
// unit action so one drift step is one grid cell at eps = 1.
class TabularRingEnv : public Env {
 public:
  TabularRingEnv(int n, double epsilon, double sigma,
                 DriftKind drift = DriftKind::kActionSign,
                 double drift_const = 0.0);
  int state_dim() const override { return 1; }
  int num_actions() const override { return 2; }
  State initial_state(Rng&) const override { return make_state1(0.0); }
  StepResult step(const State& s, int a, Rng& rng) const override;
  State shift_by_increment(const State& s, const State& s1,
                           const State& s2) const override;

  StepResult step_with_noise(const State& s, int a, double z) const;
  int n() const { return n_; }
  double epsilon() const { return epsilon_; }
  double sigma() const { return sigma_; }
  double spacing() const { return kTwoPi / n_; }
  double drift_value(int a) const;
  int snap_index(double s_raw) const;  // circular argmin over the grid
  double grid_point(int k) const { return spacing() * k; }
  int index_of(const State& s) const { return snap_index(s[0]); }

 private:
  int n_;
  double epsilon_;
  double sigma_;
  DriftKind drift_kind_;
  double drift_const_;
};

// Classic-control cart-pole: state (x, x_dot, theta, theta_dot), actions
// {0: push left, 1: push right}, reward 1 per step, termination when
// |x| > 2.4 or |theta| > 12 degrees. The 200-step cap is enforced by the
// rollout loop, not by the (stateless) dynamics.
class CartPoleEnv : public Env {
 public:
  CartPoleEnv() = default;
  int state_dim() const override { return 4; }
  int num_actions() const override { return 2; }
  bool episodic() const override { return true; }
  State initial_state(Rng& rng) const override;
  StepResult step(const State& s, int a, Rng& rng) const override;

  static constexpr double kGravity = 9.8;
  static constexpr double kMassCart = 1.0;
  static constexpr double kMassPole = 0.1;
  static constexpr double kHalfLength = 0.5;
  static constexpr double kForceMag = 10.0;
  static constexpr double kTau = 0.02;
  static constexpr double kXThreshold = 2.4;
  static constexpr double kThetaThreshold = 12.0 * 2.0 * 3.141592653589793 / 360.0;
  static constexpr int kEpisodeCap = 200;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual int num_actions() const = 0;
  // fills out[a] = pi(a|s); each >= 0, sums to 1
  virtual void probs(const State& s, Eigen::Ref<Eigen::VectorXd> out) const = 0;
  int sample(const State& s, Rng& rng) const;
};

class UniformPolicy : public Policy {
 public:
  explicit UniformPolicy(int num_actions) : na_(num_actions) {}
  int num_actions() const override { return na_; }
  void probs(const State&, Eigen::Ref<Eigen::VectorXd> out) const override;

 private:
  int na_;
};

// pi(a|s) = 1/2 + a*sin(s)/5 with a in {-1,+1}; action index 0 maps to -1.
class SinRingPolicy : public Policy {
 public:
  int num_actions() const override { return 2; }
  void probs(const State& s, Eigen::Ref<Eigen::VectorXd> out) const override;
};

class QApprox;  // approx.hpp

// epsilon-greedy around a Q approximator; epsilon is read through a pointer
// so a decaying schedule is visible without rebuilding the policy.
class EpsGreedyPolicy : public Policy {
 public:
  EpsGreedyPolicy(const QApprox* q, const double* epsilon)
      : q_(q), epsilon_(epsilon) {}
  int num_actions() const override;
  void probs(const State& s, Eigen::Ref<Eigen::VectorXd> out) const override;

 private:
  const QApprox* q_;
  const double* epsilon_;
};

// Rollout storage. States are kept as a node chain per episode (an episode of
// L records owns L+1 nodes), so s_{m+1} of record m and s_m of record m+1 are
// the same storage -- the chaining invariant holds by construction.
class Trajectory {
 public:
  explicit Trajectory(int state_dim);

  // begins a new episode whose first state is s0
  void begin_episode(const State& s0);
  void push(int a, double r, const State& s_next, bool terminal = false);

  size_t size() const { return actions_.size(); }
  int state_dim() const { return dim_; }
  size_t num_episodes() const { return episode_first_record_.size(); }

  State state(size_t m) const { return node(node_index(m)); }
  State next_state(size_t m) const { return node(node_index(m) + 1); }
  int action(size_t m) const { return actions_[m]; }
  double reward(size_t m) const { return rewards_[m]; }
  uint32_t episode_id(size_t m) const;
  bool terminal(size_t m) const;  // whether next_state(m) ended the episode
  bool same_episode(size_t m1, size_t m2) const {
    return episode_id(m1) == episode_id(m2);
  }
  // records from m with lookahead n stay inside one episode and in range
  bool window_fits(size_t m, int n) const;

 private:
  size_t episode_of(size_t m) const;
  size_t node_index(size_t m) const;
  State node(size_t i) const;

  int dim_;
  std::vector<double> nodes_;            // dim_ doubles per node
  std::vector<uint8_t> actions_;
  std::vector<double> rewards_;
  std::vector<size_t> episode_first_record_;
  std::vector<size_t> episode_first_node_;
  std::vector<uint8_t> episode_terminal_;
  bool open_ = false;                    // current episode accepts pushes
};

// Raw input of every gradient estimator: (s_m, a_m, r_m) plus the future
// states s_{m+1} ... s_{m+n+1} that lie inside the same episode.
struct TrajectoryWindow {
  State s;
  int a = 0;
  double r = 0.0;
  bool terminal = false;            // the (s,a) -> future[0] step ended the episode
  std::vector<State> future;        // future[0] = s_{m+1}, always present
};

// Strict slice: rejects (nullopt) when records m..m+n cross an episode
// boundary or run past the end.
std::optional<TrajectoryWindow> window(const Trajectory& traj, size_t m, int n);

// Tolerant slice used by samplers: always yields a window (record m must
// exist); futures stop at the episode end and estimators apply their own
// fallback for missing terms.
TrajectoryWindow window_with_fallback(const Trajectory& traj, size_t m, int n);

Trajectory generate_trajectory(const Env& env, const Policy& policy, size_t T,
                               Rng& rng, int episode_cap = CartPoleEnv::kEpisodeCap);

// Binary cache for long rollouts: 8-byte magic, u32 state dim, u64 record
// count, then per record (f64 state components, u32 action, f64 reward,
// u32 episode_id), all little-endian. Episode-final next states are stored as
// sentinel records (action 0xffffffff) so the round-trip is lossless.
void save_trajectory(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory(const std::string& path);

}  // namespace brm

#include "brm/mdp.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "brm/approx.hpp"

namespace brm {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts unsupported");

double wrap_angle(double s) {
  double w = s - kTwoPi * std::floor(s / kTwoPi);
  if (w >= kTwoPi) w -= kTwoPi;
  if (w < 0.0) w = 0.0;
  return w;
}

double circular_diff(double a, double b) {
  const double d = a - b;
  return d - kTwoPi * std::round(d / kTwoPi);
}

State Env::resample_next(const State& s, int a, Rng& rng) const {
  if (!supports_resample()) {
    throw std::runtime_error("environment does not support independent redraws");
  }
  return step(s, a, rng).s_next;
}

State Env::shift_by_increment(const State& s, const State& s1,
                              const State& s2) const {
  return s + (s2 - s1);
}

void Env::check_action(int a) const {
  if (a < 0 || a >= num_actions()) {
    throw std::invalid_argument("invalid action " + std::to_string(a) +
                                " for environment with " +
                                std::to_string(num_actions()) + " actions");
  }
}

// ---------------------------------------------------------------- ring envs

namespace {
double sign_of_action(int a) { return a == 0 ? -1.0 : 1.0; }
}  // namespace

ContinuousRingEnv::ContinuousRingEnv(double epsilon, double sigma,
                                     DriftKind drift, double drift_const)
    : epsilon_(epsilon), sigma_(sigma), drift_kind_(drift),
      drift_const_(drift_const) {
  if (epsilon_ <= 0.0 || sigma_ < 0.0) {
    throw std::invalid_argument("ring env requires epsilon > 0 and sigma >= 0");
  }
}

double ContinuousRingEnv::drift_value(int a) const {
  return drift_kind_ == DriftKind::kActionSign ? sign_of_action(a)
                                               : drift_const_;
}

StepResult ContinuousRingEnv::step_with_noise(const State& s, int a,
                                              double z) const {
  check_action(a);
  const double ds = drift_value(a) * epsilon_ + sigma_ * z * std::sqrt(epsilon_);
  StepResult out;
  out.s_next = make_state1(wrap_angle(s[0] + ds));
  out.reward = std::sin(out.s_next[0]) + 1.0;
  return out;
}

StepResult ContinuousRingEnv::step(const State& s, int a, Rng& rng) const {
  return step_with_noise(s, a, rng.gaussian());
}

State ContinuousRingEnv::shift_by_increment(const State& s, const State& s1,
                                            const State& s2) const {
  return make_state1(wrap_angle(s[0] + circular_diff(s2[0], s1[0])));
}

TabularRingEnv::TabularRingEnv(int n, double epsilon, double sigma,
                               DriftKind drift, double drift_const)
    : n_(n), epsilon_(epsilon), sigma_(sigma), drift_kind_(drift),
      drift_const_(drift_const) {
  if (n_ < 2) throw std::invalid_argument("tabular ring needs n >= 2");
  if (epsilon_ <= 0.0 || sigma_ < 0.0) {
    throw std::invalid_argument("ring env requires epsilon > 0 and sigma >= 0");
  }
}

double TabularRingEnv::drift_value(int a) const {
  const double unit = spacing();
  return drift_kind_ == DriftKind::kActionSign ? unit * sign_of_action(a)
                                               : drift_const_;
}

int TabularRingEnv::snap_index(double s_raw) const {
  // nearest grid point in circular distance; exact for a uniform grid
  long k = std::lround(s_raw / spacing());
  k %= n_;
  if (k < 0) k += n_;
  return static_cast<int>(k);
}

StepResult TabularRingEnv::step_with_noise(const State& s, int a,
                                           double z) const {
  check_action(a);
  const double ds = drift_value(a) * epsilon_ + sigma_ * z * std::sqrt(epsilon_);
  StepResult out;
  out.s_next = make_state1(grid_point(snap_index(s[0] + ds)));
  out.reward = std::sin(out.s_next[0]) + 1.0;
  return out;
}

StepResult TabularRingEnv::step(const State& s, int a, Rng& rng) const {
  return step_with_noise(s, a, rng.gaussian());
}

State TabularRingEnv::shift_by_increment(const State& s, const State& s1,
                                         const State& s2) const {
  const double raw = s[0] + circular_diff(s2[0], s1[0]);
  return make_state1(grid_point(snap_index(raw)));
}

// ---------------------------------------------------------------- cart-pole

State CartPoleEnv::initial_state(Rng& rng) const {
  State s(4);
  for (int i = 0; i < 4; ++i) s[i] = rng.uniform(-0.05, 0.05);
  return s;
}

StepResult CartPoleEnv::step(const State& s, int a, Rng&) const {
  check_action(a);
  const double force = a == 1 ? kForceMag : -kForceMag;
  const double x = s[0], x_dot = s[1], theta = s[2], theta_dot = s[3];
  const double costheta = std::cos(theta);
  const double sintheta = std::sin(theta);
  const double total_mass = kMassCart + kMassPole;
  const double polemass_length = kMassPole * kHalfLength;

  const double temp =
      (force + polemass_length * theta_dot * theta_dot * sintheta) / total_mass;
  const double thetaacc =
      (kGravity * sintheta - costheta * temp) /
      (kHalfLength * (4.0 / 3.0 - kMassPole * costheta * costheta / total_mass));
  const double xacc = temp - polemass_length * thetaacc * costheta / total_mass;

  StepResult out;
  out.s_next = State(4);
  out.s_next[0] = x + kTau * x_dot;
  out.s_next[1] = x_dot + kTau * xacc;
  out.s_next[2] = theta + kTau * theta_dot;
  out.s_next[3] = theta_dot + kTau * thetaacc;
  out.reward = 1.0;
  out.terminal = std::abs(out.s_next[0]) > kXThreshold ||
                 std::abs(out.s_next[2]) > kThetaThreshold;
  return out;
}

// ----------------------------------------------------------------- policies

int Policy::sample(const State& s, Rng& rng) const {
  const int na = num_actions();
  Eigen::VectorXd p(na);
  probs(s, p);
  const double u = rng.uniform();
  double cum = 0.0;
  for (int a = 0; a < na; ++a) {
    cum += p[a];
    if (u < cum) return a;
  }
  return na - 1;
}

void UniformPolicy::probs(const State&, Eigen::Ref<Eigen::VectorXd> out) const {
  out.setConstant(1.0 / na_);
}

void SinRingPolicy::probs(const State& s,
                          Eigen::Ref<Eigen::VectorXd> out) const {
  const double tilt = std::sin(s[0]) / 5.0;
  out[0] = 0.5 - tilt;
  out[1] = 0.5 + tilt;
}

int EpsGreedyPolicy::num_actions() const { return q_->num_actions(); }

void EpsGreedyPolicy::probs(const State& s,
                            Eigen::Ref<Eigen::VectorXd> out) const {
  const int na = num_actions();
  const double eps = *epsilon_;
  out.setConstant(eps / na);
  out[argmax_action(*q_, s)] += 1.0 - eps;
}

// --------------------------------------------------------------- trajectory

Trajectory::Trajectory(int state_dim) : dim_(state_dim) {}

void Trajectory::begin_episode(const State& s0) {
  if (s0.size() != dim_) throw std::invalid_argument("state dim mismatch");
  episode_first_record_.push_back(actions_.size());
  episode_first_node_.push_back(nodes_.size() / dim_);
  episode_terminal_.push_back(false);
  open_ = true;
  for (int i = 0; i < dim_; ++i) nodes_.push_back(s0[i]);
}

void Trajectory::push(int a, double r, const State& s_next, bool terminal) {
  if (!open_ || episode_first_record_.empty()) {
    throw std::logic_error("push without an open episode");
  }
  if (s_next.size() != dim_) throw std::invalid_argument("state dim mismatch");
  actions_.push_back(static_cast<uint8_t>(a));
  rewards_.push_back(r);
  for (int i = 0; i < dim_; ++i) nodes_.push_back(s_next[i]);
  if (terminal) {
    episode_terminal_.back() = true;
    open_ = false;
  }
}

size_t Trajectory::episode_of(size_t m) const {
  // episodes are few; binary search over first-record offsets
  size_t lo = 0, hi = episode_first_record_.size();
  while (hi - lo > 1) {
    const size_t mid = (lo + hi) / 2;
    if (episode_first_record_[mid] <= m) lo = mid; else hi = mid;
  }
  return lo;
}

uint32_t Trajectory::episode_id(size_t m) const {
  return static_cast<uint32_t>(episode_of(m));
}

bool Trajectory::terminal(size_t m) const {
  const size_t e = episode_of(m);
  const size_t last = (e + 1 < episode_first_record_.size()
                           ? episode_first_record_[e + 1]
                           : actions_.size()) - 1;
  return m == last && episode_terminal_[e];
}

bool Trajectory::window_fits(size_t m, int n) const {
  if (m + static_cast<size_t>(n) >= actions_.size()) return false;
  return same_episode(m, m + static_cast<size_t>(n));
}

size_t Trajectory::node_index(size_t m) const {
  const size_t e = episode_of(m);
  return episode_first_node_[e] + (m - episode_first_record_[e]);
}

State Trajectory::node(size_t i) const {
  State s(dim_);
  for (int c = 0; c < dim_; ++c) s[c] = nodes_[i * dim_ + c];
  return s;
}

std::optional<TrajectoryWindow> window(const Trajectory& traj, size_t m, int n) {
  if (n < 0 || !traj.window_fits(m, n)) return std::nullopt;
  TrajectoryWindow w;
  w.s = traj.state(m);
  w.a = traj.action(m);
  w.r = traj.reward(m);
  w.terminal = traj.terminal(m);
  w.future.reserve(static_cast<size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) w.future.push_back(traj.next_state(m + k));
  return w;
}

TrajectoryWindow window_with_fallback(const Trajectory& traj, size_t m, int n) {
  if (m >= traj.size()) throw std::out_of_range("window start past trajectory end");
  TrajectoryWindow w;
  w.s = traj.state(m);
  w.a = traj.action(m);
  w.r = traj.reward(m);
  w.terminal = traj.terminal(m);
  w.future.push_back(traj.next_state(m));
  for (int k = 1; k <= n; ++k) {
    if (!traj.window_fits(m, k)) break;
    w.future.push_back(traj.next_state(m + k));
  }
  return w;
}

Trajectory generate_trajectory(const Env& env, const Policy& policy, size_t T,
                               Rng& rng, int episode_cap) {
  Trajectory traj(env.state_dim());
  size_t steps = 0;
  while (steps < T) {
    State s = env.initial_state(rng);
    traj.begin_episode(s);
    int ep_steps = 0;
    while (steps < T) {
      const int a = policy.sample(s, rng);
      StepResult res = env.step(s, a, rng);
      ++ep_steps;
      const bool term =
          res.terminal || (env.episodic() && ep_steps >= episode_cap);
      traj.push(a, res.reward, res.s_next, term);
      ++steps;
      s = res.s_next;
      if (term) break;
    }
    if (!env.episodic()) break;
  }
  return traj;
}

// ----------------------------------------------------------- trajectory IO

namespace {

constexpr char kTrajMagic[8] = {'B', 'R', 'M', 'T', 'R', 'A', 'J', '1'};
constexpr uint32_t kSentinelAction = 0xffffffffu;

template <typename T>
void write_le(std::ostream& os, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  char buf[sizeof(T)];
  is.read(buf, sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void save_trajectory(const Trajectory& traj, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kTrajMagic, sizeof(kTrajMagic));
  write_le<uint32_t>(os, static_cast<uint32_t>(traj.state_dim()));

  // one sentinel record per episode carries the final next state; its reward
  // field is 1.0 when the episode closed terminally, else 0.0
  const uint64_t total = traj.size() + traj.num_episodes();
  write_le<uint64_t>(os, total);
  const int dim = traj.state_dim();
  for (size_t m = 0; m < traj.size(); ++m) {
    const State s = traj.state(m);
    for (int c = 0; c < dim; ++c) write_le<double>(os, s[c]);
    write_le<uint32_t>(os, static_cast<uint32_t>(traj.action(m)));
    write_le<double>(os, traj.reward(m));
    write_le<uint32_t>(os, traj.episode_id(m));
    const bool episode_end = m + 1 == traj.size() ||
                             traj.episode_id(m + 1) != traj.episode_id(m);
    if (episode_end) {
      const State sn = traj.next_state(m);
      for (int c = 0; c < dim; ++c) write_le<double>(os, sn[c]);
      write_le<uint32_t>(os, kSentinelAction);
      write_le<double>(os, traj.terminal(m) ? 1.0 : 0.0);
      write_le<uint32_t>(os, traj.episode_id(m));
    }
  }
  if (!os) throw std::runtime_error("failed writing " + path);
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kTrajMagic, 8) != 0) {
    throw std::runtime_error(path + " is not a trajectory cache");
  }
  const uint32_t dim = read_le<uint32_t>(is);
  const uint64_t total = read_le<uint64_t>(is);
  if (dim == 0 || dim > 4) throw std::runtime_error("bad state dim in " + path);

  Trajectory traj(static_cast<int>(dim));
  State s(static_cast<int>(dim));
  bool have_prev = false;
  uint32_t prev_a = 0;
  double prev_r = 0.0;
  for (uint64_t i = 0; i < total; ++i) {
    for (uint32_t c = 0; c < dim; ++c) s[c] = read_le<double>(is);
    const uint32_t a = read_le<uint32_t>(is);
    const double r = read_le<double>(is);
    read_le<uint32_t>(is);  // episode id is implied by sentinel structure
    if (!is) throw std::runtime_error("truncated trajectory cache " + path);
    if (have_prev) {
      const bool closes = a == kSentinelAction;
      traj.push(static_cast<int>(prev_a), prev_r, s, closes && r == 1.0);
    } else {
      if (a == kSentinelAction) throw std::runtime_error("orphan sentinel in " + path);
      traj.begin_episode(s);
    }
    if (a == kSentinelAction) {
      have_prev = false;
    } else {
      prev_a = a;
      prev_r = r;
      have_prev = true;
    }
  }
  if (have_prev) throw std::runtime_error("missing episode sentinel in " + path);
  return traj;
}

}  // namespace brm

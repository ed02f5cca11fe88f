#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "brm/mdp.hpp"

namespace brm {

// A Q(s, .) approximator over a flat parameter vector. Everything a gradient
// estimator needs is evaluate() plus grad_weighted(), which accumulates
// sum_b coeff[b] * dQ(s,b)/dtheta; residual gradients are linear combinations
// of such terms, so one backward pass per state suffices for the MLP.
//
// Instances are cheap to clone; concurrent use of a single instance is not
// supported (the MLP keeps forward scratch buffers), clone per thread instead.
class QApprox {
 public:
  virtual ~QApprox() = default;
  virtual int num_actions() const = 0;
  virtual Eigen::Index param_count() const = 0;
  virtual Eigen::VectorXd& params() = 0;
  virtual const Eigen::VectorXd& params() const = 0;
  virtual void evaluate(const State& s, Eigen::Ref<Eigen::VectorXd> out) const = 0;
  virtual void grad_weighted(const State& s,
                             const Eigen::Ref<const Eigen::VectorXd>& coeff,
                             Eigen::Ref<Eigen::VectorXd> accum) const = 0;
  virtual std::unique_ptr<QApprox> clone() const = 0;
  virtual nlohmann::json architecture() const = 0;
};

// Dense matrix Q in R^{|S| x |A|} stored flat as idx = state_index * |A| + a.
// Ring states are angles; state_index rounds to the nearest grid point
// (circular), which coincides with the env's snapping rule on a uniform grid.
class TabularQ : public QApprox {
 public:
  TabularQ(int n_states, int n_actions, double spacing = 0.0);

  int num_actions() const override { return n_actions_; }
  Eigen::Index param_count() const override { return theta_.size(); }
  Eigen::VectorXd& params() override { return theta_; }
  const Eigen::VectorXd& params() const override { return theta_; }
  void evaluate(const State& s, Eigen::Ref<Eigen::VectorXd> out) const override;
  void grad_weighted(const State& s,
                     const Eigen::Ref<const Eigen::VectorXd>& coeff,
                     Eigen::Ref<Eigen::VectorXd> accum) const override;
  std::unique_ptr<QApprox> clone() const override;
  nlohmann::json architecture() const override;

  int n_states() const { return n_states_; }
  int state_index(const State& s) const;
  int flat_index(int si, int a) const { return si * n_actions_ + a; }
  double value(int si, int a) const { return theta_[flat_index(si, a)]; }
  double& value(int si, int a) { return theta_[flat_index(si, a)]; }

 private:
  int n_states_;
  int n_actions_;
  double spacing_;
  Eigen::VectorXd theta_;
};

// The same table expressed as a linear model Q(s,a) = phi(s,a) . theta with
// one-hot features, evaluated through explicit feature vectors. Kept as a
// separate route so the tabular update pattern can be checked against the
// generic parametric path.
class OneHotQ : public QApprox {
 public:
  OneHotQ(int n_states, int n_actions, double spacing = 0.0);

  int num_actions() const override { return n_actions_; }
  Eigen::Index param_count() const override { return theta_.size(); }
  Eigen::VectorXd& params() override { return theta_; }
  const Eigen::VectorXd& params() const override { return theta_; }
  void evaluate(const State& s, Eigen::Ref<Eigen::VectorXd> out) const override;
  void grad_weighted(const State& s,
                     const Eigen::Ref<const Eigen::VectorXd>& coeff,
                     Eigen::Ref<Eigen::VectorXd> accum) const override;
  std::unique_ptr<QApprox> clone() const override;
  nlohmann::json architecture() const override;

  void features(const State& s, int a, Eigen::VectorXd& phi) const;

 private:
  int n_states_;
  int n_actions_;
  double spacing_;
  Eigen::VectorXd theta_;
};

enum class Activation { kCos, kRelu };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden = {50, 50};
  int output_dim = 2;
  Activation activation = Activation::kCos;
};

// Fully-connected net with hand-written backprop: hidden activations are all
// cosine or all ReLU, output is identity, biases everywhere. Parameters live
// in one flat vector, per layer W (column-major) then b.
class MlpQ : public QApprox {
 public:
  explicit MlpQ(const MlpSpec& spec);

  // U[-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer, weights then biases,
  // drawn in flat storage order
  void init_uniform(Rng& rng);

  int num_actions() const override { return spec_.output_dim; }
  Eigen::Index param_count() const override { return theta_.size(); }
  Eigen::VectorXd& params() override { return theta_; }
  const Eigen::VectorXd& params() const override { return theta_; }
  void evaluate(const State& s, Eigen::Ref<Eigen::VectorXd> out) const override;
  void grad_weighted(const State& s,
                     const Eigen::Ref<const Eigen::VectorXd>& coeff,
                     Eigen::Ref<Eigen::VectorXd> accum) const override;
  std::unique_ptr<QApprox> clone() const override;
  nlohmann::json architecture() const override;

  const MlpSpec& spec() const { return spec_; }

 private:
  struct Layer {
    int in, out;
    Eigen::Index w_off, b_off;
  };
  void forward(const State& s) const;

  MlpSpec spec_;
  std::vector<Layer> layers_;
  Eigen::VectorXd theta_;
  // forward/backward scratch, sized once; makes a single instance non-reentrant
  mutable std::vector<Eigen::VectorXd> act_;
  mutable std::vector<Eigen::VectorXd> z_;
  mutable Eigen::VectorXd delta_, delta_next_;
};

std::unique_ptr<QApprox> make_approx(const nlohmann::json& architecture);

// ------------------------------------------------------------- residuals

double q_value(const QApprox& q, const State& s, int a);
// lowest index wins ties
int argmax_action(const QApprox& q, const State& s);
// sum_b pi(b|sp) Q(sp, b), summed in ascending action order
double bootstrap_eval(const QApprox& q, const Policy& pi, const State& sp);

// j = r + gamma * [policy-averaged or max bootstrap at sp] - Q(s,a);
// terminal transitions have no bootstrap term
double residual_eval(const QApprox& q, const Policy& pi, double gamma,
                     const State& s, int a, double r, const State& sp,
                     bool terminal = false);
double residual_ctrl(const QApprox& q, double gamma, const State& s, int a,
                     double r, const State& sp, bool terminal = false);

// accum += scale * d j(s, a, s_boot) / d theta. The bootstrap part flows
// through s_boot (policy-weighted for eval, argmax action only for ctrl);
// the -Q(s,a) part contributes -scale at (s,a). Accumulation order is fixed:
// bootstrap first, then the (s,a) term.
void add_grad_residual_eval(const QApprox& q, const Policy& pi, double gamma,
                            const State& s, int a, const State& s_boot,
                            bool terminal, double scale, Eigen::VectorXd& accum);
void add_grad_residual_ctrl(const QApprox& q, double gamma, const State& s,
                            int a, const State& s_boot, bool terminal,
                            double scale, Eigen::VectorXd& accum);

// ------------------------------------------------------------ checkpoints

// Format: u64 little-endian header length, JSON header (architecture, seed,
// step, param_count), then param_count f64 little-endian.
void save_checkpoint(const QApprox& q, const std::string& path, uint64_t seed,
                     uint64_t step);
std::unique_ptr<QApprox> load_checkpoint(const std::string& path,
                                         nlohmann::json* header_out = nullptr);

}  // namespace brm

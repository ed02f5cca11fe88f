#include "brm/approx.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace brm {

// ------------------------------------------------------------------ tabular

namespace {
double default_spacing(int n_states, double spacing) {
  return spacing > 0.0 ? spacing : kTwoPi / n_states;
}

int ring_index(double s, double spacing, int n) {
  long k = std::lround(s / spacing);
  k %= n;
  if (k < 0) k += n;
  return static_cast<int>(k);
}
}  // namespace

TabularQ::TabularQ(int n_states, int n_actions, double spacing)
    : n_states_(n_states), n_actions_(n_actions),
      spacing_(default_spacing(n_states, spacing)),
      theta_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_states) * n_actions)) {
  if (n_states < 1 || n_actions < 1) {
    throw std::invalid_argument("tabular Q needs n_states, n_actions >= 1");
  }
}

int TabularQ::state_index(const State& s) const {
  return ring_index(s[0], spacing_, n_states_);
}

void TabularQ::evaluate(const State& s, Eigen::Ref<Eigen::VectorXd> out) const {
  const int si = state_index(s);
  for (int a = 0; a < n_actions_; ++a) out[a] = theta_[flat_index(si, a)];
}

void TabularQ::grad_weighted(const State& s,
                             const Eigen::Ref<const Eigen::VectorXd>& coeff,
                             Eigen::Ref<Eigen::VectorXd> accum) const {
  const int si = state_index(s);
  for (int a = 0; a < n_actions_; ++a) accum[flat_index(si, a)] += coeff[a];
}

std::unique_ptr<QApprox> TabularQ::clone() const {
  return std::make_unique<TabularQ>(*this);
}

nlohmann::json TabularQ::architecture() const {
  return {{"kind", "tabular"},
          {"n_states", n_states_},
          {"n_actions", n_actions_},
          {"spacing", spacing_}};
}

// ------------------------------------------------------------------ one-hot

OneHotQ::OneHotQ(int n_states, int n_actions, double spacing)
    : n_states_(n_states), n_actions_(n_actions),
      spacing_(default_spacing(n_states, spacing)),
      theta_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_states) * n_actions)) {}

void OneHotQ::features(const State& s, int a, Eigen::VectorXd& phi) const {
  phi.setZero(theta_.size());
  const int si = ring_index(s[0], spacing_, n_states_);
  phi[si * n_actions_ + a] = 1.0;
}

void OneHotQ::evaluate(const State& s, Eigen::Ref<Eigen::VectorXd> out) const {
  Eigen::VectorXd phi(theta_.size());
  for (int a = 0; a < n_actions_; ++a) {
    features(s, a, phi);
    out[a] = theta_.dot(phi);
  }
}

void OneHotQ::grad_weighted(const State& s,
                            const Eigen::Ref<const Eigen::VectorXd>& coeff,
                            Eigen::Ref<Eigen::VectorXd> accum) const {
  Eigen::VectorXd phi(theta_.size());
  for (int a = 0; a < n_actions_; ++a) {
    features(s, a, phi);
    accum += coeff[a] * phi;
  }
}

std::unique_ptr<QApprox> OneHotQ::clone() const {
  return std::make_unique<OneHotQ>(*this);
}

nlohmann::json OneHotQ::architecture() const {
  return {{"kind", "onehot"},
          {"n_states", n_states_},
          {"n_actions", n_actions_},
          {"spacing", spacing_}};
}

// ---------------------------------------------------------------------- mlp

const char* activation_name(Activation a) {
  return a == Activation::kCos ? "cos" : "relu";
}

Activation activation_from_name(const std::string& name) {
  if (name == "cos") return Activation::kCos;
  if (name == "relu") return Activation::kRelu;
  throw std::invalid_argument("unknown activation: " + name);
}

MlpQ::MlpQ(const MlpSpec& spec) : spec_(spec) {
  std::vector<int> widths;
  widths.push_back(spec.input_dim);
  for (int h : spec.hidden) widths.push_back(h);
  widths.push_back(spec.output_dim);

  Eigen::Index off = 0;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    Layer layer;
    layer.in = widths[l];
    layer.out = widths[l + 1];
    layer.w_off = off;
    off += static_cast<Eigen::Index>(layer.in) * layer.out;
    layer.b_off = off;
    off += layer.out;
    layers_.push_back(layer);
  }
  theta_ = Eigen::VectorXd::Zero(off);
  act_.resize(layers_.size() + 1);
  z_.resize(layers_.size());
}

void MlpQ::init_uniform(Rng& rng) {
  for (const Layer& l : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    const Eigen::Index n = static_cast<Eigen::Index>(l.in) * l.out + l.out;
    for (Eigen::Index i = 0; i < n; ++i) {
      theta_[l.w_off + i] = rng.uniform(-bound, bound);
    }
  }
}

void MlpQ::forward(const State& s) const {
  act_[0] = s;
  for (size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    Eigen::Map<const Eigen::MatrixXd> W(theta_.data() + l.w_off, l.out, l.in);
    Eigen::Map<const Eigen::VectorXd> b(theta_.data() + l.b_off, l.out);
    z_[i].noalias() = W * act_[i];
    z_[i] += b;
    if (i + 1 == layers_.size()) {
      act_[i + 1] = z_[i];
    } else if (spec_.activation == Activation::kCos) {
      act_[i + 1] = z_[i].array().cos();
    } else {
      act_[i + 1] = z_[i].array().max(0.0);
    }
  }
}

void MlpQ::evaluate(const State& s, Eigen::Ref<Eigen::VectorXd> out) const {
  forward(s);
  out = act_.back();
}

void MlpQ::grad_weighted(const State& s,
                         const Eigen::Ref<const Eigen::VectorXd>& coeff,
                         Eigen::Ref<Eigen::VectorXd> accum) const {
  forward(s);
  delta_ = coeff;
  for (size_t i = layers_.size(); i-- > 0;) {
    const Layer& l = layers_[i];
    Eigen::Map<Eigen::MatrixXd> Wg(accum.data() + l.w_off, l.out, l.in);
    Eigen::Map<Eigen::VectorXd> bg(accum.data() + l.b_off, l.out);
    Wg.noalias() += delta_ * act_[i].transpose();
    bg += delta_;
    if (i == 0) break;
    Eigen::Map<const Eigen::MatrixXd> W(theta_.data() + l.w_off, l.out, l.in);
    delta_next_.noalias() = W.transpose() * delta_;
    if (spec_.activation == Activation::kCos) {
      delta_next_.array() *= -z_[i - 1].array().sin();
    } else {
      delta_next_.array() *= (z_[i - 1].array() > 0.0).cast<double>();
    }
    delta_.swap(delta_next_);
  }
}

std::unique_ptr<QApprox> MlpQ::clone() const {
  return std::make_unique<MlpQ>(*this);
}

nlohmann::json MlpQ::architecture() const {
  return {{"kind", "mlp"},
          {"input_dim", spec_.input_dim},
          {"hidden", spec_.hidden},
          {"output_dim", spec_.output_dim},
          {"activation", activation_name(spec_.activation)}};
}

std::unique_ptr<QApprox> make_approx(const nlohmann::json& arch) {
  const std::string kind = arch.at("kind").get<std::string>();
  if (kind == "tabular") {
    return std::make_unique<TabularQ>(arch.at("n_states").get<int>(),
                                      arch.at("n_actions").get<int>(),
                                      arch.value("spacing", 0.0));
  }
  if (kind == "onehot") {
    return std::make_unique<OneHotQ>(arch.at("n_states").get<int>(),
                                     arch.at("n_actions").get<int>(),
                                     arch.value("spacing", 0.0));
  }
  if (kind == "mlp") {
    MlpSpec spec;
    spec.input_dim = arch.at("input_dim").get<int>();
    spec.hidden = arch.at("hidden").get<std::vector<int>>();
    spec.output_dim = arch.at("output_dim").get<int>();
    spec.activation = activation_from_name(arch.at("activation").get<std::string>());
    return std::make_unique<MlpQ>(spec);
  }
  throw std::invalid_argument("unknown approximator kind: " + kind);
}

// ------------------------------------------------------------- residuals

double q_value(const QApprox& q, const State& s, int a) {
  Eigen::VectorXd out(q.num_actions());
  q.evaluate(s, out);
  return out[a];
}

int argmax_action(const QApprox& q, const State& s) {
  Eigen::VectorXd out(q.num_actions());
  q.evaluate(s, out);
  int best = 0;
  for (int a = 1; a < q.num_actions(); ++a) {
    if (out[a] > out[best]) best = a;
  }
  return best;
}

double bootstrap_eval(const QApprox& q, const Policy& pi, const State& sp) {
  const int na = q.num_actions();
  Eigen::VectorXd qv(na), p(na);
  q.evaluate(sp, qv);
  pi.probs(sp, p);
  double sum = 0.0;
  for (int a = 0; a < na; ++a) sum += p[a] * qv[a];
  return sum;
}

double residual_eval(const QApprox& q, const Policy& pi, double gamma,
                     const State& s, int a, double r, const State& sp,
                     bool terminal) {
  const double boot = terminal ? 0.0 : bootstrap_eval(q, pi, sp);
  return r + gamma * boot - q_value(q, s, a);
}

double residual_ctrl(const QApprox& q, double gamma, const State& s, int a,
                     double r, const State& sp, bool terminal) {
  double boot = 0.0;
  if (!terminal) {
    Eigen::VectorXd qv(q.num_actions());
    q.evaluate(sp, qv);
    boot = qv[argmax_action(q, sp)];
  }
  return r + gamma * boot - q_value(q, s, a);
}

void add_grad_residual_eval(const QApprox& q, const Policy& pi, double gamma,
                            const State& s, int a, const State& s_boot,
                            bool terminal, double scale,
                            Eigen::VectorXd& accum) {
  const int na = q.num_actions();
  if (!terminal) {
    Eigen::VectorXd coeff(na);
    pi.probs(s_boot, coeff);
    for (int b = 0; b < na; ++b) coeff[b] = scale * gamma * coeff[b];
    q.grad_weighted(s_boot, coeff, accum);
  }
  Eigen::VectorXd ca = Eigen::VectorXd::Zero(na);
  ca[a] = -scale;
  q.grad_weighted(s, ca, accum);
}

void add_grad_residual_ctrl(const QApprox& q, double gamma, const State& s,
                            int a, const State& s_boot, bool terminal,
                            double scale, Eigen::VectorXd& accum) {
  const int na = q.num_actions();
  if (!terminal) {
    Eigen::VectorXd coeff = Eigen::VectorXd::Zero(na);
    coeff[argmax_action(q, s_boot)] = scale * gamma;
    q.grad_weighted(s_boot, coeff, accum);
  }
  Eigen::VectorXd ca = Eigen::VectorXd::Zero(na);
  ca[a] = -scale;
  q.grad_weighted(s, ca, accum);
}

// ----------------------------------------------------------- checkpoints

void save_checkpoint(const QApprox& q, const std::string& path, uint64_t seed,
                     uint64_t step) {
  nlohmann::json header = {{"architecture", q.architecture()},
                           {"seed", seed},
                           {"step", step},
                           {"param_count", q.param_count()}};
  const std::string htext = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  const uint64_t hlen = htext.size();
  os.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  const Eigen::VectorXd& theta = q.params();
  os.write(reinterpret_cast<const char*>(theta.data()),
           static_cast<std::streamsize>(sizeof(double) * theta.size()));
  if (!os) throw std::runtime_error("failed writing " + path);
}

std::unique_ptr<QApprox> load_checkpoint(const std::string& path,
                                         nlohmann::json* header_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  uint64_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!is || hlen > (1u << 20)) throw std::runtime_error("bad checkpoint header in " + path);
  std::string htext(hlen, '\0');
  is.read(htext.data(), static_cast<std::streamsize>(hlen));
  nlohmann::json header = nlohmann::json::parse(htext);
  auto q = make_approx(header.at("architecture"));
  const Eigen::Index n = header.at("param_count").get<Eigen::Index>();
  if (n != q->param_count()) {
    throw std::runtime_error("checkpoint param count mismatch in " + path);
  }
  is.read(reinterpret_cast<char*>(q->params().data()),
          static_cast<std::streamsize>(sizeof(double) * n));
  if (!is) throw std::runtime_error("truncated checkpoint " + path);
  if (header_out) *header_out = std::move(header);
  return q;
}

}  // namespace brm

// Acceptance gate: each numbered criterion prints a single PASS/FAIL line
// with the measured quantities and its own runtime, and sets the exit code.
// Run as `acceptance <1-10>`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "brm/harness.hpp"
#include "brm/oracle.hpp"

using namespace brm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    ok = ok && cond;
    if (!detail.empty()) detail += "; ";
    detail += what;
    if (!cond) detail += " [FAILED]";
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::runtime_error("median of nothing");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

fs::path work_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / "brm_acceptance" / tag;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ring experiment scaffolding shared by the ordering criteria
json ring_config(const std::string& name, const std::string& mode,
                 const std::string& out_dir) {
  json j;
  j["name"] = name;
  j["mode"] = mode;
  j["gamma"] = 0.9;
  j["out_dir"] = out_dir;
  j["oracle"] = {{"kind", "exact"}};
  return j;
}

// final primary-metric values per non-diverged seed for one arm label
std::vector<double> arm_finals(const json& summary, const std::string& label,
                               const std::string& key) {
  std::vector<double> out;
  for (const auto& arm : summary.at("arms")) {
    if (arm.at("label") != label) continue;
    for (const auto& e : arm.at("seeds")) {
      if (e.at("diverged").get<bool>()) continue;
      if (e.at("final").is_null() || !e.at("final").contains(key)) continue;
      out.push_back(e.at("final").at(key).get<double>());
    }
  }
  return out;
}

double arm_best_final(const json& summary, const std::string& label) {
  for (const auto& arm : summary.at("arms"))
    if (arm.at("label") == label) return arm.at("best_final").get<double>();
  throw std::runtime_error("arm not found: " + label);
}

// ---------------------------------------------------------------- 1

Outcome criterion_identities() {
  Outcome out;

  // nBFF with one future step must be the plain future-shift estimator,
  // bit for bit, on ten thousand trajectory windows in both modes
  {
    ContinuousRingEnv env(kTwoPi / 32, 0.2);
    SinRingPolicy pi;
    Rng traj_rng(Rng::mix(0, kStreamTrajectory));
    const auto traj = generate_trajectory(env, pi, 10002, traj_rng);
    MlpSpec spec;
    spec.input_dim = 1;
    spec.hidden = {16, 16};
    MlpQ q(spec);
    Rng init(Rng::mix(0, kStreamInit));
    q.init_uniform(init);

    double max_diff = 0.0;
    int windows = 0;
    for (size_t m = 0; m + 2 < traj.size() && windows < 10000; ++m, ++windows) {
      const auto w = window_with_fallback(traj, m, 1);
      const Mode mode = m % 2 == 0 ? Mode::kEval : Mode::kCtrl;
      const Policy* tp = mode == Mode::kEval ? &pi : nullptr;
      const auto a = bff_gradient(w, q, tp, mode, 0.9, env);
      const auto b = nbff_gradient(w, q, tp, mode, 0.9, env, {1.0});
      max_diff = std::max(max_diff, (a.grad - b.grad).cwiseAbs().maxCoeff());
      max_diff = std::max(max_diff, std::abs(a.j - b.j));
    }
    out.require(windows == 10000 && max_diff == 0.0,
                "nbff1_vs_bff windows=" + std::to_string(windows) +
                    " max_abs_diff=" + num(max_diff) + " (need 0)");
  }

  // with zero noise and a constant drift the three estimators see the same
  // next state: redraw vs clone is exact, the future shift only re-wraps
  {
    ContinuousRingEnv env(0.1, 0.0, DriftKind::kConstant, 1.0);
    UniformPolicy mu(2);
    SinRingPolicy target;
    Rng traj_rng(Rng::mix(1, kStreamTrajectory));
    const auto traj = generate_trajectory(env, mu, 2002, traj_rng);
    MlpSpec spec;
    spec.input_dim = 1;
    spec.hidden = {12, 12};
    MlpQ q(spec);
    Rng init(Rng::mix(1, kStreamInit));
    q.init_uniform(init);

    double us_sc = 0.0, bff_rel = 0.0;
    for (size_t m = 0; m + 2 < traj.size(); ++m) {
      const auto w = window_with_fallback(traj, m, 1);
      for (Mode mode : {Mode::kEval, Mode::kCtrl}) {
        const Policy* tp = mode == Mode::kEval ? &target : nullptr;
        Rng redraw(Rng::mix(m, kStreamResample));
        const auto gu = us_gradient(w, q, tp, mode, 0.9, env, redraw);
        const auto gs = sc_gradient(w, q, tp, mode, 0.9);
        const auto gb = bff_gradient(w, q, tp, mode, 0.9, env);
        us_sc = std::max(us_sc, (gu.grad - gs.grad).cwiseAbs().maxCoeff());
        us_sc = std::max(us_sc, std::abs(gu.j - gs.j));
        const double denom = std::max(1.0, gs.grad.norm());
        bff_rel = std::max(bff_rel, (gb.grad - gs.grad).norm() / denom);
      }
    }
    out.require(us_sc == 0.0, "sigma0 us_vs_sc max_abs_diff=" + num(us_sc) +
                                  " (need 0)");
    out.require(bff_rel <= 1e-12,
                "sigma0 bff_vs_sc rel=" + num(bff_rel) + " <= 1e-12");
  }

  // sparse table writes against the one-hot linear model, every start cell
  // of the 32x2 ring, all four product estimators, both modes
  {
    TabularRingEnv env(32, 1.0, 1.0);
    SinRingPolicy target;
    UniformPolicy mu(2);
    TabularQ tq(32, 2, env.spacing());
    Rng pr(Rng::mix(2, kStreamInit));
    for (Eigen::Index i = 0; i < tq.param_count(); ++i)
      tq.params()[i] = pr.uniform(-1.0, 1.0);
    OneHotQ oq(32, 2, env.spacing());
    oq.params() = tq.params();

    const std::vector<double> alpha3 = uniform_weights(3);
    Rng step_rng(Rng::mix(3, kStreamTrajectory));
    double max_diff = 0.0;
    for (int si = 0; si < 32; ++si) {
      for (int a = 0; a < 2; ++a) {
        TrajectoryWindow w;
        w.s = make_state1(env.grid_point(si));
        w.a = a;
        const auto st = env.step(w.s, a, step_rng);
        w.r = st.reward;
        w.future.push_back(st.s_next);
        State cur = st.s_next;
        for (int k = 0; k < 3; ++k) {
          const int b = mu.sample(cur, step_rng);
          cur = env.step(cur, b, step_rng).s_next;
          w.future.push_back(cur);
        }
        int variant = 0;
        for (EstimatorKind kind : {EstimatorKind::kUs, EstimatorKind::kSc,
                                   EstimatorKind::kBff, EstimatorKind::kNbff}) {
          for (Mode mode : {Mode::kEval, Mode::kCtrl}) {
            const Policy* tp = mode == Mode::kEval ? &target : nullptr;
            const uint64_t tag = 1000 + (si * 2 + a) * 8 + variant++;
            Rng r1(Rng::mix(tag, kStreamResample));
            Rng r2(Rng::mix(tag, kStreamResample));
            const auto sparse =
                tabular_gradient(kind, w, tq, tp, mode, 0.9, env, &r1, alpha3);
            GradientEstimate dense;
            switch (kind) {
              case EstimatorKind::kUs:
                dense = us_gradient(w, oq, tp, mode, 0.9, env, r2);
                break;
              case EstimatorKind::kSc:
                dense = sc_gradient(w, oq, tp, mode, 0.9);
                break;
              case EstimatorKind::kBff:
                dense = bff_gradient(w, oq, tp, mode, 0.9, env);
                break;
              default:
                dense = nbff_gradient(w, oq, tp, mode, 0.9, env, alpha3);
            }
            max_diff = std::max(
                max_diff,
                (sparse.to_dense(64) - dense.grad).cwiseAbs().maxCoeff());
            max_diff = std::max(max_diff, std::abs(sparse.j - dense.j));
          }
        }
      }
    }
    out.require(max_diff == 0.0,
                "tabular_vs_onehot max_abs_diff=" + num(max_diff) + " (need 0)");
  }
  return out;
}

// ---------------------------------------------------------------- 2

Outcome criterion_gradients() {
  Outcome out;
  ContinuousRingEnv env(kTwoPi / 32, 0.2);
  SinRingPolicy pi;
  const double gamma = 0.9;
  const double h = 1e-6;

  double worst = 0.0;
  int configs = 0;
  for (Mode mode : {Mode::kEval, Mode::kCtrl}) {
    for (int c = 0; c < 20; ++c, ++configs) {
      Rng rng(Rng::mix(100 + configs, kStreamProbe));
      MlpSpec spec;
      spec.input_dim = 1;
      spec.hidden = {4 + static_cast<int>(rng.uniform_int(9)),
                     4 + static_cast<int>(rng.uniform_int(9))};
      MlpQ q(spec);
      q.init_uniform(rng);

      const State s = make_state1(rng.uniform(0.0, kTwoPi));
      const int a = static_cast<int>(rng.uniform_int(2));
      const auto st = env.step(s, a, rng);
      const State sp = st.s_next;
      const double r = st.reward;

      Eigen::VectorXd analytic = Eigen::VectorXd::Zero(q.param_count());
      if (mode == Mode::kEval)
        add_grad_residual_eval(q, pi, gamma, s, a, sp, false, 1.0, analytic);
      else
        add_grad_residual_ctrl(q, gamma, s, a, sp, false, 1.0, analytic);

      Eigen::VectorXd fd(q.param_count());
      for (Eigen::Index i = 0; i < q.param_count(); ++i) {
        const double keep = q.params()[i];
        q.params()[i] = keep + h;
        const double jp = mode == Mode::kEval
                              ? residual_eval(q, pi, gamma, s, a, r, sp)
                              : residual_ctrl(q, gamma, s, a, r, sp);
        q.params()[i] = keep - h;
        const double jm = mode == Mode::kEval
                              ? residual_eval(q, pi, gamma, s, a, r, sp)
                              : residual_ctrl(q, gamma, s, a, r, sp);
        q.params()[i] = keep;
        fd[i] = (jp - jm) / (2.0 * h);
      }
      const double rel =
          (analytic - fd).norm() / std::max(analytic.norm(), 1e-12);
      worst = std::max(worst, rel);
    }
  }
  out.require(configs == 40 && worst <= 1e-6,
              "fd_check configs=" + std::to_string(configs) +
                  " worst_rel=" + num(worst) + " <= 1e-6");
  return out;
}

// ---------------------------------------------------------------- 3

Outcome criterion_unbiasedness() {
  Outcome out;
  TabularRingEnv env(8, 1.0, 1.0);
  const auto model = exact_model_analytic(env);
  SinRingPolicy target;
  UniformPolicy mu(2);
  const auto Mu = policy_matrix(mu, env);
  const auto rho = stationary_sa(model, Mu);
  const double gamma = 0.9;

  // enumerated mean of the redraw estimator vs its factored form
  // rho-weighted mean-residual times mean-residual-gradient, at a random theta
  {
    TabularQ q(8, 2, env.spacing());
    Rng rng(Rng::mix(30, kStreamProbe));
    for (Eigen::Index i = 0; i < q.param_count(); ++i)
      q.params()[i] = rng.uniform(-1.0, 1.0);
    const auto us = exact_mean_gradient(EstimatorKind::kUs, model, env, q,
                                        &target, Mu, rho, Mode::kEval, gamma);
    const auto fact = exact_mean_gradient_factored(model, env, q, &target, rho,
                                                   Mode::kEval, gamma);
    const double gap = (us - fact).norm();
    out.require(gap <= 1e-12, "factored_gap=" + num(gap) + " <= 1e-12");
  }

  // at the exact fixed point the future-shift bias vanishes, the cloned
  // sample bias does not
  {
    const auto qstar = exact_q_eval(model, policy_matrix(target, env), gamma);
    TabularQ q(8, 2, env.spacing());
    for (int s = 0; s < 8; ++s)
      for (int a = 0; a < 2; ++a) q.params()[q.flat_index(s, a)] = qstar(s, a);

    const auto us = exact_mean_gradient(EstimatorKind::kUs, model, env, q,
                                        &target, Mu, rho, Mode::kEval, gamma);
    const auto bff = exact_mean_gradient(EstimatorKind::kBff, model, env, q,
                                         &target, Mu, rho, Mode::kEval, gamma);
    const auto sc = exact_mean_gradient(EstimatorKind::kSc, model, env, q,
                                        &target, Mu, rho, Mode::kEval, gamma);
    const double us_norm = us.norm();
    const double bff_bias = (bff - us).norm();
    const double sc_bias = (sc - us).norm();
    out.require(us_norm <= 1e-12, "us_mean_at_qstar=" + num(us_norm) +
                                      " <= 1e-12");
    out.require(bff_bias <= 1e-12, "bff_bias_at_qstar=" + num(bff_bias) +
                                       " <= 1e-12");
    out.require(sc_bias > 1e-6, "sc_bias_at_qstar=" + num(sc_bias) + " > 1e-6");
  }
  return out;
}

// ---------------------------------------------------------------- 4

// Exact stationary mean gap between the cloned-sample and redraw estimators
// for a smooth three-harmonic parameterization Q(s,b) = p0 + p1 sin s +
// p2 cos s per action, enumerated over the snapped ring kernel. Hand-rolled
// residuals keep this an arithmetic route independent of the estimator code.
double smooth_sc_bias_norm(double eps) {
  const int n = 32;
  const double gamma = 0.9;
  TabularRingEnv env(n, eps, 1.0);
  const auto m = exact_model_analytic(env);
  UniformPolicy mu(2);
  const auto rho = stationary_sa(m, policy_matrix(mu, env));
  SinRingPolicy target;

  const double P[6] = {0.5, 0.8, 0.1, 0.2, -0.3, 0.4};  // per action: c0,c1,c2
  const auto qv = [&](double s, int b) {
    return P[3 * b] + P[3 * b + 1] * std::sin(s) + P[3 * b + 2] * std::cos(s);
  };
  const auto phi = [&](double s, int b) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(6);
    v[3 * b] = 1.0;
    v[3 * b + 1] = std::sin(s);
    v[3 * b + 2] = std::cos(s);
    return v;
  };

  Eigen::VectorXd vq(n);
  std::vector<Eigen::VectorXd> vg(n);
  Eigen::VectorXd pr(2);
  for (int k = 0; k < n; ++k) {
    const double s = env.grid_point(k);
    target.probs(make_state1(s), pr);
    vq[k] = pr[0] * qv(s, 0) + pr[1] * qv(s, 1);
    vg[k] = pr[0] * phi(s, 0) + pr[1] * phi(s, 1);
  }

  Eigen::VectorXd bias = Eigen::VectorXd::Zero(6);
  for (int si = 0; si < n; ++si) {
    const double s = env.grid_point(si);
    for (int a = 0; a < 2; ++a) {
      const double qsa = qv(s, a);
      const Eigen::VectorXd phis = phi(s, a);
      double mean_j = 0.0;
      Eigen::VectorXd mean_g = Eigen::VectorXd::Zero(6);
      Eigen::VectorXd mean_jg = Eigen::VectorXd::Zero(6);
      for (int sp = 0; sp < n; ++sp) {
        const double p = m.P[a](si, sp);
        if (p == 0.0) continue;
        const double j = m.r_next[sp] + gamma * vq[sp] - qsa;
        const Eigen::VectorXd gj = gamma * vg[sp] - phis;
        mean_j += p * j;
        mean_g += p * gj;
        mean_jg += p * j * gj;
      }
      bias += rho(si, a) * (mean_jg - mean_j * mean_g);
    }
  }
  return bias.norm();
}

Outcome criterion_sc_bias_scaling() {
  Outcome out;
  const double eps0 = 0.25;
  const double b0 = smooth_sc_bias_norm(eps0);
  const double b1 = smooth_sc_bias_norm(eps0 / 2);
  const double b2 = smooth_sc_bias_norm(eps0 / 4);
  const double r1 = b0 / b1;
  const double r2 = b1 / b2;
  out.note("bias(eps)=" + num(b0) + "," + num(b1) + "," + num(b2));
  out.require(r1 >= 1.8 && r1 <= 2.2, "halving_ratio_1=" + num(r1) +
                                          " in [1.8,2.2]");
  out.require(r2 >= 1.8 && r2 <= 2.2, "halving_ratio_2=" + num(r2) +
                                          " in [1.8,2.2]");
  return out;
}

// ---------------------------------------------------------------- 5

Outcome criterion_bias_residual_dependence() {
  Outcome out;
  TabularRingEnv env(8, 1.0, 1.0);
  const auto model = exact_model_analytic(env);
  SinRingPolicy target;
  UniformPolicy mu(2);
  const auto Mu = policy_matrix(mu, env);
  const auto rho = stationary_sa(model, Mu);
  const double gamma = 0.9;
  const auto qstar = exact_q_eval(model, policy_matrix(target, env), gamma);

  // snapshots along the training path: theta_w = (1 - w) Qstar, so w = 1 is
  // the zero initialization and w = 0.02 is two percent residual distance
  const auto bias_at = [&](double w, EstimatorKind kind) {
    TabularQ q(8, 2, env.spacing());
    for (int s = 0; s < 8; ++s)
      for (int a = 0; a < 2; ++a)
        q.params()[q.flat_index(s, a)] = (1.0 - w) * qstar(s, a);
    const auto e = exact_mean_gradient(kind, model, env, q, &target, Mu, rho,
                                       Mode::kEval, gamma);
    const auto u = exact_mean_gradient(EstimatorKind::kUs, model, env, q,
                                       &target, Mu, rho, Mode::kEval, gamma);
    return (e - u).norm();
  };

  const double bff_init = bias_at(1.0, EstimatorKind::kBff);
  const double bff_near = bias_at(0.02, EstimatorKind::kBff);
  const double sc_init = bias_at(1.0, EstimatorKind::kSc);
  const double sc_near = bias_at(0.02, EstimatorKind::kSc);
  out.require(bff_near <= 0.1 * bff_init,
              "bff near/init=" + num(bff_near / bff_init) + " <= 0.1");
  out.require(sc_near >= 0.5 * sc_init,
              "sc near/init=" + num(sc_near / sc_init) + " >= 0.5");
  return out;
}

// ---------------------------------------------------------------- 6

Outcome criterion_tabular_eval() {
  Outcome out;
  const fs::path dir = work_dir("c6");
  json j = ring_config("tabular_eval_ordering", "eval", (dir / "run").string());
  j["env"] = {{"kind", "tabular_ring"}, {"n", 32}, {"epsilon", 1.0},
              {"sigma", 1.0}};
  j["target_policy"] = {{"kind", "sin"}};
  j["approx"] = {{"kind", "tabular"}};
  j["optimizer"] = {{"kind", "sgd"}, {"lr", 0.5}};
  j["estimators"] = json::array({json{{"kind", "us"}}, json{{"kind", "sc"}},
                                 json{{"kind", "bff"}}});
  j["T"] = 1000000;
  j["batch_size"] = 50;
  // batches resample the fixed trajectory with replacement; the one-pass
  // count (T / batch = 20k) stops mid-transient where the arms have not yet
  // separated, so train long enough to reach the plateaus the ordering is
  // about (the cloned-sample bias floor sits ~10x above the redraw floor)
  j["updates"] = 100000;
  j["metric_stride"] = 100000;
  j["seeds"] = json::array({0, 1, 2, 3, 4});
  const auto ret = run_experiment(parse_config(j));

  const double us = median(arm_finals(ret.summary, "us", "rel_err_grid"));
  const double sc = median(arm_finals(ret.summary, "sc", "rel_err_grid"));
  const double bff = median(arm_finals(ret.summary, "bff", "rel_err_grid"));
  out.note("median_final us=" + num(us) + " sc=" + num(sc) + " bff=" +
           num(bff));
  out.require(bff <= 1.5 * us, "bff <= 1.5*us");
  out.require(bff <= 0.5 * sc, "bff <= 0.5*sc");
  return out;
}

// ---------------------------------------------------------------- 7

Outcome criterion_tabular_ctrl() {
  Outcome out;
  const fs::path dir = work_dir("c7");
  json j = ring_config("tabular_ctrl_ordering", "ctrl", (dir / "run").string());
  j["env"] = {{"kind", "tabular_ring"}, {"n", 32}, {"epsilon", 1.0},
              {"sigma", 1.0}};
  j["approx"] = {{"kind", "tabular"}};
  j["optimizer"] = {{"kind", "sgd"}, {"lr", 0.5}};
  j["estimators"] = json::array({json{{"kind", "us"}}, json{{"kind", "sc"}},
                                 json{{"kind", "bff"}}});
  j["T"] = 5000000;
  j["batch_size"] = 100;
  j["updates"] = 150000;  // past the shared transient, as in criterion 6
  j["metric_stride"] = 150000;
  j["seeds"] = json::array({0, 1, 2, 3, 4});
  const auto ret = run_experiment(parse_config(j));

  const double us = median(arm_finals(ret.summary, "us", "rel_err_grid"));
  const double sc = median(arm_finals(ret.summary, "sc", "rel_err_grid"));
  const double bff = median(arm_finals(ret.summary, "bff", "rel_err_grid"));
  out.note("median_final us=" + num(us) + " sc=" + num(sc) + " bff=" +
           num(bff));
  out.require(bff <= 1.5 * us, "bff <= 1.5*us");
  out.require(bff <= 0.5 * sc, "bff <= 0.5*sc");
  return out;
}

// ---------------------------------------------------------------- 8

Outcome criterion_continuous_ring() {
  Outcome out;
  const fs::path dir = work_dir("c8");
  const std::string ref_path = (dir / "ref.bin").string();

  const json env_spec = {{"kind", "continuous_ring"},
                         {"epsilon", kTwoPi / 32},
                         {"sigma", 0.2}};
  const json approx_spec = {{"kind", "mlp"}, {"hidden", {50, 50}},
                            {"activation", "cos"}};

  // reference Q from a long redraw-estimator run, the simulator-privileged
  // baseline the curves are scored against
  {
    json j = ring_config("continuous_ref", "eval", (dir / "oracle").string());
    j["env"] = env_spec;
    j["target_policy"] = {{"kind", "sin"}};
    j["approx"] = approx_spec;
    j["optimizer"] = {{"kind", "sgd"}, {"lr", 0.1}};
    j["estimators"] = json::array({json{{"kind", "us"}}});
    j["T"] = 1000000;
    j["batch_size"] = 50;
    j["oracle"] = {{"kind", "checkpoint"},
                   {"path", ref_path},
                   {"run", json{{"T", 1000000},
                                {"seed", 1234},
                                {"optimizer", json{{"kind", "sgd"},
                                                   {"lr", 0.1}}},
                                {"metric_stride", 20000}}}};
    static_cast<void>(run_oracle(parse_config(j)));
  }

  json base = ring_config("continuous_eval", "eval", "");
  base["env"] = env_spec;
  base["target_policy"] = {{"kind", "sin"}};
  base["approx"] = approx_spec;
  base["optimizer"] = {{"kind", "sgd"}, {"lr", 0.1}};
  base["T"] = 1000000;
  base["batch_size"] = 50;
  base["metric_stride"] = 20000;
  base["oracle"] = {{"kind", "checkpoint"}, {"path", ref_path}};

  json ja = base;
  ja["out_dir"] = (dir / "main").string();
  ja["estimators"] = json::array({json{{"kind", "bff"}}, json{{"kind", "sc"}}});
  ja["seeds"] = json::array({0, 1, 2});
  const auto main_run = run_experiment(parse_config(ja));

  json jb = base;
  jb["out_dir"] = (dir / "pd").string();
  jb["estimators"] =
      json::array({json{{"kind", "pd"}, {"pd_beta", 0.1}}});
  jb["seeds"] = json::array({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto pd_run = run_experiment(parse_config(jb));

  const double bff = median(arm_finals(main_run.summary, "bff", "rel_err_grid"));
  const double sc = median(arm_finals(main_run.summary, "sc", "rel_err_grid"));
  const double pd_best = arm_best_final(pd_run.summary, "pd");
  out.note("median_final bff=" + num(bff) + " sc=" + num(sc) +
           " pd_best_of_10=" + num(pd_best));
  out.require(bff < sc, "bff < sc");
  out.require(bff < pd_best, "bff < best-of-10 pd");
  return out;
}

// ---------------------------------------------------------------- 9

struct CartpoleStats {
  double median_first_200 = 0.0;   // episode index, sentinel = episodes + 1
  double pooled_frac_200 = 0.0;    // fraction of last-50 episodes at the cap
  double median_final50 = 0.0;     // median over seeds of mean last-50 reward
};

CartpoleStats cartpole_stats(const std::vector<CurveRecord>& curve,
                             const std::vector<uint64_t>& seeds) {
  CartpoleStats st;
  std::vector<double> firsts, final50;
  int pooled_hits = 0, pooled_total = 0;
  for (uint64_t seed : seeds) {
    std::vector<double> rewards;
    for (const auto& r : curve)
      if (r.seed == seed && r.metric == "episode_reward")
        rewards.push_back(r.value);
    double first = static_cast<double>(rewards.size()) + 1.0;
    for (size_t i = 0; i < rewards.size(); ++i)
      if (rewards[i] >= 200.0) {
        first = static_cast<double>(i) + 1.0;
        break;
      }
    firsts.push_back(first);
    const size_t lo = rewards.size() > 50 ? rewards.size() - 50 : 0;
    double sum = 0.0;
    for (size_t i = lo; i < rewards.size(); ++i) {
      sum += rewards[i];
      pooled_hits += rewards[i] >= 200.0;
      ++pooled_total;
    }
    final50.push_back(sum / static_cast<double>(rewards.size() - lo));
  }
  st.median_first_200 = median(firsts);
  st.pooled_frac_200 =
      pooled_total == 0 ? 0.0
                        : static_cast<double>(pooled_hits) / pooled_total;
  st.median_final50 = median(final50);
  return st;
}

bool cartpole_repetition(int rep, std::string& detail) {
  const fs::path dir = work_dir("c9_rep" + std::to_string(rep));
  json j;
  j["name"] = "cartpole";
  j["mode"] = "ctrl";
  j["online"] = true;
  j["gamma"] = 0.99;
  j["env"] = {{"kind", "cartpole"}};
  j["approx"] = {{"kind", "mlp"}, {"hidden", {100}}, {"activation", "relu"}};
  j["optimizer"] = {{"kind", "adam"}, {"lr", 0.001}};
  j["estimators"] = json::array(
      {json{{"kind", "bff"}},
       json{{"kind", "sc"}},
       json{{"kind", "pd"},
            {"pd_beta", 0.1},
            {"pd_beta_pow", 0.75},
            {"optimizer", json{{"kind", "sgd"}, {"lr", 0.1},
                               {"lr_pow", 0.5}}}}});
  j["batch_size"] = 50;
  j["replay_capacity"] = 10000;
  j["episodes"] = 200;
  j["oracle"] = {{"kind", "none"}};
  j["out_dir"] = (dir / "run").string();
  json seeds = json::array();
  std::vector<uint64_t> seed_list;
  for (int s = 0; s < 5; ++s) {
    seeds.push_back(rep * 5 + s);
    seed_list.push_back(static_cast<uint64_t>(rep * 5 + s));
  }
  j["seeds"] = seeds;
  const auto ret = run_experiment(parse_config(j));

  const auto curve_of = [&](const std::string& label) {
    for (const auto& c : ret.curves)
      if (c.first == label) return c.second;
    throw std::runtime_error("missing curve " + label);
  };
  const auto bff = cartpole_stats(curve_of("bff"), seed_list);
  const auto sc = cartpole_stats(curve_of("sc"), seed_list);
  const auto pd = cartpole_stats(curve_of("pd"), seed_list);

  const bool earlier = bff.median_first_200 < sc.median_first_200;
  const bool steadier = bff.pooled_frac_200 > sc.pooled_frac_200;
  const bool pd_flat = pd.median_final50 < 150.0;
  std::ostringstream os;
  os << "rep" << rep << "{first200 bff=" << bff.median_first_200
     << " sc=" << sc.median_first_200 << ", frac200 bff="
     << num(bff.pooled_frac_200) << " sc=" << num(sc.pooled_frac_200)
     << ", pd_final50=" << num(pd.median_final50) << " -> "
     << (earlier && steadier && pd_flat ? "pass" : "fail") << "}";
  detail += (detail.empty() ? "" : "; ") + os.str();
  return earlier && steadier && pd_flat;
}

Outcome criterion_cartpole() {
  Outcome out;
  std::string detail;
  int passed = 0, run = 0;
  for (int rep = 0; rep < 3 && passed < 2 && passed + (3 - run) >= 2; ++rep) {
    passed += cartpole_repetition(rep, detail);
    ++run;
  }
  out.require(passed >= 2, detail + "; repetitions_passed=" +
                               std::to_string(passed) + "/" +
                               std::to_string(run) + " (need 2)");
  return out;
}

// ---------------------------------------------------------------- 10

Outcome criterion_determinism() {
  Outcome out;
  const fs::path dir = work_dir("c10");
  const fs::path run = dir / "run";

  json j = ring_config("determinism", "eval", run.string());
  j["env"] = {{"kind", "tabular_ring"}, {"n", 8}, {"epsilon", 1.0},
              {"sigma", 1.0}};
  j["target_policy"] = {{"kind", "sin"}};
  j["approx"] = {{"kind", "tabular"}};
  j["optimizer"] = {{"kind", "sgd"}, {"lr", 0.5}};
  j["estimators"] = json::array(
      {json{{"kind", "bff"}}, json{{"kind", "us"}},
       json{{"kind", "nbff"}, {"n", 3}},
       json{{"kind", "pd"}, {"pd_beta", 0.1}}});
  j["T"] = 20000;
  j["batch_size"] = 50;
  j["metric_stride"] = 100;
  j["seeds"] = json::array({0, 1});

  static_cast<void>(run_experiment(parse_config(j)));
  fs::rename(run, dir / "first");
  static_cast<void>(run_experiment(parse_config(j)));

  size_t compared = 0, mismatched = 0;
  for (const auto& entry : fs::directory_iterator(dir / "first")) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name == "timing.json") continue;  // wall-clock by design
    ++compared;
    if (!fs::exists(run / name) ||
        slurp(entry.path()) != slurp(run / name))
      ++mismatched;
  }
  out.require(compared >= 12 && mismatched == 0,
              "files_compared=" + std::to_string(compared) + " mismatched=" +
                  std::to_string(mismatched) + " (need 0)");
  return out;
}

Outcome dispatch(int n) {
  switch (n) {
    case 1: return criterion_identities();
    case 2: return criterion_gradients();
    case 3: return criterion_unbiasedness();
    case 4: return criterion_sc_bias_scaling();
    case 5: return criterion_bias_residual_dependence();
    case 6: return criterion_tabular_eval();
    case 7: return criterion_tabular_ctrl();
    case 8: return criterion_continuous_ring();
    case 9: return criterion_cartpole();
    case 10: return criterion_determinism();
    default: throw std::runtime_error("criterion number must be 1..10");
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <1-10>\n");
    return 2;
  }
  const int n = std::atoi(argv[1]);
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = dispatch(n);
  } catch (const std::exception& e) {
    out.ok = false;
    out.note(std::string("exception: ") + e.what());
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::printf("[criterion %2d] %s (%.1f s): %s\n", n, out.ok ? "PASS" : "FAIL",
              secs, out.detail.c_str());
  return out.ok ? 0 : 1;
}

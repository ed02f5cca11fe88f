#include "brm/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "brm/approx.hpp"
#include "brm/oracle.hpp"

namespace fs = std::filesystem;

namespace brm {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

void check_keys(const json& obj, const std::string& what,
                const std::set<std::string>& allowed) {
  if (!obj.is_object()) fail(what + " must be an object");
  for (const auto& it : obj.items())
    if (allowed.count(it.key()) == 0)
      fail(what + ": unknown key '" + it.key() + "'");
}

std::string to_lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

// ------------------------------------------------------------- formatting

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_curve_csv(const std::string& path,
                     const std::vector<CurveRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write " + path);
  out << "update,seed,metric,value\n";
  for (const auto& r : records)
    out << r.update << ',' << r.seed << ',' << r.metric << ','
        << format_double(r.value) << '\n';
}

std::vector<CurveRecord> read_curve_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) fail(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "update,seed,metric,value")
    fail(path + ": unexpected header '" + line + "'");
  std::vector<CurveRecord> records;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    CurveRecord r;
    const char* p = line.data();
    const char* end = p + line.size();
    auto take_u64 = [&](uint64_t& v) {
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc() || res.ptr == end || *res.ptr != ',')
        fail(path + ": bad row '" + line + "'");
      p = res.ptr + 1;
    };
    take_u64(r.update);
    take_u64(r.seed);
    const char* comma = std::find(p, end, ',');
    if (comma == end) fail(path + ": bad row '" + line + "'");
    r.metric.assign(p, comma);
    p = comma + 1;
    const auto res = std::from_chars(p, end, r.value);
    if (res.ec != std::errc() || res.ptr != end)
      fail(path + ": bad value in '" + line + "'");
    records.push_back(std::move(r));
  }
  return records;
}

void write_curve_json(const std::string& path,
                      const std::vector<CurveRecord>& records) {
  json arr = json::array();
  for (const auto& r : records)
    arr.push_back({{"update", r.update},
                   {"seed", r.seed},
                   {"metric", r.metric},
                   {"value", r.value}});
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write " + path);
  out << arr.dump(2) << '\n';
}

std::vector<CurveRecord> read_curve_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot read " + path);
  const json arr = json::parse(in);
  std::vector<CurveRecord> records;
  for (const auto& e : arr) {
    records.push_back(CurveRecord{e.at("update").get<uint64_t>(),
                                  e.at("seed").get<uint64_t>(),
                                  e.at("metric").get<std::string>(),
                                  e.at("value").get<double>()});
  }
  return records;
}

// ------------------------------------------------------------------ toml

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

// cut an unquoted # comment
std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == '"') in_str = false;
    } else if (c == '"') {
      in_str = true;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

json parse_toml_scalar(const std::string& raw, int lineno);

json parse_toml_value(const std::string& raw, int lineno) {
  const std::string v = trim(raw);
  if (v.empty()) fail("toml line " + std::to_string(lineno) + ": missing value");
  if (v.front() == '[') {
    if (v.back() != ']')
      fail("toml line " + std::to_string(lineno) + ": unterminated array");
    json arr = json::array();
    const std::string body = v.substr(1, v.size() - 2);
    std::string item;
    bool in_str = false;
    int depth = 0;
    for (size_t i = 0; i < body.size(); ++i) {
      const char c = body[i];
      if (in_str) {
        item += c;
        if (c == '\\' && i + 1 < body.size()) item += body[++i];
        else if (c == '"') in_str = false;
      } else if (c == '"') {
        item += c;
        in_str = true;
      } else if (c == '[') {
        ++depth;
        item += c;
      } else if (c == ']') {
        --depth;
        item += c;
      } else if (c == ',' && depth == 0) {
        arr.push_back(parse_toml_value(item, lineno));
        item.clear();
      } else {
        item += c;
      }
    }
    if (!trim(item).empty()) arr.push_back(parse_toml_value(item, lineno));
    return arr;
  }
  return parse_toml_scalar(v, lineno);
}

json parse_toml_scalar(const std::string& v, int lineno) {
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"')
      fail("toml line " + std::to_string(lineno) + ": unterminated string");
    std::string out;
    for (size_t i = 1; i + 1 < v.size(); ++i) {
      char c = v[i];
      if (c == '\\' && i + 2 < v.size()) {
        const char e = v[++i];
        if (e == 'n') c = '\n';
        else if (e == 't') c = '\t';
        else if (e == '"') c = '"';
        else if (e == '\\') c = '\\';
        else fail("toml line " + std::to_string(lineno) + ": bad escape");
      }
      out += c;
    }
    return json(out);
  }
  if (v == "true") return json(true);
  if (v == "false") return json(false);
  if (v.find_first_of(".eE") != std::string::npos &&
      v.find_first_not_of("+-0123456789.eE") == std::string::npos) {
    double d = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), d);
    if (res.ec == std::errc() && res.ptr == v.data() + v.size()) return json(d);
  }
  int64_t i = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), i);
  if (res.ec == std::errc() && res.ptr == v.data() + v.size()) return json(i);
  fail("toml line " + std::to_string(lineno) + ": cannot parse value '" + v +
       "'");
}

std::vector<std::string> split_dotted(const std::string& s, int lineno) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == '.') {
      if (cur.empty())
        fail("toml line " + std::to_string(lineno) + ": empty name part");
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (trim(cur).empty())
    fail("toml line " + std::to_string(lineno) + ": empty name part");
  parts.push_back(trim(cur));
  return parts;
}

}  // namespace

json parse_toml(const std::string& text) {
  json root = json::object();
  json* table = &root;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      const bool array_table = line.size() > 1 && line[1] == '[';
      const std::string closer = array_table ? "]]" : "]";
      if (line.size() < 2 * closer.size() + 1 ||
          line.substr(line.size() - closer.size()) != closer)
        fail("toml line " + std::to_string(lineno) + ": malformed header");
      const std::string inner = trim(line.substr(
          closer.size(), line.size() - 2 * closer.size()));
      const auto parts = split_dotted(inner, lineno);
      json* node = &root;
      for (size_t i = 0; i < parts.size(); ++i) {
        const bool last = i + 1 == parts.size();
        json& slot = (*node)[parts[i]];
        if (last && array_table) {
          if (slot.is_null()) slot = json::array();
          if (!slot.is_array())
            fail("toml line " + std::to_string(lineno) + ": '" + parts[i] +
                 "' is not an array of tables");
          slot.push_back(json::object());
          node = &slot.back();
        } else {
          if (slot.is_null()) slot = json::object();
          if (slot.is_array()) {
            if (slot.empty()) fail("toml line " + std::to_string(lineno) +
                                   ": empty array of tables");
            node = &slot.back();
          } else if (slot.is_object()) {
            node = &slot;
          } else {
            fail("toml line " + std::to_string(lineno) + ": '" + parts[i] +
                 "' is not a table");
          }
        }
      }
      table = node;
      continue;
    }
    const size_t eq = [&] {
      bool in_str = false;
      for (size_t i = 0; i < line.size(); ++i) {
        if (in_str) {
          if (line[i] == '\\') ++i;
          else if (line[i] == '"') in_str = false;
        } else if (line[i] == '"') {
          in_str = true;
        } else if (line[i] == '=') {
          return i;
        }
      }
      return std::string::npos;
    }();
    if (eq == std::string::npos)
      fail("toml line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty() || key.find('.') != std::string::npos)
      fail("toml line " + std::to_string(lineno) + ": unsupported key '" + key +
           "'");
    (*table)[key] = parse_toml_value(line.substr(eq + 1), lineno);
  }
  return root;
}

// ----------------------------------------------------------------- config

json read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot read config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string ext = to_lower(fs::path(path).extension().string());
  if (ext == ".toml") return parse_toml(buf.str());
  if (ext == ".json") return json::parse(buf.str());
  fail("config must be a .toml or .json file: " + path);
}

namespace {

OptimizerSpec parse_optimizer(const json& j) {
  check_keys(j, "optimizer",
             {"kind", "lr", "lr_pow", "beta1", "beta2", "eps_hat"});
  OptimizerSpec spec;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "sgd") spec.kind = OptimizerSpec::Kind::kSgd;
  else if (kind == "adam") spec.kind = OptimizerSpec::Kind::kAdam;
  else fail("optimizer kind must be sgd or adam, got '" + kind + "'");
  spec.lr = j.at("lr").get<double>();
  spec.lr_pow = j.value("lr_pow", 0.0);
  spec.beta1 = j.value("beta1", 0.9);
  spec.beta2 = j.value("beta2", 0.999);
  spec.eps_hat = j.value("eps_hat", 1e-8);
  return spec;
}

json optimizer_json(const OptimizerSpec& s) {
  json j{{"kind", s.kind == OptimizerSpec::Kind::kSgd ? "sgd" : "adam"},
         {"lr", s.lr},
         {"lr_pow", s.lr_pow}};
  if (s.kind == OptimizerSpec::Kind::kAdam) {
    j["beta1"] = s.beta1;
    j["beta2"] = s.beta2;
    j["eps_hat"] = s.eps_hat;
  }
  return j;
}

EstimatorArm parse_arm(const json& j, const OptimizerSpec& default_opt) {
  check_keys(j, "estimator",
             {"kind", "n", "alpha", "label", "optimizer", "pd_beta",
              "pd_beta_pow"});
  EstimatorArm arm;
  arm.kind = estimator_from_name(j.at("kind").get<std::string>());
  arm.n = j.value("n", 1);
  if (arm.n < 1) fail("estimator n must be >= 1");
  if (j.contains("alpha")) {
    arm.alpha = j.at("alpha").get<std::vector<double>>();
    if (static_cast<int>(arm.alpha.size()) != arm.n)
      fail("alpha length must equal n");
  }
  arm.optimizer =
      j.contains("optimizer") ? parse_optimizer(j.at("optimizer")) : default_opt;
  arm.pd_beta = j.value("pd_beta", 0.1);
  arm.pd_beta_pow = j.value("pd_beta_pow", 0.0);
  arm.label = j.value("label", std::string());
  if (arm.label.empty()) {
    arm.label = estimator_name(arm.kind);
    if (arm.kind == EstimatorKind::kNbff) arm.label += std::to_string(arm.n);
  }
  return arm;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  check_keys(j, "config",
             {"name", "mode", "gamma", "env", "target_policy",
              "behavior_policy", "approx", "optimizer", "estimators", "T",
              "paper_T", "batch_size", "updates", "metric_stride", "seeds",
              "metrics", "oracle", "out_dir", "online", "episodes",
              "replay_capacity", "exploration", "episode_cap",
              "holdout_windows", "probe"});
  ExperimentConfig cfg;
  cfg.name = j.value("name", std::string("experiment"));
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "eval") cfg.mode = Mode::kEval;
  else if (mode == "ctrl") cfg.mode = Mode::kCtrl;
  else fail("mode must be eval or ctrl, got '" + mode + "'");
  cfg.gamma = j.at("gamma").get<double>();
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) fail("gamma must be in [0, 1)");
  cfg.env = j.at("env");
  cfg.target_policy = j.value("target_policy", json());
  cfg.behavior_policy = j.value("behavior_policy", json());
  cfg.approx = j.at("approx");
  cfg.optimizer = parse_optimizer(j.at("optimizer"));
  if (!j.contains("estimators") || !j.at("estimators").is_array() ||
      j.at("estimators").empty())
    fail("config needs a nonempty estimators array");
  for (const auto& a : j.at("estimators"))
    cfg.arms.push_back(parse_arm(a, cfg.optimizer));
  {
    std::set<std::string> labels;
    for (const auto& a : cfg.arms)
      if (!labels.insert(a.label).second)
        fail("duplicate estimator label '" + a.label + "'");
  }
  cfg.T = j.value("T", uint64_t{0});
  cfg.paper_T = j.value("paper_T", uint64_t{0});
  cfg.batch_size = j.value("batch_size", 50);
  if (cfg.batch_size <= 0) fail("batch_size must be positive");
  cfg.updates = j.value("updates", uint64_t{0});
  cfg.metric_stride = j.value("metric_stride", uint64_t{1000});
  if (cfg.metric_stride == 0) fail("metric_stride must be positive");
  cfg.seeds = j.value("seeds", std::vector<uint64_t>{0});
  if (cfg.seeds.empty()) fail("seeds must be nonempty");
  cfg.online = j.value("online", false);
  if (j.contains("metrics"))
    cfg.metrics = j.at("metrics").get<std::vector<std::string>>();
  else
    cfg.metrics = {cfg.online ? "episode_reward" : "rel_err_grid"};
  for (const auto& m : cfg.metrics)
    if (m != "rel_err_grid" && m != "episode_reward" &&
        m != "empirical_bellman_residual")
      fail("unknown metric '" + m + "'");
  cfg.oracle = j.value("oracle", json{{"kind", "none"}});
  cfg.out_dir = j.value("out_dir", std::string("out"));
  cfg.episodes = j.value("episodes", 200);
  cfg.replay_capacity = j.value("replay_capacity", size_t{10000});
  if (j.contains("exploration")) {
    const json& e = j.at("exploration");
    check_keys(e, "exploration", {"start", "decay", "floor"});
    cfg.exploration.start = e.value("start", 1.0);
    cfg.exploration.decay = e.value("decay", 0.99);
    cfg.exploration.floor = e.value("floor", 0.1);
  }
  cfg.episode_cap = j.value("episode_cap", CartPoleEnv::kEpisodeCap);
  cfg.holdout_windows = j.value("holdout_windows", uint64_t{2000});
  cfg.probe = j.value("probe", json());
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  return parse_config(read_config_file(path));
}

namespace {

uint64_t effective_T(const ExperimentConfig& cfg) {
  return (cfg.paper_scale && cfg.paper_T > 0) ? cfg.paper_T : cfg.T;
}

uint64_t effective_updates(const ExperimentConfig& cfg) {
  if (cfg.online) return 0;
  if (cfg.updates > 0) return cfg.updates;
  return effective_T(cfg) / static_cast<uint64_t>(cfg.batch_size);
}

}  // namespace

json resolved_config(const ExperimentConfig& cfg) {
  json arms = json::array();
  for (const auto& a : cfg.arms) {
    json e{{"kind", estimator_name(a.kind)}, {"label", a.label}};
    if (a.kind == EstimatorKind::kNbff) {
      e["n"] = a.n;
      e["alpha"] = a.alpha.empty() ? uniform_weights(a.n) : a.alpha;
    }
    if (a.kind == EstimatorKind::kPd) {
      e["pd_beta"] = a.pd_beta;
      e["pd_beta_pow"] = a.pd_beta_pow;
    }
    e["optimizer"] = optimizer_json(a.optimizer);
    arms.push_back(e);
  }
  json out{{"name", cfg.name},
           {"mode", cfg.mode == Mode::kEval ? "eval" : "ctrl"},
           {"gamma", cfg.gamma},
           {"env", cfg.env},
           {"target_policy", cfg.target_policy},
           {"behavior_policy", cfg.behavior_policy},
           {"approx", cfg.approx},
           {"optimizer", optimizer_json(cfg.optimizer)},
           {"estimators", arms},
           {"T", cfg.T},
           {"paper_T", cfg.paper_T},
           {"paper_scale", cfg.paper_scale},
           {"T_effective", effective_T(cfg)},
           {"batch_size", cfg.batch_size},
           {"updates", cfg.updates},
           {"updates_effective", effective_updates(cfg)},
           {"metric_stride", cfg.metric_stride},
           {"seeds", cfg.seeds},
           {"metrics", cfg.metrics},
           {"oracle", cfg.oracle},
           {"out_dir", cfg.out_dir},
           {"online", cfg.online}};
  if (cfg.online) {
    out["episodes"] = cfg.episodes;
    out["replay_capacity"] = cfg.replay_capacity;
    out["exploration"] = json{{"start", cfg.exploration.start},
                              {"decay", cfg.exploration.decay},
                              {"floor", cfg.exploration.floor}};
    out["episode_cap"] = cfg.episode_cap;
  }
  if (std::find(cfg.metrics.begin(), cfg.metrics.end(),
                "empirical_bellman_residual") != cfg.metrics.end())
    out["holdout_windows"] = cfg.holdout_windows;
  if (!cfg.probe.is_null()) out["probe"] = cfg.probe;
  return out;
}

// -------------------------------------------------------------- factories

std::unique_ptr<Env> make_env(const json& spec) {
  if (!spec.is_object() || !spec.contains("kind"))
    fail("env spec needs a kind");
  const std::string kind = spec.at("kind").get<std::string>();
  auto drift_of = [&](const json& j) {
    const std::string d = j.value("drift", std::string("action"));
    if (d == "action") return DriftKind::kActionSign;
    if (d == "constant") return DriftKind::kConstant;
    fail("drift must be action or constant, got '" + d + "'");
  };
  if (kind == "continuous_ring") {
    check_keys(spec, "env",
               {"kind", "epsilon", "sigma", "drift", "drift_const"});
    return std::make_unique<ContinuousRingEnv>(
        spec.at("epsilon").get<double>(), spec.at("sigma").get<double>(),
        drift_of(spec), spec.value("drift_const", 0.0));
  }
  if (kind == "tabular_ring") {
    check_keys(spec, "env",
               {"kind", "n", "epsilon", "sigma", "drift", "drift_const"});
    return std::make_unique<TabularRingEnv>(
        spec.at("n").get<int>(), spec.at("epsilon").get<double>(),
        spec.at("sigma").get<double>(), drift_of(spec),
        spec.value("drift_const", 0.0));
  }
  if (kind == "cartpole") {
    check_keys(spec, "env", {"kind"});
    return std::make_unique<CartPoleEnv>();
  }
  fail("unknown env kind '" + kind + "'");
}

std::unique_ptr<Policy> make_policy(const json& spec, int num_actions) {
  if (!spec.is_object() || !spec.contains("kind"))
    fail("policy spec needs a kind");
  check_keys(spec, "policy", {"kind"});
  const std::string kind = spec.at("kind").get<std::string>();
  if (kind == "uniform") return std::make_unique<UniformPolicy>(num_actions);
  if (kind == "sin") {
    if (num_actions != 2) fail("sin policy needs a 2-action env");
    return std::make_unique<SinRingPolicy>();
  }
  fail("unknown policy kind '" + kind + "'");
}

namespace {

// fills in the dimensions the approx spec leaves to the env
json resolve_approx(const json& spec, const Env& env) {
  if (!spec.is_object() || !spec.contains("kind"))
    fail("approx spec needs a kind");
  json out = spec;
  const std::string kind = spec.at("kind").get<std::string>();
  if (kind == "tabular" || kind == "onehot") {
    const auto* ring = dynamic_cast<const TabularRingEnv*>(&env);
    if (ring == nullptr)
      fail("tabular approximators need a tabular_ring env");
    if (!out.contains("n_states")) out["n_states"] = ring->n();
    if (!out.contains("n_actions")) out["n_actions"] = ring->num_actions();
    if (!out.contains("spacing")) out["spacing"] = ring->spacing();
  } else if (kind == "mlp") {
    if (!out.contains("input_dim")) out["input_dim"] = env.state_dim();
    if (!out.contains("output_dim")) out["output_dim"] = env.num_actions();
  }
  return out;
}

std::unique_ptr<QApprox> build_approx(const json& resolved, uint64_t seed,
                                      uint64_t stream) {
  auto q = make_approx(resolved);
  if (auto* mlp = dynamic_cast<MlpQ*>(q.get())) {
    Rng rng(Rng::mix(seed, stream));
    mlp->init_uniform(rng);
  }
  return q;
}

// --------------------------------------------------------------- metrics

struct RefGrid {
  std::vector<State> states;
  Eigen::VectorXd ref;
};

double rel_err_on_grid(const QApprox& q, const RefGrid& grid) {
  const int na = q.num_actions();
  Eigen::VectorXd v(static_cast<Eigen::Index>(grid.states.size()) * na);
  Eigen::VectorXd out(na);
  for (size_t i = 0; i < grid.states.size(); ++i) {
    q.evaluate(grid.states[i], out);
    v.segment(static_cast<Eigen::Index>(i) * na, na) = out;
  }
  return (v - grid.ref).norm() / grid.ref.norm();
}

std::vector<State> eval_grid_states(const Env& env) {
  if (const auto* tab = dynamic_cast<const TabularRingEnv*>(&env)) {
    std::vector<State> out;
    out.reserve(tab->n());
    for (int k = 0; k < tab->n(); ++k)
      out.push_back(make_state1(tab->grid_point(k)));
    return out;
  }
  if (dynamic_cast<const ContinuousRingEnv*>(&env) != nullptr) {
    constexpr int kGridPoints = 256;
    std::vector<State> out;
    out.reserve(kGridPoints);
    for (int k = 0; k < kGridPoints; ++k)
      out.push_back(make_state1(kTwoPi * k / kGridPoints));
    return out;
  }
  fail("no evaluation grid for this env kind");
}

Eigen::MatrixXd exact_q_for(const ExperimentConfig& cfg,
                            const TabularRingEnv& env, const Policy* target) {
  const ExactModel model = exact_model_analytic(env);
  if (cfg.mode == Mode::kEval) {
    if (target == nullptr) fail("eval-mode oracle needs a target policy");
    return exact_q_eval(model, policy_matrix(*target, env), cfg.gamma);
  }
  return exact_q_ctrl(model, cfg.gamma);
}

RefGrid build_ref_grid(const ExperimentConfig& cfg, const Env& env,
                       const Policy* target) {
  RefGrid grid;
  grid.states = eval_grid_states(env);
  const std::string kind = cfg.oracle.value("kind", std::string("none"));
  if (kind == "exact") {
    const auto* tab = dynamic_cast<const TabularRingEnv*>(&env);
    if (tab == nullptr) fail("exact oracle needs a tabular_ring env");
    const Eigen::MatrixXd Q = exact_q_for(cfg, *tab, target);
    grid.ref.resize(static_cast<Eigen::Index>(grid.states.size()) * Q.cols());
    for (int s = 0; s < Q.rows(); ++s)
      for (int a = 0; a < Q.cols(); ++a)
        grid.ref[s * Q.cols() + a] = Q(s, a);
    return grid;
  }
  if (kind == "checkpoint") {
    const std::string path = cfg.oracle.value("path", std::string());
    if (path.empty()) fail("checkpoint oracle needs a path");
    const auto ref_q = load_checkpoint(path);
    const int na = ref_q->num_actions();
    grid.ref.resize(static_cast<Eigen::Index>(grid.states.size()) * na);
    Eigen::VectorXd out(na);
    for (size_t i = 0; i < grid.states.size(); ++i) {
      ref_q->evaluate(grid.states[i], out);
      grid.ref.segment(static_cast<Eigen::Index>(i) * na, na) = out;
    }
    return grid;
  }
  fail("metric rel_err_grid needs an exact or checkpoint oracle");
}

std::vector<TrajectoryWindow> build_holdout(const ExperimentConfig& cfg,
                                            const Env& env,
                                            const Policy& behavior) {
  // fixed stream, independent of the training seeds: every run of a config
  // scores the residual on the same held-out windows
  Rng rng(Rng::mix(0x484f4c44, kStreamOracle));
  const Trajectory traj =
      generate_trajectory(env, behavior, cfg.holdout_windows + 2, rng,
                          cfg.episode_cap);
  std::vector<TrajectoryWindow> out;
  out.reserve(cfg.holdout_windows);
  for (uint64_t m = 0; m < cfg.holdout_windows && m < traj.size(); ++m)
    out.push_back(window_with_fallback(traj, m, 0));
  return out;
}

double empirical_residual(const QApprox& q, const ExperimentConfig& cfg,
                          const Policy* target,
                          const std::vector<TrajectoryWindow>& holdout) {
  double sum = 0.0;
  for (const auto& w : holdout) {
    const double j =
        cfg.mode == Mode::kEval
            ? residual_eval(q, *target, cfg.gamma, w.s, w.a, w.r, w.future[0],
                            w.terminal)
            : residual_ctrl(q, cfg.gamma, w.s, w.a, w.r, w.future[0],
                            w.terminal);
    sum += j * j;
  }
  return sum / static_cast<double>(holdout.size());
}

struct MetricSet {
  std::vector<std::string> names;
  std::vector<std::function<double(const QApprox&)>> fns;
};

MetricSet build_metrics(const ExperimentConfig& cfg, const Env& env,
                        const Policy* target, const Policy* behavior,
                        std::shared_ptr<RefGrid>& grid_out) {
  MetricSet set;
  for (const auto& name : cfg.metrics) {
    if (name == "episode_reward") continue;  // recorded by the episode hook
    if (name == "rel_err_grid") {
      if (!grid_out)
        grid_out = std::make_shared<RefGrid>(build_ref_grid(cfg, env, target));
      auto grid = grid_out;
      set.names.push_back(name);
      set.fns.push_back(
          [grid](const QApprox& q) { return rel_err_on_grid(q, *grid); });
    } else if (name == "empirical_bellman_residual") {
      if (cfg.online)
        fail("empirical_bellman_residual is an offline metric");
      auto holdout = std::make_shared<std::vector<TrajectoryWindow>>(
          build_holdout(cfg, env, *behavior));
      set.names.push_back(name);
      set.fns.push_back([&cfg, target, holdout](const QApprox& q) {
        return empirical_residual(q, cfg, target, *holdout);
      });
    }
  }
  return set;
}

// ---------------------------------------------------------------- output

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write " + path);
  out << text;
}

void write_json_file(const std::string& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

double median(std::vector<double> v) {
  if (v.empty()) fail("median of empty set");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

// ---------------------------------------------------------------- runner

RunOutput run_experiment(const ExperimentConfig& cfg) {
  auto env = make_env(cfg.env);
  if (cfg.online && !env->episodic())
    fail("online training needs an episodic env");

  std::unique_ptr<Policy> target;
  if (cfg.mode == Mode::kEval) {
    if (cfg.target_policy.is_null())
      fail("eval mode needs a target_policy");
    target = make_policy(cfg.target_policy, env->num_actions());
  } else if (!cfg.target_policy.is_null()) {
    fail("ctrl mode takes no target_policy");
  }

  std::unique_ptr<Policy> behavior;
  if (!cfg.online) {
    json bspec = cfg.behavior_policy;
    if (bspec.is_null())
      bspec = cfg.mode == Mode::kEval ? cfg.target_policy
                                      : json{{"kind", "uniform"}};
    behavior = make_policy(bspec, env->num_actions());
  }

  const json approx_spec = resolve_approx(cfg.approx, *env);
  const uint64_t T_eff = effective_T(cfg);
  const uint64_t updates_eff = effective_updates(cfg);
  if (!cfg.online && T_eff == 0 && updates_eff > 0)
    fail("offline training needs T > 0");

  std::shared_ptr<RefGrid> grid;
  const MetricSet metrics =
      build_metrics(cfg, *env, target.get(), behavior.get(), grid);

  fs::create_directories(cfg.out_dir);
  write_json_file(cfg.out_dir + "/config.resolved.json", resolved_config(cfg));

  RunOutput out;
  for (const auto& arm : cfg.arms)
    out.curves.emplace_back(arm.label, std::vector<CurveRecord>{});
  std::vector<json> arm_entries(cfg.arms.size(), json::array());
  json timing = json::object();

  for (const uint64_t seed : cfg.seeds) {
    Trajectory traj(env->state_dim());
    if (!cfg.online) {
      Rng rng(Rng::mix(seed, kStreamTrajectory));
      traj = generate_trajectory(*env, *behavior, T_eff, rng, cfg.episode_cap);
    }
    for (size_t ai = 0; ai < cfg.arms.size(); ++ai) {
      const EstimatorArm& arm = cfg.arms[ai];
      auto& records = out.curves[ai].second;

      auto q = build_approx(approx_spec, seed, kStreamInit);
      std::unique_ptr<QApprox> dual;
      if (arm.kind == EstimatorKind::kPd)
        dual = build_approx(approx_spec, seed, kStreamDualInit);

      TrainOptions topt;
      topt.mode = cfg.mode;
      topt.estimator = arm.kind;
      topt.nbff_n = arm.n;
      topt.alpha = arm.alpha;
      topt.gamma = cfg.gamma;
      topt.updates = updates_eff;
      topt.batch_size = cfg.batch_size;
      topt.optimizer = arm.optimizer;
      topt.metric_stride = cfg.metric_stride;
      topt.use_tabular_route = dynamic_cast<TabularQ*>(q.get()) != nullptr &&
                               arm.kind != EstimatorKind::kPd;
      topt.pd_beta = arm.pd_beta;
      topt.pd_beta_pow = arm.pd_beta_pow;
      topt.episodes = cfg.episodes;
      topt.replay_capacity = cfg.replay_capacity;
      topt.exploration = cfg.exploration;
      topt.episode_cap = cfg.episode_cap;

      TrainCallbacks cb;
      cb.on_metric = [&](uint64_t update, const QApprox& qq) {
        for (size_t i = 0; i < metrics.fns.size(); ++i)
          records.push_back(
              {update, seed, metrics.names[i], metrics.fns[i](qq)});
      };
      if (cfg.online &&
          std::find(cfg.metrics.begin(), cfg.metrics.end(),
                    "episode_reward") != cfg.metrics.end())
        cb.on_episode = [&](int episode, double reward) {
          records.push_back({static_cast<uint64_t>(episode), seed,
                             "episode_reward", reward});
        };

      const auto t0 = std::chrono::steady_clock::now();
      TrainResult res =
          cfg.online
              ? train_cartpole(dynamic_cast<const CartPoleEnv&>(*env),
                               std::move(q), std::move(dual), topt, seed, cb)
              : train_offline(*env, traj, target.get(), std::move(q),
                              std::move(dual), topt, seed, cb);
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      timing[arm.label + "/seed" + std::to_string(seed)] = elapsed;

      const std::string ckpt =
          "checkpoint_" + arm.label + "_seed" + std::to_string(seed) + ".bin";
      save_checkpoint(*res.q, cfg.out_dir + "/" + ckpt, seed,
                      res.updates_done);

      json entry{{"seed", seed},
                 {"updates", res.updates_done},
                 {"diverged", res.diverged}};
      if (res.diverged) entry["diverged_at"] = res.diverged_at;
      entry["fallback_terms"] = res.fallback_terms;
      entry["surrogate_terms"] = res.gradient_terms;
      entry["fallback_rate"] =
          res.gradient_terms > 0 ? static_cast<double>(res.fallback_terms) /
                                       static_cast<double>(res.gradient_terms)
                                 : 0.0;
      json final_vals;
      if (!res.diverged) {
        for (size_t i = 0; i < metrics.fns.size(); ++i)
          final_vals[metrics.names[i]] = metrics.fns[i](*res.q);
        if (cfg.online && cb.on_episode) {
          // final online score: mean reward over the last 50 episodes
          double sum = 0.0;
          int count = 0;
          for (auto it = records.rbegin(); it != records.rend(); ++it) {
            if (it->seed != seed || it->metric != "episode_reward") continue;
            sum += it->value;
            if (++count == 50) break;
          }
          if (count > 0) final_vals["mean_reward_last_50"] = sum / count;
        }
      } else {
        for (const auto& name : metrics.names) final_vals[name] = nullptr;
      }
      entry["final"] = final_vals;
      entry["checkpoint"] = ckpt;
      arm_entries[ai].push_back(entry);
    }
  }

  // summary + per-arm best seed (best-of-k is the fairest light for pd)
  const std::string primary =
      cfg.metrics.empty() ? std::string() : cfg.metrics.front();
  json arms_json = json::array();
  for (size_t ai = 0; ai < cfg.arms.size(); ++ai) {
    const EstimatorArm& arm = cfg.arms[ai];
    json a{{"label", arm.label}, {"estimator", estimator_name(arm.kind)}};
    a["seeds"] = arm_entries[ai];
    json best;  // null when every seed diverged or no metric applies
    double best_val = 0.0;
    const std::string key =
        primary == "episode_reward" ? "mean_reward_last_50" : primary;
    const bool lower_better = primary != "episode_reward";
    for (const auto& entry : arm_entries[ai]) {
      if (entry.at("diverged").get<bool>()) continue;
      if (!entry.at("final").contains(key) ||
          entry.at("final").at(key).is_null())
        continue;
      const double v = entry.at("final").at(key).get<double>();
      if (best.is_null() || (lower_better ? v < best_val : v > best_val)) {
        best = entry.at("seed");
        best_val = v;
      }
    }
    a["best_seed"] = best;
    if (!best.is_null()) a["best_final"] = best_val;
    arms_json.push_back(a);
  }
  out.summary = json{{"name", cfg.name},
                     {"primary_metric", primary},
                     {"metric_stride", cfg.metric_stride},
                     {"seeds", cfg.seeds},
                     {"arms", arms_json},
                     {"timing_file", "timing.json"}};

  for (size_t ai = 0; ai < cfg.arms.size(); ++ai) {
    write_curve_csv(cfg.out_dir + "/curve_" + cfg.arms[ai].label + ".csv",
                    out.curves[ai].second);
    write_curve_json(cfg.out_dir + "/curve_" + cfg.arms[ai].label + ".json",
                     out.curves[ai].second);
  }
  write_json_file(cfg.out_dir + "/summary.json", out.summary);
  // wall-clock lives apart from everything else: all other files in this
  // directory are bit-identical across reruns of the same config
  write_json_file(cfg.out_dir + "/timing.json", timing);
  return out;
}

// ---------------------------------------------------------------- oracle

json run_oracle(const ExperimentConfig& cfg) {
  const std::string kind = cfg.oracle.value("kind", std::string("none"));
  fs::create_directories(cfg.out_dir);
  if (kind == "exact") {
    auto env = make_env(cfg.env);
    const auto* tab = dynamic_cast<const TabularRingEnv*>(env.get());
    if (tab == nullptr) fail("exact oracle needs a tabular_ring env");
    std::unique_ptr<Policy> target;
    if (cfg.mode == Mode::kEval)
      target = make_policy(cfg.target_policy, env->num_actions());

    const ExactModel analytic = exact_model_analytic(*tab);
    const int reps = cfg.oracle.value("mc_reps", 50000);
    Rng rng(Rng::mix(cfg.oracle.value("seed", uint64_t{0}), kStreamOracle));
    const ExactModel mc = estimate_model_mc(*tab, reps, rng);
    const double diff = model_max_abs_diff(analytic, mc);

    const Eigen::MatrixXd Q = exact_q_for(cfg, *tab, target.get());
    json qj = json::array();
    for (int s = 0; s < Q.rows(); ++s) {
      json row = json::array();
      for (int a = 0; a < Q.cols(); ++a) row.push_back(Q(s, a));
      qj.push_back(row);
    }
    json result{{"kind", "exact"},
                {"mc_reps", reps},
                {"model_max_abs_diff", diff},
                {"q", qj}};
    write_json_file(cfg.out_dir + "/oracle.json", result);
    return result;
  }
  if (kind == "checkpoint") {
    const std::string path = cfg.oracle.value("path", std::string());
    if (path.empty()) fail("checkpoint oracle needs a path");
    if (!cfg.oracle.contains("run"))
      fail("checkpoint oracle generation needs a nested run spec");
    const json& run = cfg.oracle.at("run");
    check_keys(run, "oracle.run",
               {"T", "updates", "seed", "optimizer", "metric_stride"});
    ExperimentConfig ref = cfg;
    ref.arms.clear();
    EstimatorArm us;
    us.kind = EstimatorKind::kUs;
    us.label = "us_reference";
    us.optimizer = run.contains("optimizer")
                       ? parse_optimizer(run.at("optimizer"))
                       : cfg.optimizer;
    ref.arms.push_back(us);
    ref.seeds = {run.value("seed", uint64_t{0})};
    ref.T = run.at("T").get<uint64_t>();
    ref.paper_T = 0;
    ref.updates = run.value("updates", uint64_t{0});
    ref.metric_stride = run.value("metric_stride", cfg.metric_stride);
    ref.metrics = {};  // nothing to score against yet
    ref.oracle = json{{"kind", "none"}};
    ref.out_dir = cfg.out_dir + "/reference";
    run_experiment(ref);
    const std::string src = ref.out_dir + "/checkpoint_us_reference_seed" +
                            std::to_string(ref.seeds[0]) + ".bin";
    fs::copy_file(src, path, fs::copy_options::overwrite_existing);
    json result{{"kind", "checkpoint"},
                {"path", path},
                {"reference_dir", ref.out_dir}};
    write_json_file(cfg.out_dir + "/oracle.json", result);
    return result;
  }
  json result{{"kind", kind}};
  write_json_file(cfg.out_dir + "/oracle.json", result);
  return result;
}

// ----------------------------------------------------------------- probe

namespace {

std::unique_ptr<QApprox> make_theta(const ExperimentConfig& cfg,
                                    const Env& env, const Policy* target,
                                    const json& spec) {
  const json approx_spec = resolve_approx(cfg.approx, env);
  const std::string kind =
      spec.is_null() ? "zeros" : spec.value("kind", std::string("zeros"));
  if (kind == "zeros") return make_approx(approx_spec);
  if (kind == "checkpoint")
    return load_checkpoint(spec.at("path").get<std::string>());
  if (kind == "random") {
    auto q = make_approx(approx_spec);
    Rng rng(Rng::mix(spec.value("seed", uint64_t{0}), kStreamProbe));
    if (auto* mlp = dynamic_cast<MlpQ*>(q.get())) {
      mlp->init_uniform(rng);
    } else {
      const double scale = spec.value("scale", 1.0);
      for (Eigen::Index i = 0; i < q->params().size(); ++i)
        q->params()[i] = scale * rng.gaussian();
    }
    return q;
  }
  if (kind == "harmonic") {
    // theta(s, b) = offset_b + amp_b * sin(s + phase_b): a smooth table
    auto q = make_approx(approx_spec);
    auto* tab = dynamic_cast<TabularQ*>(q.get());
    if (tab == nullptr) fail("harmonic theta needs a tabular approximator");
    const auto* ring = dynamic_cast<const TabularRingEnv*>(&env);
    const auto amps = spec.value("amps", std::vector<double>{1.0, 1.0});
    const auto phases = spec.value("phases", std::vector<double>{0.0, 0.0});
    const auto offsets = spec.value("offsets", std::vector<double>{0.0, 0.0});
    for (int s = 0; s < tab->n_states(); ++s)
      for (int a = 0; a < tab->num_actions(); ++a)
        tab->value(s, a) =
            offsets[a] + amps[a] * std::sin(ring->grid_point(s) + phases[a]);
    return q;
  }
  if (kind == "qstar" || kind == "blend") {
    const auto* tab_env = dynamic_cast<const TabularRingEnv*>(&env);
    if (tab_env == nullptr) fail("qstar theta needs a tabular_ring env");
    auto q = make_approx(approx_spec);
    auto* tab = dynamic_cast<TabularQ*>(q.get());
    if (tab == nullptr) fail("qstar theta needs a tabular approximator");
    const Eigen::MatrixXd Q = exact_q_for(cfg, *tab_env, target);
    // blend: Q* pulled toward zero-init by `weight` (0 = exactly Q*)
    const double w = kind == "blend" ? spec.value("weight", 0.02) : 0.0;
    for (int s = 0; s < Q.rows(); ++s)
      for (int a = 0; a < Q.cols(); ++a)
        tab->value(s, a) = (1.0 - w) * Q(s, a);
    return q;
  }
  fail("unknown theta kind '" + kind + "'");
}

}  // namespace

json run_probe(const ExperimentConfig& cfg) {
  if (cfg.probe.is_null()) fail("config has no probe section");
  check_keys(cfg.probe, "probe",
             {"kind", "theta", "samples", "burnin", "seed"});
  const std::string kind = cfg.probe.value("kind", std::string("mc"));
  auto env = make_env(cfg.env);
  std::unique_ptr<Policy> target;
  if (cfg.mode == Mode::kEval)
    target = make_policy(cfg.target_policy, env->num_actions());
  json bspec = cfg.behavior_policy;
  if (bspec.is_null())
    bspec = cfg.mode == Mode::kEval ? cfg.target_policy
                                    : json{{"kind", "uniform"}};
  auto behavior = make_policy(bspec, env->num_actions());
  auto q = make_theta(cfg, *env, target.get(), cfg.probe.value("theta", json()));

  json result{{"kind", kind}};
  if (kind == "mc") {
    const uint64_t samples = cfg.probe.value("samples", uint64_t{200000});
    const uint64_t burnin = cfg.probe.value("burnin", uint64_t{1000});
    const uint64_t seed = cfg.probe.value("seed", uint64_t{0});
    const BiasProbe p =
        probe_stationary_bias(*env, *q, target.get(), *behavior, cfg.mode,
                              cfg.gamma, samples, burnin, seed);
    result["samples"] = p.samples;
    result["us_mean_norm"] = p.mean_us.norm();
    result["sc_bias_norm"] = p.sc_bias_norm();
    result["sc_bias_err"] = p.sc_bias_err();
    result["bff_bias_norm"] = p.bff_bias_norm();
    result["bff_bias_err"] = p.bff_bias_err();
  } else if (kind == "enumerate") {
    const auto* tab_env = dynamic_cast<const TabularRingEnv*>(env.get());
    if (tab_env == nullptr) fail("enumerate probe needs a tabular_ring env");
    const auto* tab = dynamic_cast<const TabularQ*>(q.get());
    if (tab == nullptr) fail("enumerate probe needs a tabular approximator");
    const ExactModel model = exact_model_analytic(*tab_env);
    const Eigen::MatrixXd Mu = policy_matrix(*behavior, *tab_env);
    const Eigen::MatrixXd rho = stationary_sa(model, Mu);
    const Eigen::VectorXd us =
        exact_mean_gradient(EstimatorKind::kUs, model, *tab_env, *tab,
                            target.get(), Mu, rho, cfg.mode, cfg.gamma);
    const Eigen::VectorXd us_factored = exact_mean_gradient_factored(
        model, *tab_env, *tab, target.get(), rho, cfg.mode, cfg.gamma);
    const Eigen::VectorXd sc =
        exact_mean_gradient(EstimatorKind::kSc, model, *tab_env, *tab,
                            target.get(), Mu, rho, cfg.mode, cfg.gamma);
    const Eigen::VectorXd bff =
        exact_mean_gradient(EstimatorKind::kBff, model, *tab_env, *tab,
                            target.get(), Mu, rho, cfg.mode, cfg.gamma);
    result["us_mean_norm"] = us.norm();
    result["factored_gap"] = (us - us_factored).norm();
    result["sc_bias_norm"] = (sc - us).norm();
    result["bff_bias_norm"] = (bff - us).norm();
  } else {
    fail("probe kind must be mc or enumerate");
  }
  fs::create_directories(cfg.out_dir);
  write_json_file(cfg.out_dir + "/probe.json", result);
  return result;
}

// --------------------------------------------------------------- compare

namespace {

struct ArmCurves {
  std::string dir;
  std::string label;
  // per seed, in summary order, non-diverged only
  std::vector<uint64_t> seeds;
  std::vector<std::vector<CurveRecord>> per_seed;
};

double final_value(const std::vector<CurveRecord>& recs) {
  return recs.back().value;
}

double auc(const std::vector<CurveRecord>& recs) {
  double area = 0.0;
  for (size_t i = 1; i < recs.size(); ++i)
    area += 0.5 * (recs[i].value + recs[i - 1].value) *
            static_cast<double>(recs[i].update - recs[i - 1].update);
  return area;
}

}  // namespace

json compare_runs(const std::vector<std::string>& dirs) {
  if (dirs.empty()) fail("compare needs at least one run directory");
  std::vector<ArmCurves> arms;
  std::string metric;
  for (const auto& dir : dirs) {
    std::ifstream in(dir + "/summary.json");
    if (!in) fail("missing summary.json in " + dir);
    const json summary = json::parse(in);
    const std::string m = summary.at("primary_metric").get<std::string>();
    if (metric.empty()) metric = m;
    else if (metric != m)
      fail("runs use different metrics: " + metric + " vs " + m);
    for (const auto& arm : summary.at("arms")) {
      ArmCurves ac;
      ac.dir = dir;
      ac.label = arm.at("label").get<std::string>();
      std::set<uint64_t> diverged;
      for (const auto& e : arm.at("seeds"))
        if (e.at("diverged").get<bool>())
          diverged.insert(e.at("seed").get<uint64_t>());
      const auto records =
          read_curve_csv(dir + "/curve_" + ac.label + ".csv");
      for (const auto& r : records) {
        if (r.metric != metric || diverged.count(r.seed)) continue;
        if (ac.seeds.empty() || ac.seeds.back() != r.seed) {
          ac.seeds.push_back(r.seed);
          ac.per_seed.emplace_back();
        }
        ac.per_seed.back().push_back(r);
      }
      if (!ac.seeds.empty()) arms.push_back(std::move(ac));
    }
  }
  if (arms.empty()) fail("no non-diverged curves to compare");

  // all surviving curves must sample the same update indices
  const auto& cadence = arms.front().per_seed.front();
  for (const auto& ac : arms)
    for (const auto& curve : ac.per_seed) {
      if (curve.size() != cadence.size())
        fail("mismatched cadences between curves");
      for (size_t i = 0; i < curve.size(); ++i)
        if (curve[i].update != cadence[i].update)
          fail("mismatched cadences between curves");
    }

  json arms_json = json::array();
  std::vector<std::vector<double>> finals(arms.size());
  for (size_t i = 0; i < arms.size(); ++i) {
    std::vector<double> f, a;
    for (const auto& curve : arms[i].per_seed) {
      f.push_back(final_value(curve));
      a.push_back(auc(curve));
    }
    finals[i] = f;
    json per_seed = json::object();
    for (size_t s = 0; s < arms[i].seeds.size(); ++s)
      per_seed[std::to_string(arms[i].seeds[s])] = f[s];
    arms_json.push_back(json{{"dir", arms[i].dir},
                             {"label", arms[i].label},
                             {"seeds", arms[i].seeds},
                             {"median_final", median(f)},
                             {"best_final", *std::min_element(f.begin(),
                                                              f.end())},
                             {"median_auc", median(a)},
                             {"final_per_seed", per_seed}});
  }

  // seed-bootstrap orderings: how often does a's median final come out below
  // b's when seeds are resampled with replacement
  json pairs = json::array();
  Rng rng(12345);
  constexpr int kBoot = 1000;
  for (size_t i = 0; i < arms.size(); ++i) {
    for (size_t k = i + 1; k < arms.size(); ++k) {
      int below = 0;
      for (int b = 0; b < kBoot; ++b) {
        auto resample = [&](const std::vector<double>& v) {
          std::vector<double> r(v.size());
          for (auto& x : r) x = v[rng.uniform_int(static_cast<int>(v.size()))];
          return median(std::move(r));
        };
        if (resample(finals[i]) < resample(finals[k])) ++below;
      }
      pairs.push_back(json{
          {"a", arms[i].label},
          {"b", arms[k].label},
          {"median_a", median(finals[i])},
          {"median_b", median(finals[k])},
          {"a_below_b", median(finals[i]) < median(finals[k])},
          {"frac_a_below_b", static_cast<double>(below) / kBoot}});
    }
  }

  return json{{"metric", metric}, {"arms", arms_json}, {"pairs", pairs}};
}

}  // namespace brm

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "brm/harness.hpp"

namespace {

struct Overrides {
  std::vector<uint64_t> seeds;
  uint64_t updates = 0;
  bool has_updates = false;
  bool paper_scale = false;
  std::string out;
};

brm::ExperimentConfig load_with_overrides(const std::string& path,
                                          const Overrides& ov) {
  brm::ExperimentConfig cfg = brm::load_config(path);
  if (!ov.seeds.empty()) cfg.seeds = ov.seeds;
  if (ov.has_updates) cfg.updates = ov.updates;
  if (ov.paper_scale) cfg.paper_scale = true;
  if (!ov.out.empty()) cfg.out_dir = ov.out;
  return cfg;
}

void add_overrides(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--seed", ov.seeds,
                  "replace the config's seed list (repeatable)");
  cmd->add_option("--updates", ov.updates, "override the update count")
      ->each([&ov](const std::string&) { ov.has_updates = true; });
  cmd->add_flag("--paper-scale", ov.paper_scale,
                "run at full published scale instead of the reduced default");
  cmd->add_option("--out", ov.out, "override the output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bellman-residual estimator experiments"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;

  CLI::App* run = app.add_subcommand("run", "train every estimator arm of a config");
  run->add_option("config", config_path, "experiment config (.toml or .json)")
      ->required();
  add_overrides(run, ov);

  CLI::App* oracle = app.add_subcommand(
      "oracle", "produce the config's ground-truth artifacts");
  oracle->add_option("config", config_path, "experiment config (.toml or .json)")
      ->required();
  add_overrides(oracle, ov);

  CLI::App* probe = app.add_subcommand(
      "probe", "measure per-step mean-gradient bias at a fixed parameter point");
  probe->add_option("config", config_path, "experiment config (.toml or .json)")
      ->required();
  add_overrides(probe, ov);

  std::vector<std::string> dirs;
  std::string compare_out;
  CLI::App* compare =
      app.add_subcommand("compare", "summarize and order finished runs");
  compare->add_option("dirs", dirs, "run output directories")->required();
  compare->add_option("--out", compare_out, "write the comparison to a file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto cfg = load_with_overrides(config_path, ov);
      const auto out = brm::run_experiment(cfg);
      std::printf("wrote %s\n", cfg.out_dir.c_str());
      for (const auto& arm : out.summary.at("arms"))
        std::printf("  %s: best_seed=%s\n",
                    arm.at("label").get<std::string>().c_str(),
                    arm.at("best_seed").dump().c_str());
    } else if (oracle->parsed()) {
      const auto cfg = load_with_overrides(config_path, ov);
      const auto result = brm::run_oracle(cfg);
      std::printf("%s\n", result.dump(2).c_str());
    } else if (probe->parsed()) {
      const auto cfg = load_with_overrides(config_path, ov);
      const auto result = brm::run_probe(cfg);
      std::printf("%s\n", result.dump(2).c_str());
    } else if (compare->parsed()) {
      const auto result = brm::compare_runs(dirs);
      const std::string text = result.dump(2);
      if (!compare_out.empty()) {
        std::FILE* f = std::fopen(compare_out.c_str(), "wb");
        if (f == nullptr) throw std::runtime_error("cannot write " + compare_out);
        std::fwrite(text.data(), 1, text.size(), f);
        std::fputc('\n', f);
        std::fclose(f);
      }
      std::printf("%s\n", text.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

// enflo_lab --config run.json [--seed N] [--out DIR] [--threads N]
//
// Exit status: 0 clean, 1 a proven inequality or identity check failed,
// 2 bad config or flags, 3 the run itself failed (nothing is written).

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "enflo/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Numerical lab for scaled Enflo type on the discrete torus"};
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  int threads = 1;
  app.add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  app.add_option("--threads", threads, "worker threads; never changes results")->check(CLI::Range(1, 1024));
  CLI11_PARSE(app, argc, argv);

  enflo::ExperimentConfig cfg;
  try {
    std::ifstream in(config_path);
    const auto j = nlohmann::json::parse(in);
    cfg = enflo::parse_config(j);
  } catch (const nlohmann::json::parse_error& e) {
    std::cerr << "error: " << config_path << " is not valid JSON: " << e.what() << "\n";
    return 2;
  } catch (const enflo::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  if (seed) cfg.seed = *seed;
  if (out_dir) cfg.output = *out_dir;

  enflo::RunResult result;
  try {
    result = enflo::run(cfg, enflo::WorkerPool(threads));
    enflo::write_outputs(cfg.output, result);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  for (const auto& v : result.violations) std::cerr << "violation: " << v << "\n";
  std::cout << enflo::to_string(cfg.command) << ": wrote " << result.files.size() << " files to " << cfg.output << " ("
            << result.violations.size() << " violations)\n";
  return result.exit_code;
}

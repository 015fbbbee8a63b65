#include <CLI11.hpp>
#include <iostream>

#include "remembra/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"remembra: sequential-learning lab with a meta-learned gated update rule"};

  std::string config_path, experiment, methods, seeds, out_dir;
  bool dry_run = false, log_gates = false;
  app.add_option("--config", config_path, "flat key-value config file");
  app.add_option("--experiment", experiment,
                 "experiment id: synthetic | seq-transfer | new-classes | new-ckpt | three-task");
  app.add_option("--methods", methods, "comma list: teacher,meta,sgd,sgd01,ewc,lwf");
  app.add_option("--seeds", seeds, "seed count (n -> 1..n) or explicit comma list");
  app.add_option("--out", out_dir, "output directory");
  app.add_flag("--dry-run", dry_run, "print the resolved config and exit");
  app.add_flag("--log-gates", log_gates, "record the gate histogram during meta-testing");

  CLI11_PARSE(app, argc, argv);

  try {
    std::map<std::string, std::string> file_kv;
    if (!config_path.empty()) file_kv = remembra::config::parse_kv_file(config_path);
    std::map<std::string, std::string> cli_kv;
    if (!experiment.empty()) cli_kv["experiment"] = experiment;
    if (!methods.empty()) cli_kv["methods"] = methods;
    if (!seeds.empty()) cli_kv["seeds"] = seeds;
    if (!out_dir.empty()) cli_kv["out"] = out_dir;
    if (dry_run) cli_kv["dry_run"] = "true";
    if (log_gates) cli_kv["log_gates"] = "true";

    auto cfg = remembra::config::resolve(file_kv, cli_kv);
    return remembra::runner::run(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

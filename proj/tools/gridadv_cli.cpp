#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridadv/error.hpp"
#include "gridadv/harness.hpp"

using namespace gridadv;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration");
  cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
  cmd->add_option("--out", c.out, "run directory")->required();
}

RunConfig resolve(const Common& c) {
  RunConfig config = c.config.empty() ? default_run_config() : load_run_config(c.config);
  if (c.seed) config.seed = *c.seed;
  config.out_dir = c.out;
  config.validate();
  return config;
}

void print_metrics(const BaselineEvaluation& ev) {
  const auto& m = ev.metrics;
  std::printf("%-20s clean_acc %.4f attacked_acc %.4f evasion %.4f drop %.4f max|n| %.5f\n",
              to_string(ev.baseline).c_str(), m.clean_accuracy, m.attacked_accuracy, m.evasion_success_rate,
              m.mean_posterior_drop, m.max_abs_perturbation);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gabor-noise evasion attack on a grid contingency detector"};
  app.require_subcommand(1);

  Common sim, det, atk, eval;
  std::string report_dir;
  std::vector<std::string> baselines;

  add_common(app.add_subcommand("simulate", "generate measurement traces"), sim);
  add_common(app.add_subcommand("train-detector", "train and score the contingency detector"), det);
  add_common(app.add_subcommand("train-attacker", "train the DDPG attack agent"), atk);
  auto* eval_cmd = app.add_subcommand("evaluate", "score baselines against the detector");
  add_common(eval_cmd, eval);
  eval_cmd->add_option("--baselines", baselines, "none, random_hyperparams, trained_agent")->delimiter(',');
  auto* report_cmd = app.add_subcommand("report", "summarize a run directory");
  report_cmd->add_option("--out", report_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("simulate")) {
      const auto r = cmd_simulate(resolve(sim));
      for (const auto& f : r.trace_files) std::printf("%s\n", f.string().c_str());
    } else if (app.got_subcommand("train-detector")) {
      const auto r = cmd_train_detector(resolve(det));
      std::printf("train accuracy %.4f\nheld-out accuracy %.4f\nfalse positive rate %.4f\n", r.train_accuracy,
                  r.report.frame_accuracy, r.report.false_positive_rate);
      if (r.report.detection_delay) {
        std::printf("detection delay %.3f s\n", *r.report.detection_delay);
      } else {
        std::printf("detection delay: fault not detected in every trace\n");
      }
    } else if (app.got_subcommand("train-attacker")) {
      const auto r = cmd_train_attacker(resolve(atk));
      if (!r.curve.empty()) {
        std::printf("episodes %zu final return %.4f\n", r.curve.size(), r.curve.back().episode_return);
      }
    } else if (app.got_subcommand("evaluate")) {
      const RunConfig config = resolve(eval);
      std::vector<Baseline> chosen = config.baselines;
      if (!baselines.empty()) {
        chosen.clear();
        for (const auto& b : baselines) chosen.push_back(baseline_from_string(b));
      }
      const auto r = cmd_evaluate(config, chosen);
      for (const auto& ev : r.evaluations) print_metrics(ev);
    } else if (app.got_subcommand("report")) {
      std::cout << cmd_report(report_dir);
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "invalid configuration (%s): %s\n", e.field().c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

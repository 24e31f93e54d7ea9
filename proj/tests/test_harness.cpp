#include <doctest.h>

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "gridadv/error.hpp"
#include "gridadv/harness.hpp"
#include "support.hpp"

using namespace gridadv;

namespace {

RunConfig tiny_config(const std::filesystem::path& out) {
  RunConfig c = default_run_config();
  c.detector_traces = 6;
  c.detector.epochs = 15;
  c.agent_episodes = 4;
  c.agent.warmup_steps = 50;
  c.agent.batch_size = 16;
  c.eval_episodes = 2;
  c.out_dir = out;
  return c;
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("config json round trip and hashing") {
  const RunConfig c = default_run_config();
  const auto doc = to_json(c);
  const auto back = run_config_from_json(doc);
  CHECK(to_json(back) == doc);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c).size() == 16);

  auto changed = c;
  changed.seed = 8;
  CHECK(config_hash(changed) != config_hash(c));
  auto moved = c;
  moved.out_dir = "elsewhere";
  CHECK(config_hash(moved) == config_hash(c));
}

TEST_CASE("shipped example config holds every default") {
  const auto path = std::filesystem::path(GRIDADV_SOURCE_DIR) / "configs" / "default.json";
  const auto c = load_run_config(path);
  auto expected = default_run_config();
  expected.case_file = c.case_file;
  CHECK(to_json(c).dump() == to_json(expected).dump());
  std::ifstream in(path);
  const auto doc = nlohmann::json::parse(in);
  // every key of the canonical form is spelled out in the shipped file
  std::function<void(const nlohmann::json&, const nlohmann::json&, const std::string&)> walk =
      [&](const nlohmann::json& want, const nlohmann::json& have, const std::string& where) {
        for (const auto& [k, v] : want.items()) {
          if (k == "case") continue;  // the shipped config names the case file instead
          INFO(where << "." << k);
          REQUIRE(have.contains(k));
          if (v.is_object()) walk(v, have.at(k), where + "." + k);
        }
      };
  walk(to_json(expected), doc, "");
}

TEST_CASE("config parsing rejects bad input") {
  SUBCASE("unknown key names the path") {
    try {
      run_config_from_json(nlohmann::json::parse(R"({"detector": {"windw": 5}})"));
      FAIL("accepted an unknown key");
    } catch (const ValidationError& e) {
      CHECK(e.field() == "detector.windw");
    }
  }
  SUBCASE("out-of-range fault bus") {
    try {
      run_config_from_json(nlohmann::json::parse(R"({"scenario": {"fault_bus": 12}})"));
      FAIL("accepted fault_bus 12");
    } catch (const ValidationError& e) {
      CHECK(e.field() == "fault_bus");
    }
  }
  SUBCASE("no accessible bus") {
    nlohmann::json doc = {{"attack", {{"access_mask", std::vector<bool>(9, false)}}}};
    CHECK_THROWS_AS(run_config_from_json(doc), ValidationError);
  }
  SUBCASE("wrong types") {
    CHECK_THROWS_AS(run_config_from_json(nlohmann::json::parse(R"({"seed": "seven"})")), ParseError);
  }
  SUBCASE("unknown baseline") { CHECK_THROWS_AS(baseline_from_string("clever"), ValidationError); }
  SUBCASE("case file resolves relative to the config") {
    testing::TempDir dir("cfg");
    std::ofstream(dir.path() / "tiny.case") << "bus_count = 9\nnominal_voltage = 1 1 1 1 1 1 1 1 1\n"
                                               "fault_coupling = 0 0 0 0 1 0 0 0 0\n";
    std::ofstream(dir.path() / "run.json") << R"({"case_file": "tiny.case", "seed": 3})";
    const auto c = load_run_config(dir.path() / "run.json");
    CHECK(c.scenario.bus_case.nominal_voltage == std::vector<double>(9, 1.0));
    CHECK(c.seed == 3);
  }
}

TEST_CASE("derived seeds") {
  const auto c = default_run_config();
  const auto d = with_derived_seeds(c);
  std::set<std::uint64_t> all = {d.detector.seed, d.agent.seed, d.attack.field_seed};
  CHECK(all.size() == 3);
  CHECK(d.agent.gamma == c.attack.reward.lambda);
  const auto seeds = evaluation_seeds(c);
  CHECK(seeds.size() == c.eval_episodes);
  CHECK(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == seeds.size());
  auto explicit_seeds = c;
  explicit_seeds.eval_seeds = {4, 5};
  CHECK(evaluation_seeds(explicit_seeds) == std::vector<std::uint64_t>{4, 5});
}

TEST_CASE("baseline evaluation") {
  const auto& detector = testing::small_detector();
  auto c = default_run_config();
  const std::vector<std::uint64_t> seeds = {11, 12, 13};

  const auto none = evaluate_baseline(c, detector, Baseline::None, seeds);
  CHECK(none.metrics.attacked_accuracy == none.metrics.clean_accuracy);
  CHECK(none.metrics.mean_posterior_drop == 0.0);
  CHECK(none.metrics.max_abs_perturbation == 0.0);
  CHECK(none.metrics.detection_delay_attacked == none.metrics.detection_delay_clean);
  for (const auto& ep : none.episodes) CHECK(ep.compromised == ep.clean.frames);

  const auto rnd = evaluate_baseline(c, detector, Baseline::RandomHyperparams, seeds);
  CHECK(rnd.metrics.max_abs_perturbation <= 0.01);
  CHECK(rnd.metrics.max_abs_perturbation > 0.0);
  for (double v : {rnd.metrics.clean_accuracy, rnd.metrics.attacked_accuracy, rnd.metrics.evasion_success_rate}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(rnd.episodes.size() == 3);
  CHECK(rnd.episodes[0].seed == 11);
  // paired: the clean side is shared across baselines
  CHECK(rnd.episodes[0].clean.frames == none.episodes[0].clean.frames);
  const auto again = evaluate_baseline(c, detector, Baseline::RandomHyperparams, seeds);
  CHECK(again.metrics.mean_posterior_drop == rnd.metrics.mean_posterior_drop);

  CHECK_THROWS_AS(evaluate_baseline(c, detector, Baseline::TrainedAgent, seeds), ValidationError);
  const auto json = metrics_to_json(rnd.metrics);
  CHECK(json.size() == 7);
}

TEST_CASE("pipeline stages") {
  testing::TempDir a("run_a"), b("run_b");
  const auto ca = tiny_config(a.path()), cb = tiny_config(b.path());

  SUBCASE("simulate is byte-reproducible and nine buses wide") {
    const auto ra = cmd_simulate(ca), rb = cmd_simulate(cb);
    REQUIRE(ra.trace_files.size() == 1);
    CHECK(testing::slurp(ra.trace_files[0]) == testing::slurp(rb.trace_files[0]));
    std::ifstream in(ra.trace_files[0]);
    const auto trace = read_trace_csv(in);
    CHECK(trace.bus_count() == 9);
    CHECK(trace.size() == 100);
    const auto manifest = nlohmann::json::parse(testing::slurp(a.path() / "manifest_simulate.json"));
    CHECK(manifest.at("config_hash") == config_hash(ca));
    CHECK(manifest.at("seed") == ca.seed);
  }

  SUBCASE("full tiny pipeline") {
    const auto det = cmd_train_detector(ca);
    CHECK(line_count(a.path() / "detector_posterior.csv") == 1 + 91);
    const auto det_b = cmd_train_detector(cb);
    CHECK(testing::slurp(a.path() / "detector_report.json") == testing::slurp(b.path() / "detector_report.json"));
    CHECK(det.report.frame_accuracy == det_b.report.frame_accuracy);

    const auto trained = cmd_train_attacker(ca);
    CHECK(trained.curve.size() == 4);
    CHECK(trained.curve.back().exploration_sigma == doctest::Approx(ca.agent.exploration_floor));
    {
      std::ifstream in(a.path() / "actions.csv");
      std::string line;
      std::getline(in, line);
      CHECK(line == "episode,step,sigma,F0,omega0");
      ActionBounds bounds = ca.attack.action_bounds;
      while (std::getline(in, line)) {
        std::istringstream row(line);
        std::string cell;
        std::vector<double> v;
        while (std::getline(row, cell, ',')) v.push_back(std::stod(cell));
        REQUIRE(v.size() == 5);
        CHECK(bounds.contains({v[2], v[3], v[4]}));
      }
    }

    const auto ev = cmd_evaluate(ca, ca.baselines);
    REQUIRE(ev.evaluations.size() == 3);
    CHECK(ev.warnings.empty());
    for (const char* f : {"metrics_none.json", "metrics_trained_agent.json", "clean_voltages.csv",
                          "clean_posterior.csv", "perturbation_trained_agent.csv",
                          "compromised_voltages_random_hyperparams.csv", "attacked_posterior_trained_agent.csv",
                          "episode_log_none.csv", "episodes_random_hyperparams.csv", "manifest_evaluate.json"}) {
      INFO(f);
      CHECK(std::filesystem::exists(a.path() / f));
    }
    const auto metrics = nlohmann::json::parse(testing::slurp(a.path() / "metrics_random_hyperparams.json"));
    for (const char* k : {"clean_accuracy", "attacked_accuracy", "evasion_success_rate", "mean_posterior_drop",
                          "max_abs_perturbation", "detection_delay_clean", "detection_delay_attacked",
                          "config_hash", "seed"}) {
      CHECK(metrics.contains(k));
    }
    CHECK(metrics.at("max_abs_perturbation").get<double>() <= 0.01);
    const auto none = nlohmann::json::parse(testing::slurp(a.path() / "metrics_none.json"));
    CHECK(none.at("attacked_accuracy") == none.at("clean_accuracy"));

    const auto summary = cmd_report(a.path());
    for (const char* k : {"clean_accuracy", "attacked_accuracy", "evasion_success_rate", "mean_posterior_drop",
                          "max_abs_perturbation", "detection_delay_clean", "detection_delay_attacked"}) {
      CHECK(summary.find(k) != std::string::npos);
    }
    CHECK(summary.find(config_hash(ca)) != std::string::npos);
    CHECK(testing::slurp(a.path() / "summary.md") == summary);

    // second run of the whole pipeline: identical metrics and summary
    cmd_train_attacker(cb);
    cmd_evaluate(cb, cb.baselines);
    CHECK(testing::slurp(a.path() / "metrics_trained_agent.json") ==
          testing::slurp(b.path() / "metrics_trained_agent.json"));
    CHECK(cmd_report(b.path()) == summary);
  }

  SUBCASE("zero training episodes leave a header-only curve") {
    cmd_train_detector(ca);
    auto zero = ca;
    zero.agent_episodes = 0;
    cmd_train_attacker(zero);
    CHECK(testing::slurp(a.path() / "learning_curve.csv") == "episode,return,discounted_return,critic_loss\n");
  }

  SUBCASE("evaluation warns about seeds shared with training") {
    cmd_train_detector(ca);
    auto clash = ca;
    clash.eval_seeds = {detector_trace_seed(ca, 0), 424242};
    const auto ev = cmd_evaluate(clash, {Baseline::None});
    REQUIRE(ev.warnings.size() == 1);
    CHECK(ev.warnings[0].find(std::to_string(detector_trace_seed(ca, 0))) != std::string::npos);
  }

  SUBCASE("missing artifacts are listed") {
    try {
      cmd_evaluate(ca, {Baseline::TrainedAgent});
      FAIL("evaluate ran without checkpoints");
    } catch (const IoError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("detector.json") != std::string::npos);
      CHECK(msg.find("actor.json") != std::string::npos);
    }
    CHECK_THROWS_AS(cmd_train_attacker(ca), IoError);
    try {
      cmd_report(a.path());
      FAIL("report ran on an empty directory");
    } catch (const IoError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("detector_report.json") != std::string::npos);
      CHECK(msg.find("manifest_evaluate.json") != std::string::npos);
    }
  }
}

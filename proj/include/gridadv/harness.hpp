#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridadv/attack_env.hpp"
#include "gridadv/ddpg_agent.hpp"
#include "gridadv/detector.hpp"
#include "gridadv/grid_traces.hpp"

namespace gridadv {

enum class Baseline { None, RandomHyperparams, TrainedAgent };
std::string to_string(Baseline b);
Baseline baseline_from_string(const std::string& s);

/// Agent settings used for the attack. The shift cancels the -2 * bus_count
/// floor of the reward at zero perturbation.
DdpgConfig attack_agent_defaults(std::size_t bus_count = 9);

struct RunConfig {
  std::uint64_t seed = 7;
  std::filesystem::path case_file;  // empty: built-in nine-bus case
  TraceScenario scenario = default_scenario();
  std::size_t simulate_traces = 1;

  DetectorConfig detector;
  std::size_t detector_traces = 50;
  double train_ratio = 0.8;

  AttackConfig attack;
  DdpgConfig agent = attack_agent_defaults();
  std::size_t agent_episodes = 1000;

  std::size_t eval_episodes = 10;
  std::vector<std::uint64_t> eval_seeds;  // empty: derived from the master seed
  std::vector<Baseline> baselines = {Baseline::None, Baseline::RandomHyperparams, Baseline::TrainedAgent};

  std::filesystem::path out_dir = "run";

  /// Run-level checks on top of the per-module ones, e.g. at least one accessible bus.
  void validate() const;
};

RunConfig default_run_config();
/// Relative `case_file` paths resolve against `base_dir`. Missing keys keep defaults;
/// unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

/// FNV-1a over the canonical JSON form, as 16 hex digits.
std::string config_hash(const RunConfig& config);

// Per-stream seeds derived from the master seed.
std::uint64_t detector_trace_seed(const RunConfig& config, std::size_t index);
std::uint64_t evaluation_seed(const RunConfig& config, std::size_t episode);
/// Explicit eval_seeds if given, otherwise eval_episodes derived seeds.
std::vector<std::uint64_t> evaluation_seeds(const RunConfig& config);
/// Agent and field seeds follow the master seed.
RunConfig with_derived_seeds(RunConfig config);

struct AttackMetrics {
  double clean_accuracy = 0.0;
  double attacked_accuracy = 0.0;
  double evasion_success_rate = 0.0;  // post-fault frames with attacked posterior below threshold
  double mean_posterior_drop = 0.0;   // post-fault mean of clean minus attacked posterior
  double max_abs_perturbation = 0.0;
  std::optional<double> detection_delay_clean;     // mean over episodes that detected
  std::optional<double> detection_delay_attacked;
};

struct EpisodeRecord {
  std::uint64_t seed = 0;
  AttackMetrics metrics;
  MeasurementTrace clean;
  std::vector<Frame> compromised;
  std::vector<std::vector<double>> perturbation;  // per frame, zero where not attacked
  TraceDetection clean_detection;
  TraceDetection attacked_detection;
  std::vector<EpisodeLogRow> log;
  std::vector<GaborAction> actions;
};

struct BaselineEvaluation {
  Baseline baseline = Baseline::None;
  AttackMetrics metrics;  // pooled over all frames of all episodes
  std::vector<EpisodeRecord> episodes;
};

/// Runs one episode per seed. `agent` is required for TrainedAgent. For None the
/// access mask is cleared, so the compromised stream equals the clean one.
BaselineEvaluation evaluate_baseline(const RunConfig& config, const DetectorModel& detector, Baseline baseline,
                                     const std::vector<std::uint64_t>& seeds, const DdpgAgent* agent = nullptr);

nlohmann::json metrics_to_json(const AttackMetrics& m);

// Pipeline stages. Each writes its outputs plus manifest_<stage>.json into
// config.out_dir and throws on any failure.
struct SimulateResult {
  std::vector<std::filesystem::path> trace_files;
};
SimulateResult cmd_simulate(const RunConfig& config);

struct TrainDetectorResult {
  DetectorModel model;
  DetectorReport report;        // held-out traces
  double train_accuracy = 0.0;
  std::vector<std::uint64_t> test_seeds;
};
TrainDetectorResult cmd_train_detector(const RunConfig& config);

TrainResult cmd_train_attacker(const RunConfig& config);

struct EvaluateResult {
  std::vector<BaselineEvaluation> evaluations;
  std::vector<std::string> warnings;
};
EvaluateResult cmd_evaluate(const RunConfig& config, const std::vector<Baseline>& baselines);

/// Markdown summary of a run directory; also written to summary.md.
std::string cmd_report(const std::filesystem::path& run_dir);

}  // namespace gridadv

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridadv/detector_oracle.hpp"
#include "gridadv/gabor_noise.hpp"
#include "gridadv/grid_traces.hpp"

namespace gridadv {

// (sigma, F0, omega0) chosen by the attacker for one frame.
using GaborAction = std::array<double, 3>;
inline constexpr std::size_t kActionDim = 3;

struct Interval {
  double low = 0.0;
  double high = 1.0;
  double mid() const { return 0.5 * (low + high); }
  double half_width() const { return 0.5 * (high - low); }
};

struct ActionBounds {
  // sigma, F0, omega0. An omega0 of exactly pi is folded to 0 (same kernel).
  std::array<Interval, kActionDim> dims = {Interval{0.05, 2.0}, Interval{0.05, 5.0}, Interval{0.0, 3.141592653589793}};

  void validate() const;
  bool contains(const GaborAction& a) const;
  GaborAction clamp(const GaborAction& a) const;
};

struct RewardParams {
  double k0 = 1.0;      // 1/pu
  double x_hat = 1.0;   // pu
  double lambda = 0.95;
  std::optional<std::size_t> horizon_frames;  // unset: run to the end of the trace
  bool penalty_abs = false;                   // exp(k0 |.|) instead of the signed form
  bool penalty_uses_compromised = false;      // x + n instead of ground-truth x

  void validate() const;
};

enum class FieldSeedPolicy { Fixed, PerEpisode, PerStep };
std::string to_string(FieldSeedPolicy p);
FieldSeedPolicy field_seed_policy_from_string(const std::string& s);

// First attacked frame. The attacker stages the physical fault, so by default
// tampering starts at fault onset; FullTrace attacks from the first full window.
enum class AttackStart { FaultOnset, FullTrace };
std::string to_string(AttackStart s);
AttackStart attack_start_from_string(const std::string& s);

struct AttackConfig {
  double epsilon = 0.01;          // pu
  std::vector<bool> access_mask;  // empty: every bus accessible
  ActionBounds action_bounds;
  RewardParams reward;
  double impulse_density = 64.0 / (1.2 * 2.302585092994046);  // 64 expected impulses over the query domain
  double sigma_floor = kDefaultSigmaFloor;
  FieldSeedPolicy field_seed_policy = FieldSeedPolicy::Fixed;
  std::uint64_t field_seed = 0;
  AttackStart attack_start = AttackStart::FaultOnset;

  /// Throws ValidationError. An all-false mask is accepted here (no-op attack);
  /// run configs additionally demand at least one accessible bus.
  void validate(std::size_t bus_count) const;
  bool accessible(std::size_t bus) const { return access_mask.empty() || access_mask[bus]; }
};

// s_k = [x_k, n_k, c_k].
struct AgentState {
  std::vector<double> x;  // |clean measurement| per bus (pu)
  std::vector<double> n;  // last applied perturbation per bus (pu)
  double c = 0.0;         // |label - attacked posterior|

  std::size_t dimension() const { return x.size() + n.size() + 1; }
  std::vector<double> flatten() const;
};

struct StepInfo {
  std::vector<double> applied_perturbation;
  double clean_posterior = 0.0;
  double attacked_posterior = 0.0;
  GaborAction action{};  // after clamping
  bool action_clamped = false;
  std::size_t frame = 0;
  double time = 0.0;
  int label = 0;
};

struct StepOutcome {
  AgentState next_state;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// Component-wise clamp into [-epsilon, epsilon].
std::vector<double> project_perturbation(std::span<const double> n, double epsilon);

/// |label - attacked_posterior|.
double misdirection(int label, double attacked_posterior);

/// c - sum_i exp(k0 (x_i - x_hat)) - sum_i exp(k0 n_i). Exponent arguments are
/// clamped to [-50, 50]; each clamp increments `*clamp_count` when given.
double reward(double c, std::span<const double> x, std::span<const double> n, const RewardParams& params,
              std::size_t* clamp_count = nullptr);

/// sum_k lambda^k rewards[k].
double discounted_return(std::span<const double> rewards, double lambda);

struct EpisodeLogRow {
  std::size_t frame = 0;
  double time = 0.0;
  double reward = 0.0;
  double c = 0.0;
  double clean_posterior = 0.0;
  double attacked_posterior = 0.0;
  double max_abs_n = 0.0;
};

// CSV `frame,time,reward,c,clean_posterior,attacked_posterior,max_abs_n`.
void write_episode_log(std::ostream& out, const std::vector<EpisodeLogRow>& rows);

// One episode = one generated trace, one action per frame from the attack start
// (never before the first full detector window) for at most horizon_frames
// frames. The detector is reached only through DetectorOracle.
class AttackEnv {
 public:
  AttackEnv(TraceScenario scenario, const DetectorOracle& oracle, AttackConfig config);

  /// New trace with `seed` (the scenario seed is replaced); n = 0 and c from the
  /// unperturbed first window.
  const AgentState& reset(std::uint64_t seed);
  StepOutcome step(const GaborAction& action);

  /// Agent-facing rescaling of the state: (x - 1) / 0.1, n / epsilon, c.
  std::vector<double> observe(const AgentState& state) const;
  std::vector<double> observe() const { return observe(state_); }

  std::size_t bus_count() const { return bus_count_; }
  std::size_t state_dimension() const { return 2 * bus_count_ + 1; }
  std::size_t horizon() const { return horizon_; }
  bool done() const { return done_; }
  const AgentState& state() const { return state_; }
  const AttackConfig& config() const { return config_; }
  const TraceScenario& scenario() const { return scenario_; }

  const MeasurementTrace& clean_trace() const { return trace_; }
  /// Clean frames with the applied perturbation added on accessible buses.
  const std::vector<Frame>& compromised_frames() const { return compromised_; }
  const std::vector<std::vector<double>>& applied_perturbations() const { return applied_; }
  const std::vector<EpisodeLogRow>& log() const { return log_; }
  std::size_t first_frame() const { return first_frame_; }
  std::size_t reward_clamp_count() const { return reward_clamps_; }
  std::size_t action_clamp_count() const { return action_clamps_; }

 private:
  double window_posterior(const std::vector<Frame>& frames, std::size_t end) const;
  std::uint64_t field_seed_for_step() const;

  TraceScenario scenario_;
  const DetectorOracle* oracle_;
  AttackConfig config_;
  std::size_t bus_count_;

  MeasurementTrace trace_;
  std::vector<Frame> compromised_;
  std::vector<std::vector<double>> applied_;
  std::vector<EpisodeLogRow> log_;
  std::optional<ImpulseLayout> layout_;
  std::uint64_t episode_seed_ = 0;
  AgentState state_;
  std::size_t first_frame_ = 0;
  std::size_t frame_ = 0;
  std::size_t steps_ = 0;
  std::size_t horizon_ = 0;
  bool done_ = true;
  std::size_t reward_clamps_ = 0;
  std::size_t action_clamps_ = 0;
};

}  // namespace gridadv

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "gridadv/attack_env.hpp"
#include "gridadv/neural_core.hpp"

namespace gridadv {

// Continuous-control environment as seen by the agent. Actions are in native
// units (inside the agent's bounds).
class Environment {
 public:
  struct Step {
    std::vector<double> observation;
    double reward = 0.0;
    bool done = false;
  };

  virtual ~Environment() = default;
  virtual std::vector<double> reset(std::uint64_t seed) = 0;
  virtual Step step(std::span<const double> action) = 0;
  virtual std::size_t observation_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
};

// Presents an AttackEnv through the rescaled observation.
class AttackEnvironment final : public Environment {
 public:
  explicit AttackEnvironment(AttackEnv env) : env_(std::move(env)) {}
  std::vector<double> reset(std::uint64_t seed) override;
  Step step(std::span<const double> action) override;
  std::size_t observation_dim() const override { return env_.state_dimension(); }
  std::size_t action_dim() const override { return kActionDim; }

  AttackEnv& env() { return env_; }
  const StepInfo& last_info() const { return last_info_; }

 private:
  AttackEnv env_;
  StepInfo last_info_;
};

struct DdpgConfig {
  std::vector<std::size_t> actor_hidden = {64, 64};
  std::vector<std::size_t> critic_hidden = {64, 64};
  double gamma = 0.95;
  double tau = 0.005;
  std::size_t buffer_capacity = 50000;
  std::size_t batch_size = 64;
  double actor_learning_rate = 1e-3;
  double critic_learning_rate = 1e-3;
  double exploration_start = 0.2;  // std of Gaussian noise on the [-1, 1] actor output
  double exploration_floor = 0.02;
  std::size_t warmup_steps = 0;    // uniform random actions before learning starts
  std::size_t updates_per_step = 1;
  // Critic targets use (r + reward_shift) * reward_scale. A shift that cancels an
  // action-independent constant in r keeps Q small relative to the action signal.
  double reward_shift = 0.0;
  double reward_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Transition {
  std::vector<double> state;
  std::vector<double> action;  // actor units, [-1, 1]
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
};

// Fixed-capacity FIFO store with uniform sampling.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::uint64_t seed);

  void store(Transition t);
  /// Indices drawn uniformly with replacement. Throws InsufficientDataError
  /// when fewer than `count` transitions are held (or the buffer is empty).
  std::vector<std::size_t> sample_indices(std::size_t count);
  std::vector<const Transition*> sample(std::size_t count);

  /// Oldest first.
  const Transition& at(std::size_t index) const;
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t head_ = 0;  // position of the oldest transition once full
  std::mt19937_64 rng_;
};

struct DdpgAgent {
  Mlp actor;   // tanh output, one unit per action dimension
  Mlp critic;  // identity output, input = state ++ action
  Mlp target_actor;
  Mlp target_critic;
  AdamState actor_opt;
  AdamState critic_opt;
  std::vector<Interval> action_bounds;
  double gamma = 0.95;
  double tau = 0.005;
  double exploration_sigma = 0.2;
  double reward_shift = 0.0;
  double reward_scale = 1.0;
  std::uint64_t seed = 0;
  std::size_t episodes_trained = 0;
  std::mt19937_64 noise_rng;

  std::size_t state_dim() const { return actor.input_size(); }
  std::size_t action_dim() const { return actor.output_size(); }
};

DdpgAgent make_agent(std::size_t state_dim, std::vector<Interval> action_bounds, const DdpgConfig& config);

/// Affine map of [-1, 1]^d onto the bounds, and its inverse.
std::vector<double> to_native(const DdpgAgent& agent, std::span<const double> unit_action);
std::vector<double> to_unit(const DdpgAgent& agent, std::span<const double> native_action);

/// Deterministic actor output in native units; with `explore`, Gaussian noise of
/// agent.exploration_sigma is added in actor units before clamping to bounds.
std::vector<double> act(DdpgAgent& agent, std::span<const double> state, bool explore);
std::vector<double> act(const DdpgAgent& agent, std::span<const double> state);

/// target <- tau * online + (1 - tau) * target, element-wise.
void soft_update(Mlp& target, const Mlp& online, double tau);

struct TrainStepResult {
  double critic_loss = 0.0;      // mean squared TD error before the update
  double actor_objective = 0.0;  // mean Q(s, actor(s)) before the actor update
};

/// Critic target (r + reward_shift) * reward_scale + gamma (1 - done) Q'(s', mu'(s')).
double critic_target(const DdpgAgent& agent, const Transition& t);

/// Gradient of half the mean squared TD error over `batch`; the loss itself
/// (mean squared error) goes to `*loss`.
MlpGradients critic_gradient(const DdpgAgent& agent, std::span<const Transition* const> batch,
                             double* loss = nullptr);
/// Gradient of -mean Q(s, actor(s)) with respect to the actor parameters.
MlpGradients actor_gradient(const DdpgAgent& agent, std::span<const Transition* const> batch,
                            double* objective = nullptr);

TrainStepResult train_step(DdpgAgent& agent, ReplayBuffer& buffer, std::size_t batch_size);

struct LearningCurveRow {
  std::size_t episode = 0;
  double episode_return = 0.0;
  double discounted_return = 0.0;
  double critic_loss = 0.0;
  double exploration_sigma = 0.0;
};

struct TrainResult {
  DdpgAgent agent;  // after the last episode
  std::optional<DdpgAgent> best_agent;
  double best_return = 0.0;
  std::vector<LearningCurveRow> curve;
  std::vector<std::uint64_t> episode_seeds;
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;
using ActionObserver = std::function<void(std::size_t episode, std::size_t step, std::span<const double> action)>;

/// Exploration sigma for `episode` of `episodes`: linear from start to floor,
/// reaching the floor on the last episode.
double exploration_schedule(const DdpgConfig& config, std::size_t episode, std::size_t episodes);

std::uint64_t training_episode_seed(std::uint64_t master_seed, std::size_t episode);

TrainResult train(DdpgAgent agent, const EnvFactory& factory, std::size_t episodes, const DdpgConfig& config,
                  const ActionObserver& observer = {});

// CSV `episode,return,discounted_return,critic_loss`.
void write_learning_curve(std::ostream& out, const std::vector<LearningCurveRow>& curve);

/// Writes <prefix>actor.json, <prefix>critic.json and <prefix>agent.json
/// (bounds, gamma, tau, seed, episode count, target networks) into `dir`.
void save_agent(const std::filesystem::path& dir, const DdpgAgent& agent, const std::string& prefix = "");
DdpgAgent load_agent(const std::filesystem::path& dir, const std::string& prefix = "");

}  // namespace gridadv

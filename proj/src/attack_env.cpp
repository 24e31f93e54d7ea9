#include "gridadv/attack_env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "gridadv/error.hpp"

namespace gridadv {

namespace {
constexpr double kExponentLimit = 50.0;
constexpr std::uint64_t kFieldStream = 0x6669656c64;
}  // namespace

void ActionBounds::validate() const {
  static const char* names[kActionDim] = {"action_bounds.sigma", "action_bounds.F0", "action_bounds.omega0"};
  for (std::size_t d = 0; d < kActionDim; ++d) {
    if (!(dims[d].low < dims[d].high)) throw ValidationError(names[d], "low must be below high");
  }
  if (dims[0].low < 0.0) throw ValidationError(names[0], "sigma must be non-negative");
  if (dims[1].low < 0.0) throw ValidationError(names[1], "F0 must be non-negative");
  if (dims[2].low < 0.0 || dims[2].high > std::numbers::pi) {
    throw ValidationError(names[2], "must lie within [0, pi)");
  }
}

bool ActionBounds::contains(const GaborAction& a) const {
  for (std::size_t d = 0; d < kActionDim; ++d) {
    if (!(a[d] >= dims[d].low && a[d] <= dims[d].high)) return false;
  }
  return true;
}

GaborAction ActionBounds::clamp(const GaborAction& a) const {
  GaborAction out{};
  for (std::size_t d = 0; d < kActionDim; ++d) {
    out[d] = std::isnan(a[d]) ? dims[d].mid() : std::clamp(a[d], dims[d].low, dims[d].high);
  }
  return out;
}

void RewardParams::validate() const {
  if (!std::isfinite(k0)) throw ValidationError("reward.k0", "must be finite");
  if (!(x_hat > 0.0)) throw ValidationError("reward.x_hat", "must be positive");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ValidationError("reward.lambda", "must lie in (0, 1]");
  if (horizon_frames && *horizon_frames == 0) throw ValidationError("reward.horizon_frames", "must be >= 1");
}

std::string to_string(FieldSeedPolicy p) {
  switch (p) {
    case FieldSeedPolicy::Fixed: return "fixed";
    case FieldSeedPolicy::PerEpisode: return "per-episode";
    case FieldSeedPolicy::PerStep: return "per-step";
  }
  return "fixed";
}

FieldSeedPolicy field_seed_policy_from_string(const std::string& s) {
  if (s == "fixed") return FieldSeedPolicy::Fixed;
  if (s == "per-episode") return FieldSeedPolicy::PerEpisode;
  if (s == "per-step") return FieldSeedPolicy::PerStep;
  throw ValidationError("field_seed_policy", "expected fixed, per-episode or per-step, got '" + s + "'");
}

std::string to_string(AttackStart s) {
  return s == AttackStart::FaultOnset ? "fault-onset" : "full-trace";
}

AttackStart attack_start_from_string(const std::string& s) {
  if (s == "fault-onset") return AttackStart::FaultOnset;
  if (s == "full-trace") return AttackStart::FullTrace;
  throw ValidationError("attack_start", "expected fault-onset or full-trace, got '" + s + "'");
}

void AttackConfig::validate(std::size_t bus_count) const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ValidationError("epsilon", "must be positive");
  if (!access_mask.empty() && access_mask.size() != bus_count) {
    throw ValidationError("access_mask", "expected " + std::to_string(bus_count) + " entries");
  }
  action_bounds.validate();
  reward.validate();
  if (!(impulse_density > 0.0)) throw ValidationError("impulse_density", "must be positive");
  if (!(sigma_floor > 0.0)) throw ValidationError("sigma_floor", "must be positive");
}

std::vector<double> AgentState::flatten() const {
  std::vector<double> s;
  s.reserve(dimension());
  s.insert(s.end(), x.begin(), x.end());
  s.insert(s.end(), n.begin(), n.end());
  s.push_back(c);
  return s;
}

std::vector<double> project_perturbation(std::span<const double> n, double epsilon) {
  if (!(epsilon > 0.0)) throw ValidationError("epsilon", "must be positive");
  std::vector<double> out(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) {
    out[i] = std::isnan(n[i]) ? 0.0 : std::clamp(n[i], -epsilon, epsilon);
  }
  return out;
}

double misdirection(int label, double attacked_posterior) {
  return std::abs(static_cast<double>(label) - attacked_posterior);
}

double reward(double c, std::span<const double> x, std::span<const double> n, const RewardParams& params,
              std::size_t* clamp_count) {
  require_size(n.size(), x.size(), "reward perturbation");
  auto term = [&](double deviation) {
    double arg = params.k0 * (params.penalty_abs ? std::abs(deviation) : deviation);
    if (arg > kExponentLimit || arg < -kExponentLimit) {
      arg = std::clamp(arg, -kExponentLimit, kExponentLimit);
      if (clamp_count) ++*clamp_count;
    }
    return std::exp(arg);
  };
  double measurement_penalty = 0.0;
  double perturbation_penalty = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    measurement_penalty += term(x[i] - params.x_hat);
    perturbation_penalty += term(n[i]);
  }
  return c - measurement_penalty - perturbation_penalty;
}

double discounted_return(std::span<const double> rewards, double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ValidationError("lambda", "must lie in (0, 1]");
  double total = 0.0;
  double weight = 1.0;
  for (double r : rewards) {
    total += weight * r;
    weight *= lambda;
  }
  return total;
}

void write_episode_log(std::ostream& out, const std::vector<EpisodeLogRow>& rows) {
  out << "frame,time,reward,c,clean_posterior,attacked_posterior,max_abs_n\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", r.frame, r.time, r.reward, r.c,
                  r.clean_posterior, r.attacked_posterior, r.max_abs_n);
    out << buf;
  }
}

AttackEnv::AttackEnv(TraceScenario scenario, const DetectorOracle& oracle, AttackConfig config)
    : scenario_(std::move(scenario)), oracle_(&oracle), config_(std::move(config)) {
  scenario_.validate();
  bus_count_ = scenario_.bus_case.bus_count;
  config_.validate(bus_count_);
  if (oracle_->bus_count() != bus_count_) {
    throw DimensionError("attack env: detector expects " + std::to_string(oracle_->bus_count()) +
                         " buses, scenario has " + std::to_string(bus_count_));
  }
  if (scenario_.frame_count() < oracle_->window()) {
    throw InsufficientDataError("attack env: trace shorter than the detector window");
  }
}

double AttackEnv::window_posterior(const std::vector<Frame>& frames, std::size_t end) const {
  const std::size_t w = oracle_->window();
  std::vector<double> values;
  values.reserve(w * bus_count_);
  for (std::size_t t = end + 1 - w; t <= end; ++t) values.insert(values.end(), frames[t].begin(), frames[t].end());
  return oracle_->posterior(values);
}

std::uint64_t AttackEnv::field_seed_for_step() const {
  switch (config_.field_seed_policy) {
    case FieldSeedPolicy::Fixed: return mix_seed(config_.field_seed, kFieldStream);
    case FieldSeedPolicy::PerEpisode: return mix_seed(episode_seed_, kFieldStream);
    case FieldSeedPolicy::PerStep: return mix_seed(episode_seed_, kFieldStream, steps_ + 1);
  }
  return 0;
}

const AgentState& AttackEnv::reset(std::uint64_t seed) {
  scenario_.seed = seed;
  episode_seed_ = seed;
  trace_ = generate_trace(scenario_);
  compromised_ = trace_.frames;
  applied_.assign(trace_.size(), std::vector<double>(bus_count_, 0.0));
  log_.clear();
  layout_.reset();
  reward_clamps_ = 0;
  action_clamps_ = 0;

  first_frame_ = oracle_->window() - 1;
  if (config_.attack_start == AttackStart::FaultOnset) {
    const auto onset = std::find(trace_.labels.begin(), trace_.labels.end(), 1);
    if (onset != trace_.labels.end()) {
      first_frame_ = std::max(first_frame_, static_cast<std::size_t>(onset - trace_.labels.begin()));
    }
  }
  frame_ = first_frame_;
  steps_ = 0;
  const std::size_t available = trace_.size() - first_frame_;
  horizon_ = std::min(available, config_.reward.horizon_frames.value_or(available));
  done_ = false;

  state_.x.resize(bus_count_);
  for (std::size_t i = 0; i < bus_count_; ++i) state_.x[i] = std::abs(trace_.frames[frame_][i]);
  state_.n.assign(bus_count_, 0.0);
  state_.c = misdirection(trace_.labels[frame_], window_posterior(trace_.frames, frame_));
  return state_;
}

StepOutcome AttackEnv::step(const GaborAction& requested) {
  if (done_) throw EpisodeDoneError("attack env: episode already finished; call reset()");

  StepOutcome out;
  StepInfo& info = out.info;
  info.action = config_.action_bounds.clamp(requested);
  info.action_clamped = info.action != requested;
  if (info.action_clamped) ++action_clamps_;
  info.frame = frame_;
  info.time = trace_.times[frame_];
  info.label = trace_.labels[frame_];

  GaborKernelParams kernel;
  kernel.magnitude = 1.0;
  kernel.sigma = info.action[0];
  kernel.frequency = info.action[1];
  kernel.orientation = info.action[2] >= std::numbers::pi ? 0.0 : info.action[2];

  const auto field_seed = field_seed_for_step();
  if (!layout_ || layout_->seed != field_seed) {
    layout_ = sample_layout(config_.impulse_density, default_noise_domain(), field_seed, config_.sigma_floor);
  }
  const GaborField field = field_from_layout(*layout_, kernel);

  const Frame& clean = trace_.frames[frame_];
  auto raw = perturbation_vector(field, clean);
  for (std::size_t i = 0; i < bus_count_; ++i) {
    if (!config_.accessible(i)) raw[i] = 0.0;
  }
  info.applied_perturbation = project_perturbation(raw, config_.epsilon);
  const auto& n = info.applied_perturbation;

  Frame& attacked = compromised_[frame_];
  for (std::size_t i = 0; i < bus_count_; ++i) attacked[i] = clean[i] + n[i];
  applied_[frame_] = n;

  info.clean_posterior = window_posterior(trace_.frames, frame_);
  info.attacked_posterior = window_posterior(compromised_, frame_);
  const double c = misdirection(info.label, info.attacked_posterior);

  std::vector<double> x(bus_count_);
  for (std::size_t i = 0; i < bus_count_; ++i) {
    x[i] = config_.reward.penalty_uses_compromised ? std::abs(attacked[i]) : std::abs(clean[i]);
  }
  out.reward = reward(c, x, n, config_.reward, &reward_clamps_);

  double max_abs = 0.0;
  for (double v : n) max_abs = std::max(max_abs, std::abs(v));
  log_.push_back({frame_, info.time, out.reward, c, info.clean_posterior, info.attacked_posterior, max_abs});

  ++steps_;
  done_ = steps_ >= horizon_;
  if (!done_) ++frame_;
  for (std::size_t i = 0; i < bus_count_; ++i) state_.x[i] = std::abs(trace_.frames[frame_][i]);
  state_.n = n;
  state_.c = c;
  out.next_state = state_;
  out.done = done_;
  return out;
}

std::vector<double> AttackEnv::observe(const AgentState& state) const {
  std::vector<double> obs;
  obs.reserve(state.dimension());
  for (double v : state.x) obs.push_back((v - 1.0) / 0.1);
  for (double v : state.n) obs.push_back(v / config_.epsilon);
  obs.push_back(state.c);
  return obs;
}

}  // namespace gridadv

#include "gridadv/ddpg_agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "gridadv/error.hpp"

namespace gridadv {

namespace {

constexpr std::uint64_t kActorStream = 0x6163746f72;
constexpr std::uint64_t kCriticStream = 0x637269746963;
constexpr std::uint64_t kNoiseStream = 0x6e6f697365;
constexpr std::uint64_t kReplayStream = 0x7265706c6179;
constexpr std::uint64_t kEpisodeStream = 0x657069736f6465;
constexpr std::uint64_t kWarmupStream = 0x7761726d;

Mlp make_net(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Activation last,
             std::uint64_t seed) {
  std::vector<std::size_t> sizes{in};
  std::vector<Activation> acts;
  for (auto h : hidden) {
    sizes.push_back(h);
    acts.push_back(Activation::Relu);
  }
  sizes.push_back(out);
  acts.push_back(last);
  return init_mlp(sizes, acts, seed);
}

std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> v(a.begin(), a.end());
  v.insert(v.end(), b.begin(), b.end());
  return v;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
  return doc;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

}  // namespace

std::vector<double> AttackEnvironment::reset(std::uint64_t seed) { return env_.observe(env_.reset(seed)); }

Environment::Step AttackEnvironment::step(std::span<const double> action) {
  require_size(action.size(), kActionDim, "attack action");
  auto out = env_.step({action[0], action[1], action[2]});
  last_info_ = std::move(out.info);
  return {env_.observe(out.next_state), out.reward, out.done};
}

void DdpgConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("agent.gamma", "must lie in (0, 1]");
  if (!(tau > 0.0 && tau <= 1.0)) throw ValidationError("agent.tau", "must lie in (0, 1]");
  if (buffer_capacity == 0) throw ValidationError("agent.buffer_capacity", "must be positive");
  if (batch_size == 0 || batch_size > buffer_capacity) {
    throw ValidationError("agent.batch_size", "must be positive and within the buffer capacity");
  }
  if (!(actor_learning_rate > 0.0)) throw ValidationError("agent.actor_learning_rate", "must be positive");
  if (!(critic_learning_rate > 0.0)) throw ValidationError("agent.critic_learning_rate", "must be positive");
  if (!(exploration_start >= 0.0 && exploration_floor >= 0.0)) {
    throw ValidationError("agent.exploration", "noise scales must be non-negative");
  }
  if (!(reward_scale > 0.0)) throw ValidationError("agent.reward_scale", "must be positive");
  if (!std::isfinite(reward_shift)) throw ValidationError("agent.reward_shift", "must be finite");
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
  if (capacity == 0) throw ValidationError("buffer_capacity", "must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::store(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t index) const {
  if (index >= items_.size()) throw std::out_of_range("replay index");
  return items_[(head_ + index) % items_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t count) {
  if (items_.empty() || items_.size() < count) {
    throw InsufficientDataError("replay buffer holds " + std::to_string(items_.size()) + " transitions, " +
                                std::to_string(count) + " requested");
  }
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = pick(rng_);
  return idx;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t count) {
  std::vector<const Transition*> out;
  for (auto i : sample_indices(count)) out.push_back(&at(i));
  return out;
}

DdpgAgent make_agent(std::size_t state_dim, std::vector<Interval> action_bounds, const DdpgConfig& config) {
  config.validate();
  if (state_dim == 0) throw DimensionError("make_agent: state dimension must be positive");
  if (action_bounds.empty()) throw DimensionError("make_agent: need at least one action dimension");
  for (const auto& b : action_bounds) {
    if (!(b.low < b.high)) throw ValidationError("action_bounds", "low must be below high");
  }
  const std::size_t ad = action_bounds.size();
  DdpgAgent agent;
  agent.actor = make_net(state_dim, config.actor_hidden, ad, Activation::Tanh, mix_seed(config.seed, kActorStream));
  agent.critic = make_net(state_dim + ad, config.critic_hidden, 1, Activation::Identity,
                          mix_seed(config.seed, kCriticStream));
  agent.target_actor = agent.actor;
  agent.target_critic = agent.critic;
  agent.actor_opt = AdamState::for_network(agent.actor, config.actor_learning_rate);
  agent.critic_opt = AdamState::for_network(agent.critic, config.critic_learning_rate);
  agent.action_bounds = std::move(action_bounds);
  agent.gamma = config.gamma;
  agent.tau = config.tau;
  agent.exploration_sigma = config.exploration_start;
  agent.reward_shift = config.reward_shift;
  agent.reward_scale = config.reward_scale;
  agent.seed = config.seed;
  agent.noise_rng.seed(mix_seed(config.seed, kNoiseStream));
  return agent;
}

std::vector<double> to_native(const DdpgAgent& agent, std::span<const double> u) {
  require_size(u.size(), agent.action_bounds.size(), "unit action");
  std::vector<double> a(u.size());
  for (std::size_t d = 0; d < u.size(); ++d) {
    const auto& b = agent.action_bounds[d];
    a[d] = std::clamp(b.mid() + b.half_width() * u[d], b.low, b.high);
  }
  return a;
}

std::vector<double> to_unit(const DdpgAgent& agent, std::span<const double> a) {
  require_size(a.size(), agent.action_bounds.size(), "native action");
  std::vector<double> u(a.size());
  for (std::size_t d = 0; d < a.size(); ++d) {
    const auto& b = agent.action_bounds[d];
    u[d] = std::clamp((a[d] - b.mid()) / b.half_width(), -1.0, 1.0);
  }
  return u;
}

std::vector<double> act(const DdpgAgent& agent, std::span<const double> state) {
  require_size(state.size(), agent.state_dim(), "agent state");
  return to_native(agent, forward(agent.actor, state));
}

std::vector<double> act(DdpgAgent& agent, std::span<const double> state, bool explore) {
  require_size(state.size(), agent.state_dim(), "agent state");
  auto u = forward(agent.actor, state);
  if (explore && agent.exploration_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, agent.exploration_sigma);
    for (auto& v : u) v = std::clamp(v + noise(agent.noise_rng), -1.0, 1.0);
  }
  return to_native(agent, u);
}

void soft_update(Mlp& target, const Mlp& online, double tau) {
  require_size(target.layers.size(), online.layers.size(), "soft_update layers");
  for (std::size_t l = 0; l < target.layers.size(); ++l) {
    auto& t = target.layers[l];
    const auto& o = online.layers[l];
    require_size(t.weights.size(), o.weights.size(), "soft_update weights");
    require_size(t.biases.size(), o.biases.size(), "soft_update biases");
    for (std::size_t k = 0; k < t.weights.size(); ++k) t.weights[k] = tau * o.weights[k] + (1.0 - tau) * t.weights[k];
    for (std::size_t k = 0; k < t.biases.size(); ++k) t.biases[k] = tau * o.biases[k] + (1.0 - tau) * t.biases[k];
  }
}

double critic_target(const DdpgAgent& agent, const Transition& t) {
  double y = agent.reward_scale * (t.reward + agent.reward_shift);
  if (!t.done && agent.gamma > 0.0) {
    const auto next_action = forward(agent.target_actor, t.next_state);
    const auto q_next = forward(agent.target_critic, concat(t.next_state, next_action))[0];
    y += agent.gamma * q_next;
  }
  return y;
}

MlpGradients critic_gradient(const DdpgAgent& agent, std::span<const Transition* const> batch, double* loss) {
  const double inv = 1.0 / static_cast<double>(batch.size());
  auto grads = MlpGradients::zeros_like(agent.critic);
  double total = 0.0;
  for (const auto* t : batch) {
    const double y = critic_target(agent, *t);
    const auto trace = forward_trace(agent.critic, concat(t->state, t->action));
    const double err = trace.output()[0] - y;
    total += err * err * inv;
    const double g[1] = {err * inv};
    backward_accumulate(agent.critic, trace, g, grads);
  }
  if (loss) *loss = total;
  return grads;
}

MlpGradients actor_gradient(const DdpgAgent& agent, std::span<const Transition* const> batch, double* objective) {
  const double inv = 1.0 / static_cast<double>(batch.size());
  auto grads = MlpGradients::zeros_like(agent.actor);
  auto scratch = MlpGradients::zeros_like(agent.critic);
  const std::size_t sd = agent.state_dim();
  double total = 0.0;
  for (const auto* t : batch) {
    const auto actor_trace = forward_trace(agent.actor, t->state);
    const auto critic_trace = forward_trace(agent.critic, concat(t->state, actor_trace.output()));
    total += critic_trace.output()[0] * inv;
    const double one[1] = {1.0};
    const auto dq = backward_accumulate(agent.critic, critic_trace, one, scratch);
    std::vector<double> ascend(agent.action_dim());
    for (std::size_t d = 0; d < ascend.size(); ++d) ascend[d] = -dq[sd + d] * inv;
    backward_accumulate(agent.actor, actor_trace, ascend, grads);
  }
  if (objective) *objective = total;
  return grads;
}

TrainStepResult train_step(DdpgAgent& agent, ReplayBuffer& buffer, std::size_t batch_size) {
  if (batch_size == 0) throw ValidationError("batch_size", "must be positive");
  const auto batch = buffer.sample(batch_size);
  TrainStepResult result;
  adam_step(agent.critic_opt, agent.critic, critic_gradient(agent, batch, &result.critic_loss));
  adam_step(agent.actor_opt, agent.actor, actor_gradient(agent, batch, &result.actor_objective));
  soft_update(agent.target_critic, agent.critic, agent.tau);
  soft_update(agent.target_actor, agent.actor, agent.tau);
  return result;
}

double exploration_schedule(const DdpgConfig& config, std::size_t episode, std::size_t episodes) {
  if (episodes <= 1) return config.exploration_floor;
  const double frac = std::min(1.0, static_cast<double>(episode) / static_cast<double>(episodes - 1));
  return config.exploration_start + (config.exploration_floor - config.exploration_start) * frac;
}

std::uint64_t training_episode_seed(std::uint64_t master_seed, std::size_t episode) {
  return mix_seed(master_seed, kEpisodeStream, episode);
}

TrainResult train(DdpgAgent agent, const EnvFactory& factory, std::size_t episodes, const DdpgConfig& config,
                  const ActionObserver& observer) {
  config.validate();
  TrainResult result{std::move(agent), std::nullopt, 0.0, {}, {}};
  if (episodes == 0) return result;

  DdpgAgent& a = result.agent;
  auto env = factory();
  require_size(env->observation_dim(), a.state_dim(), "environment observation");
  require_size(env->action_dim(), a.action_dim(), "environment action");

  ReplayBuffer buffer(config.buffer_capacity, mix_seed(config.seed, kReplayStream));
  std::mt19937_64 warmup_rng(mix_seed(config.seed, kWarmupStream));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::size_t total_steps = 0;

  for (std::size_t e = 0; e < episodes; ++e) {
    a.exploration_sigma = exploration_schedule(config, e, episodes);
    const auto seed = training_episode_seed(config.seed, e);
    result.episode_seeds.push_back(seed);
    auto obs = env->reset(seed);

    std::vector<double> rewards;
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t step = 0;; ++step) {
      std::vector<double> unit_action;
      if (total_steps < config.warmup_steps) {
        unit_action.resize(a.action_dim());
        for (auto& u : unit_action) u = unit(warmup_rng);
      } else {
        unit_action = to_unit(a, act(a, obs, true));
      }
      const auto native = to_native(a, unit_action);
      if (observer) observer(e, step, native);
      auto out = env->step(native);
      if (!std::isfinite(out.reward)) {
        throw NumericalError("train: non-finite reward at episode " + std::to_string(e) + ", step " +
                             std::to_string(step));
      }
      rewards.push_back(out.reward);
      buffer.store({obs, unit_action, out.reward, out.observation, out.done});
      obs = std::move(out.observation);
      ++total_steps;

      if (total_steps >= config.warmup_steps && buffer.size() >= config.batch_size) {
        for (std::size_t u = 0; u < config.updates_per_step; ++u) {
          const auto r = train_step(a, buffer, config.batch_size);
          if (!std::isfinite(r.critic_loss) || !std::isfinite(r.actor_objective)) {
            throw NumericalError("train: non-finite loss at episode " + std::to_string(e) + ", step " +
                                 std::to_string(step) + " (critic_loss=" + std::to_string(r.critic_loss) + ")");
          }
          loss_sum += r.critic_loss;
          ++loss_count;
        }
      }
      if (out.done) break;
    }

    LearningCurveRow row;
    row.episode = e;
    for (double r : rewards) row.episode_return += r;
    row.discounted_return = discounted_return(rewards, a.gamma);
    row.critic_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    row.exploration_sigma = a.exploration_sigma;
    result.curve.push_back(row);
    ++a.episodes_trained;

    if (!result.best_agent || row.episode_return > result.best_return) {
      result.best_return = row.episode_return;
      result.best_agent = a;
    }
  }
  return result;
}

void write_learning_curve(std::ostream& out, const std::vector<LearningCurveRow>& curve) {
  out << "episode,return,discounted_return,critic_loss\n";
  char buf[128];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g,%.12g\n", r.episode, r.episode_return, r.discounted_return,
                  r.critic_loss);
    out << buf;
  }
}

void save_agent(const std::filesystem::path& dir, const DdpgAgent& agent, const std::string& prefix) {
  write_json(dir / (prefix + "actor.json"), to_json(agent.actor));
  write_json(dir / (prefix + "critic.json"), to_json(agent.critic));
  nlohmann::json meta;
  meta["format_version"] = kCheckpointFormatVersion;
  auto bounds = nlohmann::json::array();
  for (const auto& b : agent.action_bounds) bounds.push_back({b.low, b.high});
  meta["action_bounds"] = bounds;
  meta["gamma"] = agent.gamma;
  meta["tau"] = agent.tau;
  meta["seed"] = agent.seed;
  meta["episodes"] = agent.episodes_trained;
  meta["exploration_sigma"] = agent.exploration_sigma;
  meta["reward_shift"] = agent.reward_shift;
  meta["reward_scale"] = agent.reward_scale;
  meta["target_actor"] = to_json(agent.target_actor);
  meta["target_critic"] = to_json(agent.target_critic);
  write_json(dir / (prefix + "agent.json"), meta);
}

DdpgAgent load_agent(const std::filesystem::path& dir, const std::string& prefix) {
  DdpgAgent agent;
  agent.actor = mlp_from_json(read_json(dir / (prefix + "actor.json")));
  agent.critic = mlp_from_json(read_json(dir / (prefix + "critic.json")));
  const auto meta = read_json(dir / (prefix + "agent.json"));
  try {
    for (const auto& b : meta.at("action_bounds")) agent.action_bounds.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    agent.gamma = meta.at("gamma").get<double>();
    agent.tau = meta.at("tau").get<double>();
    agent.seed = meta.at("seed").get<std::uint64_t>();
    agent.episodes_trained = meta.at("episodes").get<std::size_t>();
    agent.exploration_sigma = meta.at("exploration_sigma").get<double>();
    agent.reward_shift = meta.value("reward_shift", 0.0);
    agent.reward_scale = meta.value("reward_scale", 1.0);
    agent.target_actor = mlp_from_json(meta.at("target_actor"));
    agent.target_critic = mlp_from_json(meta.at("target_critic"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("agent checkpoint: ") + e.what());
  }
  require_size(agent.actor.output_size(), agent.action_bounds.size(), "agent checkpoint actions");
  require_size(agent.critic.input_size(), agent.actor.input_size() + agent.actor.output_size(),
               "agent checkpoint critic input");
  agent.actor_opt = AdamState::for_network(agent.actor);
  agent.critic_opt = AdamState::for_network(agent.critic);
  agent.noise_rng.seed(mix_seed(agent.seed, kNoiseStream));
  return agent;
}

}  // namespace gridadv

#include "gridadv/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "gridadv/detector_oracle.hpp"
#include "gridadv/error.hpp"

namespace gridadv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDetectorSeedStream = 1;
constexpr std::uint64_t kAgentSeedStream = 2;
constexpr std::uint64_t kFieldSeedStream = 3;
constexpr std::uint64_t kEvalSeedStream = 4;
constexpr std::uint64_t kTraceSeedStream = 5;
constexpr std::uint64_t kSplitSeedStream = 6;
constexpr std::uint64_t kRandomBaselineStream = 0x72616e64;

void check_keys(const json& obj, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ValidationError(section, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ValidationError(section.empty() ? key : section + "." + key, "unknown configuration key");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

json interval_json(const Interval& i) { return json::array({i.low, i.high}); }

Interval interval_from(const json& j, const char* field) {
  if (!j.is_array() || j.size() != 2) throw ValidationError(field, "expected [low, high]");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(); }

std::string fmt(double v, int digits = 12) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void write_json_file(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

// Re-reads every declared output; an absent or empty file fails the stage.
void validate_outputs(const fs::path& dir, const std::vector<std::string>& files) {
  for (const auto& f : files) {
    std::error_code ec;
    const auto size = fs::file_size(dir / f, ec);
    if (ec || size == 0) throw IoError("output " + (dir / f).string() + " missing or empty");
  }
}

void write_manifest(const RunConfig& config, const std::string& stage, std::vector<std::string> outputs,
                    json extra = json::object()) {
  json m = std::move(extra);
  m["stage"] = stage;
  m["config_hash"] = config_hash(config);
  m["seed"] = config.seed;
  m["outputs"] = outputs;
  m["config"] = to_json(config);
  const std::string name = "manifest_" + stage + ".json";
  write_json_file(config.out_dir / name, m);
  outputs.push_back(name);
  validate_outputs(config.out_dir, outputs);
}

void prepare_out_dir(const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec || !fs::is_directory(config.out_dir)) {
    throw IoError("cannot create output directory " + config.out_dir.string());
  }
}

std::vector<double> window_values(const std::vector<Frame>& frames, std::size_t end, std::size_t window) {
  std::vector<double> v;
  for (std::size_t t = end + 1 - window; t <= end; ++t) v.insert(v.end(), frames[t].begin(), frames[t].end());
  return v;
}

// Frame-level tallies shared by per-episode and pooled metrics.
struct Tally {
  std::size_t frames = 0, clean_correct = 0, attacked_correct = 0;
  std::size_t post = 0, evaded = 0;
  double drop = 0.0, max_abs = 0.0;
  double delay_clean_sum = 0.0, delay_attacked_sum = 0.0;
  std::size_t delay_clean_n = 0, delay_attacked_n = 0;

  void add(const Tally& o) {
    frames += o.frames;
    clean_correct += o.clean_correct;
    attacked_correct += o.attacked_correct;
    post += o.post;
    evaded += o.evaded;
    drop += o.drop;
    max_abs = std::max(max_abs, o.max_abs);
    delay_clean_sum += o.delay_clean_sum;
    delay_attacked_sum += o.delay_attacked_sum;
    delay_clean_n += o.delay_clean_n;
    delay_attacked_n += o.delay_attacked_n;
  }

  AttackMetrics metrics() const {
    AttackMetrics m;
    const auto ratio = [](double a, std::size_t b) { return b ? a / static_cast<double>(b) : 0.0; };
    m.clean_accuracy = ratio(static_cast<double>(clean_correct), frames);
    m.attacked_accuracy = ratio(static_cast<double>(attacked_correct), frames);
    m.evasion_success_rate = ratio(static_cast<double>(evaded), post);
    m.mean_posterior_drop = ratio(drop, post);
    m.max_abs_perturbation = max_abs;
    if (delay_clean_n) m.detection_delay_clean = delay_clean_sum / static_cast<double>(delay_clean_n);
    if (delay_attacked_n) m.detection_delay_attacked = delay_attacked_sum / static_cast<double>(delay_attacked_n);
    return m;
  }
};

void write_perturbation_csv(const fs::path& path, const EpisodeRecord& ep) {
  std::ostringstream out;
  out << "time,bus,value\n";
  for (std::size_t t = 0; t < ep.clean.size(); ++t) {
    for (std::size_t i = 0; i < ep.perturbation[t].size(); ++i) {
      out << fmt(ep.clean.times[t]) << ',' << i << ',' << fmt(ep.perturbation[t][i]) << '\n';
    }
  }
  write_text(path, out.str());
}

std::string delay_cell(const std::optional<double>& d) { return d ? fmt(*d) : std::string(); }

void write_episodes_csv(const fs::path& path, const BaselineEvaluation& ev) {
  std::ostringstream out;
  out << "episode,seed,clean_accuracy,attacked_accuracy,evasion_success_rate,mean_posterior_drop,"
         "max_abs_perturbation,detection_delay_clean,detection_delay_attacked\n";
  for (std::size_t e = 0; e < ev.episodes.size(); ++e) {
    const auto& m = ev.episodes[e].metrics;
    out << e << ',' << ev.episodes[e].seed << ',' << fmt(m.clean_accuracy) << ',' << fmt(m.attacked_accuracy) << ','
        << fmt(m.evasion_success_rate) << ',' << fmt(m.mean_posterior_drop) << ',' << fmt(m.max_abs_perturbation)
        << ',' << delay_cell(m.detection_delay_clean) << ',' << delay_cell(m.detection_delay_attacked) << '\n';
  }
  write_text(path, out.str());
}

template <typename Fn>
std::string render(Fn&& writer) {
  std::ostringstream out;
  writer(out);
  return out.str();
}

}  // namespace

std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::None: return "none";
    case Baseline::RandomHyperparams: return "random_hyperparams";
    case Baseline::TrainedAgent: return "trained_agent";
  }
  return "none";
}

Baseline baseline_from_string(const std::string& s) {
  if (s == "none") return Baseline::None;
  if (s == "random_hyperparams") return Baseline::RandomHyperparams;
  if (s == "trained_agent") return Baseline::TrainedAgent;
  throw ValidationError("baselines", "unknown baseline '" + s + "'");
}

void RunConfig::validate() const {
  scenario.validate();
  detector.validate();
  attack.validate(scenario.bus_case.bus_count);
  agent.validate();
  if (!attack.access_mask.empty() &&
      std::none_of(attack.access_mask.begin(), attack.access_mask.end(), [](bool b) { return b; })) {
    throw ValidationError("attack.access_mask", "at least one bus must be accessible");
  }
  if (simulate_traces == 0) throw ValidationError("simulate.traces", "must be positive");
  if (detector_traces < 2) throw ValidationError("detector.traces", "need at least two traces");
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ValidationError("detector.train_ratio", "must lie in (0, 1)");
  if (eval_episodes == 0) throw ValidationError("evaluate.episodes", "must be positive");
  if (scenario.frame_count() <= detector.window) {
    throw ValidationError("detector.window", "must be shorter than the trace");
  }
}

DdpgConfig attack_agent_defaults(std::size_t bus_count) {
  DdpgConfig c;
  c.warmup_steps = 5000;
  c.reward_shift = 2.0 * static_cast<double>(bus_count);
  c.reward_scale = 1.0;
  return c;
}

RunConfig default_run_config() { return RunConfig{}; }

json to_json(const RunConfig& c) {
  json doc;
  doc["seed"] = c.seed;
  if (!c.case_file.empty()) doc["case_file"] = c.case_file.string();
  const auto& s = c.scenario;
  doc["case"] = {{"bus_count", s.bus_case.bus_count},
                 {"nominal_voltage", s.bus_case.nominal_voltage},
                 {"fault_coupling", s.bus_case.fault_coupling}};
  doc["scenario"] = {{"dt", s.dt},
                     {"horizon", s.horizon},
                     {"fault_start", s.fault_start},
                     {"fault_bus", s.fault_bus},
                     {"fault_depth", s.fault_depth},
                     {"fault_freq", s.fault_freq},
                     {"fault_damping", s.fault_damping},
                     {"sensor_noise_std", s.sensor_noise_std}};
  doc["simulate"] = {{"traces", c.simulate_traces}};
  const auto& d = c.detector;
  doc["detector"] = {{"window", d.window},
                     {"hidden", d.hidden},
                     {"threshold", d.threshold},
                     {"epochs", d.epochs},
                     {"batch_size", d.batch_size},
                     {"learning_rate", d.learning_rate},
                     {"normalization", {{"center", d.normalization.center}, {"scale", d.normalization.scale}}},
                     {"traces", c.detector_traces},
                     {"train_ratio", c.train_ratio}};
  const auto& a = c.attack;
  json mask = json();
  if (!a.access_mask.empty()) {
    mask = json::array();
    for (bool b : a.access_mask) mask.push_back(b);
  }
  doc["attack"] = {
      {"epsilon", a.epsilon},
      {"access_mask", mask},
      {"action_bounds",
       {{"sigma", interval_json(a.action_bounds.dims[0])},
        {"F0", interval_json(a.action_bounds.dims[1])},
        {"omega0", interval_json(a.action_bounds.dims[2])}}},
      {"reward",
       {{"k0", a.reward.k0},
        {"x_hat", a.reward.x_hat},
        {"lambda", a.reward.lambda},
        {"horizon_frames", a.reward.horizon_frames ? json(*a.reward.horizon_frames) : json()},
        {"penalty_abs", a.reward.penalty_abs},
        {"penalty_uses_compromised", a.reward.penalty_uses_compromised}}},
      {"impulse_density", a.impulse_density},
      {"sigma_floor", a.sigma_floor},
      {"field_seed_policy", to_string(a.field_seed_policy)},
      {"attack_start", to_string(a.attack_start)}};
  const auto& g = c.agent;
  doc["agent"] = {{"actor_hidden", g.actor_hidden},
                  {"critic_hidden", g.critic_hidden},
                  {"tau", g.tau},
                  {"buffer_capacity", g.buffer_capacity},
                  {"batch_size", g.batch_size},
                  {"actor_learning_rate", g.actor_learning_rate},
                  {"critic_learning_rate", g.critic_learning_rate},
                  {"exploration_start", g.exploration_start},
                  {"exploration_floor", g.exploration_floor},
                  {"warmup_steps", g.warmup_steps},
                  {"updates_per_step", g.updates_per_step},
                  {"reward_shift", g.reward_shift},
                  {"reward_scale", g.reward_scale},
                  {"episodes", c.agent_episodes}};
  json baselines = json::array();
  for (auto b : c.baselines) baselines.push_back(to_string(b));
  doc["evaluate"] = {{"episodes", c.eval_episodes}, {"baselines", baselines}};
  if (!c.eval_seeds.empty()) doc["evaluate"]["seeds"] = c.eval_seeds;
  return doc;
}

RunConfig run_config_from_json(const json& doc, const fs::path& base_dir) {
  RunConfig c;
  try {
    check_keys(doc, "", {"seed", "case_file", "case", "scenario", "simulate", "detector", "attack", "agent", "evaluate"});
    read(doc, "seed", c.seed);
    if (doc.contains("case_file") && doc.contains("case")) {
      throw ValidationError("case", "give either case_file or an inline case, not both");
    }
    if (doc.contains("case_file")) {
      fs::path p = doc.at("case_file").get<std::string>();
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      c.case_file = p;
      c.scenario.bus_case = load_case(p);
    } else if (doc.contains("case")) {
      const auto& cs = doc.at("case");
      check_keys(cs, "case", {"bus_count", "nominal_voltage", "fault_coupling"});
      c.scenario.bus_case.bus_count = cs.at("bus_count").get<std::size_t>();
      c.scenario.bus_case.nominal_voltage = cs.at("nominal_voltage").get<std::vector<double>>();
      c.scenario.bus_case.fault_coupling = cs.at("fault_coupling").get<std::vector<double>>();
    }
    if (doc.contains("scenario")) {
      const auto& s = doc.at("scenario");
      check_keys(s, "scenario", {"dt", "horizon", "fault_start", "fault_bus", "fault_depth", "fault_freq",
                                 "fault_damping", "sensor_noise_std"});
      read(s, "dt", c.scenario.dt);
      read(s, "horizon", c.scenario.horizon);
      read(s, "fault_start", c.scenario.fault_start);
      read(s, "fault_bus", c.scenario.fault_bus);
      read(s, "fault_depth", c.scenario.fault_depth);
      read(s, "fault_freq", c.scenario.fault_freq);
      read(s, "fault_damping", c.scenario.fault_damping);
      read(s, "sensor_noise_std", c.scenario.sensor_noise_std);
    }
    if (doc.contains("simulate")) {
      check_keys(doc.at("simulate"), "simulate", {"traces"});
      read(doc.at("simulate"), "traces", c.simulate_traces);
    }
    if (doc.contains("detector")) {
      const auto& d = doc.at("detector");
      check_keys(d, "detector", {"window", "hidden", "threshold", "epochs", "batch_size", "learning_rate",
                                 "normalization", "traces", "train_ratio"});
      read(d, "window", c.detector.window);
      read(d, "hidden", c.detector.hidden);
      read(d, "threshold", c.detector.threshold);
      read(d, "epochs", c.detector.epochs);
      read(d, "batch_size", c.detector.batch_size);
      read(d, "learning_rate", c.detector.learning_rate);
      if (d.contains("normalization")) {
        const auto& n = d.at("normalization");
        check_keys(n, "detector.normalization", {"center", "scale"});
        read(n, "center", c.detector.normalization.center);
        read(n, "scale", c.detector.normalization.scale);
      }
      read(d, "traces", c.detector_traces);
      read(d, "train_ratio", c.train_ratio);
    }
    if (doc.contains("attack")) {
      const auto& a = doc.at("attack");
      check_keys(a, "attack", {"epsilon", "access_mask", "action_bounds", "reward", "impulse_density", "sigma_floor",
                               "field_seed_policy", "attack_start"});
      read(a, "epsilon", c.attack.epsilon);
      if (a.contains("access_mask") && !a.at("access_mask").is_null()) {
        c.attack.access_mask = a.at("access_mask").get<std::vector<bool>>();
      }
      if (a.contains("action_bounds")) {
        const auto& b = a.at("action_bounds");
        check_keys(b, "attack.action_bounds", {"sigma", "F0", "omega0"});
        if (b.contains("sigma")) c.attack.action_bounds.dims[0] = interval_from(b.at("sigma"), "attack.action_bounds.sigma");
        if (b.contains("F0")) c.attack.action_bounds.dims[1] = interval_from(b.at("F0"), "attack.action_bounds.F0");
        if (b.contains("omega0")) {
          c.attack.action_bounds.dims[2] = interval_from(b.at("omega0"), "attack.action_bounds.omega0");
        }
      }
      if (a.contains("reward")) {
        const auto& r = a.at("reward");
        check_keys(r, "attack.reward", {"k0", "x_hat", "lambda", "horizon_frames", "penalty_abs",
                                        "penalty_uses_compromised"});
        read(r, "k0", c.attack.reward.k0);
        read(r, "x_hat", c.attack.reward.x_hat);
        read(r, "lambda", c.attack.reward.lambda);
        if (r.contains("horizon_frames") && !r.at("horizon_frames").is_null()) {
          c.attack.reward.horizon_frames = r.at("horizon_frames").get<std::size_t>();
        }
        read(r, "penalty_abs", c.attack.reward.penalty_abs);
        read(r, "penalty_uses_compromised", c.attack.reward.penalty_uses_compromised);
      }
      read(a, "impulse_density", c.attack.impulse_density);
      read(a, "sigma_floor", c.attack.sigma_floor);
      if (a.contains("field_seed_policy")) {
        c.attack.field_seed_policy = field_seed_policy_from_string(a.at("field_seed_policy").get<std::string>());
      }
      if (a.contains("attack_start")) {
        c.attack.attack_start = attack_start_from_string(a.at("attack_start").get<std::string>());
      }
    }
    if (doc.contains("agent")) {
      const auto& g = doc.at("agent");
      check_keys(g, "agent", {"actor_hidden", "critic_hidden", "tau", "buffer_capacity", "batch_size",
                              "actor_learning_rate", "critic_learning_rate", "exploration_start", "exploration_floor",
                              "warmup_steps", "updates_per_step", "reward_shift", "reward_scale", "episodes"});
      read(g, "actor_hidden", c.agent.actor_hidden);
      read(g, "critic_hidden", c.agent.critic_hidden);
      read(g, "tau", c.agent.tau);
      read(g, "buffer_capacity", c.agent.buffer_capacity);
      read(g, "batch_size", c.agent.batch_size);
      read(g, "actor_learning_rate", c.agent.actor_learning_rate);
      read(g, "critic_learning_rate", c.agent.critic_learning_rate);
      read(g, "exploration_start", c.agent.exploration_start);
      read(g, "exploration_floor", c.agent.exploration_floor);
      read(g, "warmup_steps", c.agent.warmup_steps);
      read(g, "updates_per_step", c.agent.updates_per_step);
      read(g, "reward_shift", c.agent.reward_shift);
      read(g, "reward_scale", c.agent.reward_scale);
      read(g, "episodes", c.agent_episodes);
    }
    if (doc.contains("evaluate")) {
      const auto& e = doc.at("evaluate");
      check_keys(e, "evaluate", {"episodes", "baselines", "seeds"});
      read(e, "episodes", c.eval_episodes);
      read(e, "seeds", c.eval_seeds);
      if (e.contains("baselines")) {
        c.baselines.clear();
        for (const auto& b : e.at("baselines")) c.baselines.push_back(baseline_from_string(b.get<std::string>()));
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("run config: ") + e.what());
  }
  c.agent.gamma = c.attack.reward.lambda;
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  return run_config_from_json(read_json_file(path), path.parent_path());
}

std::string config_hash(const RunConfig& config) {
  const std::string text = to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t detector_trace_seed(const RunConfig& config, std::size_t index) {
  return mix_seed(config.seed, kTraceSeedStream, index);
}

std::uint64_t evaluation_seed(const RunConfig& config, std::size_t episode) {
  return mix_seed(config.seed, kEvalSeedStream, episode);
}

std::vector<std::uint64_t> evaluation_seeds(const RunConfig& config) {
  if (!config.eval_seeds.empty()) return config.eval_seeds;
  std::vector<std::uint64_t> seeds;
  for (std::size_t e = 0; e < config.eval_episodes; ++e) seeds.push_back(evaluation_seed(config, e));
  return seeds;
}

RunConfig with_derived_seeds(RunConfig config) {
  config.detector.seed = mix_seed(config.seed, kDetectorSeedStream);
  config.agent.seed = mix_seed(config.seed, kAgentSeedStream);
  config.agent.gamma = config.attack.reward.lambda;
  config.attack.field_seed = mix_seed(config.seed, kFieldSeedStream);
  return config;
}

nlohmann::json metrics_to_json(const AttackMetrics& m) {
  return {{"clean_accuracy", m.clean_accuracy},
          {"attacked_accuracy", m.attacked_accuracy},
          {"evasion_success_rate", m.evasion_success_rate},
          {"mean_posterior_drop", m.mean_posterior_drop},
          {"max_abs_perturbation", m.max_abs_perturbation},
          {"detection_delay_clean", optional_json(m.detection_delay_clean)},
          {"detection_delay_attacked", optional_json(m.detection_delay_attacked)}};
}

BaselineEvaluation evaluate_baseline(const RunConfig& raw_config, const DetectorModel& detector, Baseline baseline,
                                     const std::vector<std::uint64_t>& seeds, const DdpgAgent* agent) {
  const RunConfig config = with_derived_seeds(raw_config);
  if (baseline == Baseline::TrainedAgent && agent == nullptr) {
    throw ValidationError("baseline", "trained_agent evaluation needs an agent");
  }
  AttackConfig attack = config.attack;
  if (baseline == Baseline::None) attack.access_mask.assign(config.scenario.bus_case.bus_count, false);

  const DetectorOracle oracle(detector);
  BaselineEvaluation result;
  result.baseline = baseline;
  Tally pooled;
  const auto& bounds = attack.action_bounds.dims;

  for (const auto seed : seeds) {
    AttackEnv env(config.scenario, oracle, attack);
    env.reset(seed);
    std::mt19937_64 rng(mix_seed(seed, kRandomBaselineStream));
    EpisodeRecord ep;
    ep.seed = seed;
    while (!env.done()) {
      GaborAction a{};
      if (baseline == Baseline::TrainedAgent) {
        const auto v = act(*agent, env.observe());
        a = {v[0], v[1], v[2]};
      } else if (baseline == Baseline::RandomHyperparams) {
        for (std::size_t d = 0; d < kActionDim; ++d) {
          a[d] = std::uniform_real_distribution<double>(bounds[d].low, bounds[d].high)(rng);
        }
      } else {
        for (std::size_t d = 0; d < kActionDim; ++d) a[d] = bounds[d].mid();
      }
      const auto out = env.step(a);
      ep.actions.push_back(out.info.action);
    }
    ep.clean = env.clean_trace();
    ep.compromised = env.compromised_frames();
    ep.perturbation = env.applied_perturbations();
    ep.log = env.log();

    // Scoring is the evaluator's view: every full window of both streams.
    const std::size_t w = detector.window;
    std::vector<double> times, clean_post, attacked_post;
    std::vector<int> labels;
    Tally t;
    for (std::size_t end = w - 1; end < ep.clean.size(); ++end) {
      const double pc = posterior_for_window(detector, window_values(ep.clean.frames, end, w));
      const double pa = posterior_for_window(detector, window_values(ep.compromised, end, w));
      const int label = ep.clean.labels[end];
      times.push_back(ep.clean.times[end]);
      labels.push_back(label);
      clean_post.push_back(pc);
      attacked_post.push_back(pa);
      ++t.frames;
      if ((pc >= detector.threshold ? 1 : 0) == label) ++t.clean_correct;
      if ((pa >= detector.threshold ? 1 : 0) == label) ++t.attacked_correct;
      if (label == 1) {
        ++t.post;
        if (pa < detector.threshold) ++t.evaded;
        t.drop += pc - pa;
      }
    }
    for (const auto& frame_n : ep.perturbation) {
      for (double v : frame_n) t.max_abs = std::max(t.max_abs, std::abs(v));
    }
    ep.clean_detection = summarize_detection(times, labels, clean_post, ep.clean.fault_start, detector.threshold);
    ep.attacked_detection =
        summarize_detection(times, labels, attacked_post, ep.clean.fault_start, detector.threshold);
    if (ep.clean_detection.delay) {
      t.delay_clean_sum = *ep.clean_detection.delay;
      t.delay_clean_n = 1;
    }
    if (ep.attacked_detection.delay) {
      t.delay_attacked_sum = *ep.attacked_detection.delay;
      t.delay_attacked_n = 1;
    }
    ep.metrics = t.metrics();
    pooled.add(t);
    result.episodes.push_back(std::move(ep));
  }
  result.metrics = pooled.metrics();
  return result;
}

SimulateResult cmd_simulate(const RunConfig& config) {
  config.validate();
  prepare_out_dir(config);
  SimulateResult result;
  std::vector<std::string> outputs;
  json seeds = json::array();
  for (std::size_t i = 0; i < config.simulate_traces; ++i) {
    TraceScenario s = config.scenario;
    s.seed = mix_seed(config.seed, kTraceSeedStream + 100, i);
    char name[32];
    std::snprintf(name, sizeof name, "trace_%03zu.csv", i);
    write_trace_csv(config.out_dir / name, generate_trace(s));
    result.trace_files.push_back(config.out_dir / name);
    outputs.push_back(name);
    seeds.push_back(s.seed);
  }
  write_manifest(config, "simulate", outputs, {{"trace_seeds", seeds}});
  return result;
}

TrainDetectorResult cmd_train_detector(const RunConfig& raw_config) {
  const RunConfig config = with_derived_seeds(raw_config);
  config.validate();
  prepare_out_dir(config);

  std::vector<MeasurementTrace> traces;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < config.detector_traces; ++i) {
    TraceScenario s = config.scenario;
    s.seed = detector_trace_seed(config, i);
    seeds.push_back(s.seed);
    traces.push_back(generate_trace(s));
  }
  const auto split = split_dataset(traces, config.detector.window, config.train_ratio,
                                   mix_seed(config.seed, kSplitSeedStream));

  TrainDetectorResult result;
  result.model = train_detector(split.train, config.scenario.bus_case.bus_count, config.detector);
  result.train_accuracy = frame_accuracy(result.model, split.train);
  std::vector<MeasurementTrace> test;
  for (auto idx : split.test_traces) {
    test.push_back(traces[idx]);
    result.test_seeds.push_back(seeds[idx]);
  }
  result.report = evaluate_detector(result.model, test);

  save_detector(config.out_dir / "detector.json", result.model);
  json report = report_to_json(result.report);
  report["train_accuracy"] = result.train_accuracy;
  report["final_loss"] = result.model.final_loss;
  report["test_seeds"] = result.test_seeds;
  report["config_hash"] = config_hash(raw_config);
  report["seed"] = config.seed;
  write_json_file(config.out_dir / "detector_report.json", report);
  write_text(config.out_dir / "detector_posterior.csv",
             render([&](std::ostream& o) { write_posterior_csv(o, result.report.traces.front()); }));
  write_manifest(raw_config, "train_detector", {"detector.json", "detector_report.json", "detector_posterior.csv"},
                 {{"trace_seeds", seeds}});
  return result;
}

TrainResult cmd_train_attacker(const RunConfig& raw_config) {
  const RunConfig config = with_derived_seeds(raw_config);
  config.validate();
  const fs::path detector_path = config.out_dir / "detector.json";
  if (!fs::exists(detector_path)) {
    throw IoError("missing detector checkpoint " + detector_path.string() + "; run train-detector first");
  }
  const DetectorModel detector = load_detector(detector_path);
  const DetectorOracle oracle(detector);

  const std::size_t state_dim = 2 * config.scenario.bus_case.bus_count + 1;
  const std::vector<Interval> bounds(config.attack.action_bounds.dims.begin(), config.attack.action_bounds.dims.end());
  DdpgAgent agent = make_agent(state_dim, bounds, config.agent);

  std::ostringstream actions;
  actions << "episode,step,sigma,F0,omega0\n";
  auto observer = [&](std::size_t e, std::size_t s, std::span<const double> a) {
    actions << e << ',' << s << ',' << fmt(a[0]) << ',' << fmt(a[1]) << ',' << fmt(a[2]) << '\n';
  };
  auto factory = [&]() -> std::unique_ptr<Environment> {
    return std::make_unique<AttackEnvironment>(AttackEnv(config.scenario, oracle, config.attack));
  };
  TrainResult result = train(std::move(agent), factory, config.agent_episodes, config.agent, observer);

  save_agent(config.out_dir, result.agent);
  std::vector<std::string> outputs = {"actor.json", "critic.json", "agent.json", "learning_curve.csv", "actions.csv"};
  if (result.best_agent) {
    save_agent(config.out_dir, *result.best_agent, "best_");
    outputs.insert(outputs.end(), {"best_actor.json", "best_critic.json", "best_agent.json"});
  }
  write_text(config.out_dir / "learning_curve.csv",
             render([&](std::ostream& o) { write_learning_curve(o, result.curve); }));
  write_text(config.out_dir / "actions.csv", actions.str());
  write_manifest(raw_config, "train_attacker", outputs,
                 {{"episodes", config.agent_episodes},
                  {"final_exploration_sigma", result.curve.empty() ? json() : json(result.curve.back().exploration_sigma)},
                  {"best_return", result.best_agent ? json(result.best_return) : json()},
                  {"episode_seeds", result.episode_seeds}});
  return result;
}

EvaluateResult cmd_evaluate(const RunConfig& raw_config, const std::vector<Baseline>& baselines) {
  const RunConfig config = with_derived_seeds(raw_config);
  config.validate();
  if (baselines.empty()) throw ValidationError("baselines", "nothing to evaluate");

  std::vector<std::string> missing;
  const fs::path detector_path = config.out_dir / "detector.json";
  if (!fs::exists(detector_path)) missing.push_back(detector_path.string());
  const bool need_agent = std::find(baselines.begin(), baselines.end(), Baseline::TrainedAgent) != baselines.end();
  if (need_agent) {
    for (const char* f : {"actor.json", "critic.json", "agent.json"}) {
      if (!fs::exists(config.out_dir / f)) missing.push_back((config.out_dir / f).string());
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing artifacts:";
    for (const auto& m : missing) msg += " " + m;
    throw IoError(msg);
  }
  const DetectorModel detector = load_detector(detector_path);
  std::optional<DdpgAgent> agent;
  if (need_agent) agent = load_agent(config.out_dir);

  const auto seeds = evaluation_seeds(config);

  EvaluateResult result;
  std::set<std::uint64_t> training_seeds;
  for (std::size_t i = 0; i < config.detector_traces; ++i) training_seeds.insert(detector_trace_seed(config, i));
  for (std::size_t e = 0; e < config.agent_episodes; ++e) {
    training_seeds.insert(training_episode_seed(config.agent.seed, e));
  }
  for (auto s : seeds) {
    if (training_seeds.count(s)) {
      result.warnings.push_back("evaluation seed " + std::to_string(s) + " was also used for training");
    }
  }
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';

  std::vector<std::string> outputs;
  json metric_files = json::object();
  bool wrote_clean = false;
  for (auto b : baselines) {
    auto ev = evaluate_baseline(config, detector, b, seeds, agent ? &*agent : nullptr);
    const std::string name = to_string(b);
    json m = metrics_to_json(ev.metrics);
    m["baseline"] = name;
    m["episodes"] = seeds.size();
    m["config_hash"] = config_hash(raw_config);
    m["seed"] = config.seed;
    write_json_file(config.out_dir / ("metrics_" + name + ".json"), m);
    write_episodes_csv(config.out_dir / ("episodes_" + name + ".csv"), ev);

    const auto& first = ev.episodes.front();
    if (!wrote_clean) {
      write_trace_csv(config.out_dir / "clean_voltages.csv", first.clean);
      write_text(config.out_dir / "clean_posterior.csv",
                 render([&](std::ostream& o) { write_posterior_csv(o, first.clean_detection); }));
      outputs.insert(outputs.end(), {"clean_voltages.csv", "clean_posterior.csv"});
      wrote_clean = true;
    }
    MeasurementTrace compromised = first.clean;
    compromised.frames = first.compromised;
    write_perturbation_csv(config.out_dir / ("perturbation_" + name + ".csv"), first);
    write_trace_csv(config.out_dir / ("compromised_voltages_" + name + ".csv"), compromised);
    write_text(config.out_dir / ("attacked_posterior_" + name + ".csv"),
               render([&](std::ostream& o) { write_posterior_csv(o, first.attacked_detection); }));
    write_text(config.out_dir / ("episode_log_" + name + ".csv"),
               render([&](std::ostream& o) { write_episode_log(o, first.log); }));
    for (const auto& prefix : {"metrics_", "episodes_", "perturbation_", "compromised_voltages_",
                               "attacked_posterior_", "episode_log_"}) {
      const bool is_json = std::string(prefix) == "metrics_";
      outputs.push_back(prefix + name + (is_json ? ".json" : ".csv"));
    }
    metric_files[name] = "metrics_" + name + ".json";
    result.evaluations.push_back(std::move(ev));
  }
  write_manifest(raw_config, "evaluate", outputs,
                 {{"metrics", metric_files}, {"evaluation_seeds", seeds}, {"warnings", result.warnings}});
  return result;
}

std::string cmd_report(const fs::path& run_dir) {
  std::vector<std::string> missing;
  for (const char* f : {"detector_report.json", "manifest_evaluate.json"}) {
    if (!fs::exists(run_dir / f)) missing.push_back(f);
  }
  json manifest;
  if (missing.empty()) {
    manifest = read_json_file(run_dir / "manifest_evaluate.json");
    for (const auto& [name, file] : manifest.at("metrics").items()) {
      if (!fs::exists(run_dir / file.get<std::string>())) missing.push_back(file.get<std::string>());
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing artifacts in " + run_dir.string() + ":";
    for (const auto& m : missing) msg += " " + m;
    throw IoError(msg);
  }

  const json det = read_json_file(run_dir / "detector_report.json");
  std::ostringstream md;
  md << "# Evasion attack run summary\n\n";
  md << "- config hash: `" << manifest.at("config_hash").get<std::string>() << "`\n";
  md << "- master seed: " << manifest.at("seed").get<std::uint64_t>() << "\n";
  md << "- evaluation episodes: " << manifest.at("evaluation_seeds").size() << "\n\n";

  md << "## Detector (held-out traces)\n\n";
  md << "| metric | value |\n|---|---|\n";
  md << "| frame accuracy | " << fmt(det.at("frame_accuracy").get<double>(), 6) << " |\n";
  md << "| false positive rate | " << fmt(det.at("false_positive_rate").get<double>(), 6) << " |\n";
  md << "| worst detection delay (s) | "
     << (det.at("detection_delay").is_null() ? std::string("not detected")
                                             : fmt(det.at("detection_delay").get<double>(), 6))
     << " |\n";
  md << "| train accuracy | " << fmt(det.value("train_accuracy", 0.0), 6) << " |\n\n";

  md << "## Attack metrics\n\n";
  static const char* fields[] = {"clean_accuracy",       "attacked_accuracy",     "evasion_success_rate",
                                 "mean_posterior_drop",  "max_abs_perturbation",  "detection_delay_clean",
                                 "detection_delay_attacked"};
  md << "| baseline |";
  for (const char* f : fields) md << ' ' << f << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < std::size(fields); ++i) md << "---|";
  md << '\n';
  for (const auto& [name, file] : manifest.at("metrics").items()) {
    const json m = read_json_file(run_dir / file.get<std::string>());
    md << "| " << name << " |";
    for (const char* f : fields) {
      const auto& v = m.at(f);
      md << ' ' << (v.is_null() ? std::string("not detected") : fmt(v.get<double>(), 6)) << " |";
    }
    md << '\n';
  }

  if (!manifest.at("warnings").empty()) {
    md << "\n## Warnings\n\n";
    for (const auto& w : manifest.at("warnings")) md << "- " << w.get<std::string>() << '\n';
  }

  md << "\n## Provenance\n\n";
  for (const char* stage : {"simulate", "train_detector", "train_attacker", "evaluate"}) {
    const fs::path p = run_dir / (std::string("manifest_") + stage + ".json");
    if (!fs::exists(p)) continue;
    const json m = read_json_file(p);
    md << "- " << stage << ": config `" << m.at("config_hash").get<std::string>() << "`, seed "
       << m.at("seed").get<std::uint64_t>() << ", " << m.at("outputs").size() << " outputs\n";
  }
  const std::string text = md.str();
  write_text(run_dir / "summary.md", text);
  return text;
}

}  // namespace gridadv

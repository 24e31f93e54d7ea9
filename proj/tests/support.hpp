#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gridadv/ddpg_agent.hpp"
#include "gridadv/detector.hpp"
#include "gridadv/error.hpp"
#include "gridadv/grid_traces.hpp"

namespace testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("gridadv_" + tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// One-dimensional bandit-like environment: fixed observation, reward
// -(action - target)^2 per step, fixed episode length. Best return is 0.
class ToyEnv final : public gridadv::Environment {
 public:
  explicit ToyEnv(double target = 0.3, std::size_t length = 10) : target_(target), length_(length) {}

  std::vector<double> reset(std::uint64_t) override {
    t_ = 0;
    return {1.0};
  }
  Step step(std::span<const double> action) override {
    const double d = action[0] - target_;
    ++t_;
    return {{1.0}, -d * d, t_ >= length_};
  }
  std::size_t observation_dim() const override { return 1; }
  std::size_t action_dim() const override { return 1; }

  // Expected return of actions drawn uniformly from [low, high].
  static double random_policy_return(double target, std::size_t length, double low, double high) {
    const double m = 0.5 * (low + high) - target;
    const double var = (high - low) * (high - low) / 12.0;
    return -static_cast<double>(length) * (var + m * m);
  }

 private:
  double target_;
  std::size_t length_;
  std::size_t t_ = 0;
};

inline gridadv::DdpgConfig toy_ddpg_config(std::uint64_t seed) {
  gridadv::DdpgConfig c;
  c.actor_hidden = {32, 32};
  c.critic_hidden = {32, 32};
  c.gamma = 0.95;
  c.batch_size = 32;
  c.warmup_steps = 200;
  c.seed = seed;
  return c;
}

// Small default-shaped traces and a quickly trained detector shared by tests.
inline std::vector<gridadv::MeasurementTrace> make_traces(std::size_t count, std::uint64_t base_seed) {
  std::vector<gridadv::MeasurementTrace> traces;
  auto s = gridadv::default_scenario();
  for (std::size_t i = 0; i < count; ++i) {
    s.seed = gridadv::mix_seed(base_seed, 1, i);
    traces.push_back(gridadv::generate_trace(s));
  }
  return traces;
}

inline const gridadv::DetectorModel& small_detector() {
  static const gridadv::DetectorModel model = [] {
    const auto traces = make_traces(12, 99);
    std::vector<gridadv::LabeledWindow> windows;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      auto w = gridadv::sliding_windows(traces[i], 10, i);
      windows.insert(windows.end(), w.begin(), w.end());
    }
    gridadv::DetectorConfig cfg;
    cfg.epochs = 30;
    cfg.seed = 5;
    return gridadv::train_detector(windows, 9, cfg);
  }();
  return model;
}

}  // namespace testing

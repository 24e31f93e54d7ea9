#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "gridadv/grid_traces.hpp"
#include "gridadv/neural_core.hpp"

namespace gridadv {

struct Normalization {
  double center = 1.0;  // pu
  double scale = 0.1;   // pu
};

struct DetectorConfig {
  std::size_t window = 10;
  std::vector<std::size_t> hidden = {64, 32};
  double threshold = 0.5;
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  Normalization normalization;
  std::uint64_t seed = 0;

  void validate() const;
};

// Binary contingency classifier over a sliding window of per-bus voltages.
struct DetectorModel {
  Mlp net;
  std::size_t window = 10;
  std::size_t bus_count = 0;
  double threshold = 0.5;
  Normalization normalization;
  double final_loss = 0.0;
};

/// Last `window` frames ending at frame `t`, each value mapped to (v - center) / scale.
std::vector<double> featurize(const MeasurementTrace& trace, std::size_t t, std::size_t window,
                              const Normalization& norm = {});
/// Same mapping applied to an already-assembled window (oldest frame first).
std::vector<double> featurize_window(std::span<const double> window_values, const Normalization& norm = {});

/// Mini-batch Adam on binary cross-entropy. Throws ValidationError when the
/// training set holds a single class.
DetectorModel train_detector(const std::vector<LabeledWindow>& train_set, std::size_t bus_count,
                             const DetectorConfig& config);

double posterior(const DetectorModel& model, std::span<const double> features);
double posterior_for_window(const DetectorModel& model, std::span<const double> window_values);

double frame_accuracy(const DetectorModel& model, const std::vector<LabeledWindow>& windows);

struct TraceDetection {
  std::vector<double> times;
  std::vector<int> labels;
  std::vector<double> posterior;
  std::optional<double> delay;  // nullopt: never crossed the threshold after onset
};

struct DetectorReport {
  double frame_accuracy = 0.0;
  double false_positive_rate = 0.0;
  // Worst delay across traces; nullopt when any trace went undetected.
  std::optional<double> detection_delay;
  std::vector<TraceDetection> traces;
};

// Maps a raw window (window * bus_count values, oldest first) to a probability.
using WindowPredictor = std::function<double(std::span<const double>)>;

DetectorReport evaluate_predictor(const WindowPredictor& predictor, const std::vector<MeasurementTrace>& traces,
                                  std::size_t window, double threshold);
DetectorReport evaluate_detector(const DetectorModel& model, const std::vector<MeasurementTrace>& traces);

/// Per-frame detection summary for one posterior series.
TraceDetection summarize_detection(std::vector<double> times, std::vector<int> labels,
                                   std::vector<double> posterior, double fault_start, double threshold);

nlohmann::json report_to_json(const DetectorReport& report);
// CSV `time,posterior,label`.
void write_posterior_csv(std::ostream& out, const TraceDetection& detection);

nlohmann::json detector_to_json(const DetectorModel& model);
DetectorModel detector_from_json(const nlohmann::json& doc);
void save_detector(const std::filesystem::path& path, const DetectorModel& model);
DetectorModel load_detector(const std::filesystem::path& path);

}  // namespace gridadv

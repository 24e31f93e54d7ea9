#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace gridadv {

// Nominal voltage profile of a small transmission case plus how strongly the
// scripted fault depresses each bus.
struct BusCase {
  std::size_t bus_count = 0;
  std::vector<double> nominal_voltage;  // pu
  std::vector<double> fault_coupling;   // [0,1]

  void validate() const;
};

struct TraceScenario {
  BusCase bus_case;
  double dt = 0.1;
  double horizon = 10.0;
  double fault_start = 5.4;
  std::size_t fault_bus = 4;
  double fault_depth = 0.2;
  double fault_freq = 1.5;
  double fault_damping = 1.0;
  double sensor_noise_std = 0.002;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t frame_count() const;
};

using Frame = std::vector<double>;

struct MeasurementTrace {
  std::vector<double> times;
  std::vector<Frame> frames;
  std::vector<int> labels;
  double fault_start = 0.0;

  std::size_t size() const { return times.size(); }
  std::size_t bus_count() const { return frames.empty() ? 0 : frames.front().size(); }
};

/// Voltage sag envelope at `tau` seconds after fault onset:
/// depth * exp(-damping * tau) * |cos(2 pi freq tau)|.
double fault_transient(const TraceScenario& scenario, double tau);

/// Deterministic in `scenario.seed`. Throws ValidationError naming the bad field.
MeasurementTrace generate_trace(const TraceScenario& scenario);

// Case file: `key = value...` lines with keys bus_count, nominal_voltage and
// fault_coupling. Values are separated by whitespace or commas; `#` starts a comment.
BusCase parse_case(std::string_view text);
BusCase load_case(const std::filesystem::path& path);
std::string format_case(const BusCase& bus_case);

/// Nine-bus profile shipped with the project (identical to data/ieee9.case).
BusCase default_case();
TraceScenario default_scenario();

// CSV `time,bus,value,label`, row-major by time then bus.
void write_trace_csv(std::ostream& out, const MeasurementTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const MeasurementTrace& trace);
MeasurementTrace read_trace_csv(std::istream& in);

struct LabeledWindow {
  std::vector<double> values;  // window * bus_count, oldest frame first
  int label = 0;               // label of the final frame
  std::size_t trace_index = 0;
  std::size_t end_frame = 0;
};

struct DatasetSplit {
  std::vector<LabeledWindow> train;
  std::vector<LabeledWindow> test;
  std::vector<std::size_t> train_traces;
  std::vector<std::size_t> test_traces;
};

std::vector<LabeledWindow> sliding_windows(const MeasurementTrace& trace, std::size_t window,
                                           std::size_t trace_index = 0);

/// Splits whole traces (never individual windows) into train and test sets.
DatasetSplit split_dataset(const std::vector<MeasurementTrace>& traces, std::size_t window,
                           double ratio, std::uint64_t seed);

}  // namespace gridadv

#include "gridadv/grid_traces.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "gridadv/error.hpp"

namespace gridadv {

namespace {

constexpr const char* kDefaultCaseText = R"(# IEEE 9-bus system, nominal voltage magnitudes from the classic
# Anderson-Fouad load-flow solution (pu), buses 1..9.
bus_count = 9
nominal_voltage = 1.040 1.025 1.025 1.026 0.996 1.013 1.026 1.016 1.032
# Sag coupling for a fault near bus 5: 1.0 at the faulted bus, falling
# off with electrical distance.
fault_coupling = 0.25 0.30 0.25 0.60 1.00 0.45 0.70 0.50 0.40
)";

void require(bool ok, const char* field, const std::string& message) {
  if (!ok) throw ValidationError(field, message);
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<double> parse_numbers(const std::string& text, std::size_t line, const std::string& key) {
  std::string cleaned = text;
  std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
  std::istringstream in(cleaned);
  std::vector<double> values;
  std::string token;
  while (in >> token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') {
      throw ParseError(line, key + ": '" + token + "' is not a number");
    }
    values.push_back(v);
  }
  if (values.empty()) throw ParseError(line, key + ": no values");
  return values;
}

std::string format_double(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

}  // namespace

void BusCase::validate() const {
  require(bus_count > 0, "bus_count", "must be positive");
  require(nominal_voltage.size() == bus_count, "nominal_voltage",
          "expected " + std::to_string(bus_count) + " values, got " +
              std::to_string(nominal_voltage.size()));
  require(fault_coupling.size() == bus_count, "fault_coupling",
          "expected " + std::to_string(bus_count) + " values, got " +
              std::to_string(fault_coupling.size()));
  for (double v : nominal_voltage) {
    require(v >= 0.9 && v <= 1.1, "nominal_voltage", format_double(v, 6) + " outside [0.9, 1.1] pu");
  }
  for (double c : fault_coupling) {
    require(c >= 0.0 && c <= 1.0, "fault_coupling", format_double(c, 6) + " outside [0, 1]");
  }
}

void TraceScenario::validate() const {
  bus_case.validate();
  require(std::isfinite(dt) && dt > 0.0, "dt", "must be positive");
  require(std::isfinite(horizon) && dt < horizon, "horizon", "must exceed dt");
  require(fault_start >= 0.0 && fault_start < horizon, "fault_start", "must lie in [0, horizon)");
  require(fault_bus < bus_case.bus_count, "fault_bus",
          std::to_string(fault_bus) + " >= bus_count " + std::to_string(bus_case.bus_count));
  require(std::isfinite(fault_depth) && fault_depth >= 0.0, "fault_depth", "must be non-negative");
  require(std::isfinite(fault_freq) && fault_freq >= 0.0, "fault_freq", "must be non-negative");
  require(std::isfinite(fault_damping) && fault_damping >= 0.0, "fault_damping", "must be non-negative");
  require(std::isfinite(sensor_noise_std) && sensor_noise_std >= 0.0, "sensor_noise_std",
          "must be non-negative");
}

std::size_t TraceScenario::frame_count() const {
  return static_cast<std::size_t>(std::llround(horizon / dt));
}

double fault_transient(const TraceScenario& s, double tau) {
  return s.fault_depth * std::exp(-s.fault_damping * tau) *
         std::abs(std::cos(2.0 * std::numbers::pi * s.fault_freq * tau));
}

MeasurementTrace generate_trace(const TraceScenario& scenario) {
  scenario.validate();
  const std::size_t n = scenario.frame_count();
  const auto& bc = scenario.bus_case;

  MeasurementTrace trace;
  trace.fault_start = scenario.fault_start;
  trace.times.resize(n);
  trace.frames.assign(n, Frame(bc.bus_count));
  trace.labels.resize(n);

  std::mt19937_64 rng(scenario.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t t = 0; t < n; ++t) {
    const double time = static_cast<double>(t) * scenario.dt;
    const bool faulted = time >= scenario.fault_start;
    const double sag = faulted ? fault_transient(scenario, time - scenario.fault_start) : 0.0;
    trace.times[t] = time;
    trace.labels[t] = faulted ? 1 : 0;
    for (std::size_t i = 0; i < bc.bus_count; ++i) {
      const double noise = scenario.sensor_noise_std * unit(rng);
      trace.frames[t][i] = bc.nominal_voltage[i] - bc.fault_coupling[i] * sag + noise;
    }
  }
  return trace;
}

BusCase parse_case(std::string_view text) {
  BusCase bc;
  bool have_count = false, have_voltage = false, have_coupling = false;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key == "bus_count") {
      const auto v = parse_numbers(value, line_no, key);
      if (v.size() != 1 || v[0] < 1 || v[0] != std::floor(v[0])) {
        throw ParseError(line_no, "bus_count: expected one positive integer");
      }
      bc.bus_count = static_cast<std::size_t>(v[0]);
      have_count = true;
    } else if (key == "nominal_voltage") {
      bc.nominal_voltage = parse_numbers(value, line_no, key);
      have_voltage = true;
    } else if (key == "fault_coupling") {
      bc.fault_coupling = parse_numbers(value, line_no, key);
      have_coupling = true;
    } else {
      throw ParseError(line_no, "unknown key '" + key + "'");
    }
  }
  if (!have_count) throw ParseError(line_no, "missing key 'bus_count'");
  if (!have_voltage) throw ParseError(line_no, "missing key 'nominal_voltage'");
  if (!have_coupling) throw ParseError(line_no, "missing key 'fault_coupling'");
  bc.validate();
  return bc;
}

BusCase load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open case file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_case(buf.str());
}

std::string format_case(const BusCase& bc) {
  std::ostringstream out;
  out << "bus_count = " << bc.bus_count << "\nnominal_voltage =";
  for (double v : bc.nominal_voltage) out << ' ' << format_double(v, 17);
  out << "\nfault_coupling =";
  for (double c : bc.fault_coupling) out << ' ' << format_double(c, 17);
  out << '\n';
  return out.str();
}

BusCase default_case() { return parse_case(kDefaultCaseText); }

TraceScenario default_scenario() {
  TraceScenario s;
  s.bus_case = default_case();
  return s;
}

void write_trace_csv(std::ostream& out, const MeasurementTrace& trace) {
  out << "time,bus,value,label\n";
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const std::string time = format_double(trace.times[t], 12);
    for (std::size_t i = 0; i < trace.frames[t].size(); ++i) {
      out << time << ',' << i << ',' << format_double(trace.frames[t][i], 12) << ','
          << trace.labels[t] << '\n';
    }
  }
}

void write_trace_csv(const std::filesystem::path& path, const MeasurementTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_trace_csv(out, trace);
  if (!out) throw IoError("write failed for " + path.string());
}

MeasurementTrace read_trace_csv(std::istream& in) {
  MeasurementTrace trace;
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || trim(line) != "time,bus,value,label") {
    throw ParseError(1, "expected header 'time,bus,value,label'");
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    double time = 0, value = 0;
    unsigned long bus = 0;
    int label = 0;
    if (std::sscanf(line.c_str(), "%lf,%lu,%lf,%d", &time, &bus, &value, &label) != 4) {
      throw ParseError(line_no, "malformed row");
    }
    if (bus == 0) {
      trace.times.push_back(time);
      trace.labels.push_back(label);
      trace.frames.emplace_back();
    }
    if (trace.frames.empty() || trace.frames.back().size() != bus) {
      throw ParseError(line_no, "rows must be ordered by time then bus");
    }
    trace.frames.back().push_back(value);
  }
  const auto first = std::find(trace.labels.begin(), trace.labels.end(), 1);
  trace.fault_start =
      first == trace.labels.end() ? 0.0 : trace.times[static_cast<std::size_t>(first - trace.labels.begin())];
  return trace;
}

std::vector<LabeledWindow> sliding_windows(const MeasurementTrace& trace, std::size_t window,
                                           std::size_t trace_index) {
  if (window == 0) throw ValidationError("window", "must be positive");
  if (trace.size() <= window) {
    throw InsufficientDataError("trace of length " + std::to_string(trace.size()) +
                                " is too short for window " + std::to_string(window));
  }
  const std::size_t buses = trace.bus_count();
  std::vector<LabeledWindow> out;
  out.reserve(trace.size() - window + 1);
  for (std::size_t end = window - 1; end < trace.size(); ++end) {
    LabeledWindow w;
    w.values.reserve(window * buses);
    for (std::size_t t = end + 1 - window; t <= end; ++t) {
      w.values.insert(w.values.end(), trace.frames[t].begin(), trace.frames[t].end());
    }
    w.label = trace.labels[end];
    w.trace_index = trace_index;
    w.end_frame = end;
    out.push_back(std::move(w));
  }
  return out;
}

DatasetSplit split_dataset(const std::vector<MeasurementTrace>& traces, std::size_t window,
                           double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("ratio", "must lie in (0, 1)");
  if (traces.size() < 2) throw InsufficientDataError("need at least two traces to split");

  std::vector<std::size_t> order(traces.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(traces.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, traces.size() - 1);

  DatasetSplit split;
  split.train_traces.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_traces.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(split.train_traces.begin(), split.train_traces.end());
  std::sort(split.test_traces.begin(), split.test_traces.end());
  for (auto idx : split.train_traces) {
    auto w = sliding_windows(traces[idx], window, idx);
    split.train.insert(split.train.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  for (auto idx : split.test_traces) {
    auto w = sliding_windows(traces[idx], window, idx);
    split.test.insert(split.test.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return split;
}

}  // namespace gridadv

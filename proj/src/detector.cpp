#include "gridadv/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>

#include "gridadv/detector_oracle.hpp"
#include "gridadv/error.hpp"

namespace gridadv {

void DetectorConfig::validate() const {
  if (window == 0) throw ValidationError("detector.window", "must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("detector.threshold", "must lie in (0, 1)");
  if (batch_size == 0) throw ValidationError("detector.batch_size", "must be positive");
  if (!(learning_rate > 0.0)) throw ValidationError("detector.learning_rate", "must be positive");
  if (!(normalization.scale > 0.0)) throw ValidationError("detector.normalization.scale", "must be positive");
  for (auto h : hidden) {
    if (h == 0) throw ValidationError("detector.hidden", "layer sizes must be positive");
  }
}

std::vector<double> featurize_window(std::span<const double> window_values, const Normalization& norm) {
  std::vector<double> f(window_values.size());
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = (window_values[k] - norm.center) / norm.scale;
  return f;
}

std::vector<double> featurize(const MeasurementTrace& trace, std::size_t t, std::size_t window,
                              const Normalization& norm) {
  if (window == 0 || t + 1 < window || t >= trace.size()) {
    throw std::out_of_range("featurize: frame " + std::to_string(t) + " out of range for window " +
                            std::to_string(window) + " over " + std::to_string(trace.size()) + " frames");
  }
  std::vector<double> f;
  f.reserve(window * trace.bus_count());
  for (std::size_t k = t + 1 - window; k <= t; ++k) {
    for (double v : trace.frames[k]) f.push_back((v - norm.center) / norm.scale);
  }
  return f;
}

DetectorModel train_detector(const std::vector<LabeledWindow>& train_set, std::size_t bus_count,
                             const DetectorConfig& config) {
  config.validate();
  if (train_set.empty()) throw InsufficientDataError("train_detector: empty training set");
  const std::size_t positives = static_cast<std::size_t>(
      std::count_if(train_set.begin(), train_set.end(), [](const auto& w) { return w.label == 1; }));
  if (positives == 0 || positives == train_set.size()) {
    throw ValidationError("train_set", "training set holds a single class");
  }
  const std::size_t input = config.window * bus_count;
  for (const auto& w : train_set) require_size(w.values.size(), input, "training window");

  std::vector<std::size_t> sizes{input};
  std::vector<Activation> acts;
  for (auto h : config.hidden) {
    sizes.push_back(h);
    acts.push_back(Activation::Relu);
  }
  sizes.push_back(1);
  acts.push_back(Activation::Sigmoid);

  DetectorModel model;
  model.net = init_mlp(sizes, acts, mix_seed(config.seed, 0x64657465));
  model.window = config.window;
  model.bus_count = bus_count;
  model.threshold = config.threshold;
  model.normalization = config.normalization;

  std::vector<std::vector<double>> features;
  features.reserve(train_set.size());
  for (const auto& w : train_set) features.push_back(featurize_window(w.values, config.normalization));

  AdamState opt = AdamState::for_network(model.net, config.learning_rate);
  std::mt19937_64 rng(mix_seed(config.seed, 0x73687566));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  double epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      auto grads = MlpGradients::zeros_like(model.net);
      for (std::size_t k = start; k < end; ++k) {
        const auto idx = order[k];
        const auto trace = forward_trace(model.net, features[idx]);
        const double p = trace.output()[0];
        const double y = train_set[idx].label;
        const double pc = std::clamp(p, 1e-12, 1.0 - 1e-12);
        epoch_loss -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
        const double g[1] = {p - y};
        backward_accumulate(model.net, trace, g, grads, GradientAt::OutputPreActivation);
      }
      grads *= 1.0 / static_cast<double>(end - start);
      adam_step(opt, model.net, grads);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss) || !all_finite(model.net)) {
      throw NumericalError("train_detector: non-finite loss at epoch " + std::to_string(epoch));
    }
  }
  model.final_loss = epoch_loss;
  return model;
}

double posterior(const DetectorModel& model, std::span<const double> features) {
  require_size(features.size(), model.window * model.bus_count, "detector features");
  return forward(model.net, features)[0];
}

double posterior_for_window(const DetectorModel& model, std::span<const double> window_values) {
  return posterior(model, featurize_window(window_values, model.normalization));
}

double frame_accuracy(const DetectorModel& model, const std::vector<LabeledWindow>& windows) {
  if (windows.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& w : windows) {
    const int predicted = posterior_for_window(model, w.values) >= model.threshold ? 1 : 0;
    if (predicted == w.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(windows.size());
}

TraceDetection summarize_detection(std::vector<double> times, std::vector<int> labels,
                                   std::vector<double> posterior, double fault_start, double threshold) {
  TraceDetection d;
  for (std::size_t k = 0; k < posterior.size(); ++k) {
    if (labels[k] == 1 && posterior[k] >= threshold) {
      d.delay = std::max(0.0, times[k] - fault_start);
      break;
    }
  }
  d.times = std::move(times);
  d.labels = std::move(labels);
  d.posterior = std::move(posterior);
  return d;
}

DetectorReport evaluate_predictor(const WindowPredictor& predictor, const std::vector<MeasurementTrace>& traces,
                                  std::size_t window, double threshold) {
  DetectorReport report;
  std::size_t frames = 0, correct = 0, negatives = 0, false_positives = 0;
  bool all_detected = true;
  double worst = 0.0;
  for (const auto& trace : traces) {
    std::vector<double> times, post;
    std::vector<int> labels;
    for (const auto& w : sliding_windows(trace, window)) {
      const double p = predictor(w.values);
      const int predicted = p >= threshold ? 1 : 0;
      ++frames;
      if (predicted == w.label) ++correct;
      if (w.label == 0) {
        ++negatives;
        if (predicted == 1) ++false_positives;
      }
      times.push_back(trace.times[w.end_frame]);
      labels.push_back(w.label);
      post.push_back(p);
    }
    auto det = summarize_detection(std::move(times), std::move(labels), std::move(post), trace.fault_start,
                                   threshold);
    if (det.delay) {
      worst = std::max(worst, *det.delay);
    } else {
      all_detected = false;
    }
    report.traces.push_back(std::move(det));
  }
  report.frame_accuracy = frames ? static_cast<double>(correct) / static_cast<double>(frames) : 0.0;
  report.false_positive_rate =
      negatives ? static_cast<double>(false_positives) / static_cast<double>(negatives) : 0.0;
  if (all_detected && !traces.empty()) report.detection_delay = worst;
  return report;
}

DetectorReport evaluate_detector(const DetectorModel& model, const std::vector<MeasurementTrace>& traces) {
  return evaluate_predictor([&](std::span<const double> w) { return posterior_for_window(model, w); }, traces,
                            model.window, model.threshold);
}

nlohmann::json report_to_json(const DetectorReport& report) {
  nlohmann::json doc;
  doc["frame_accuracy"] = report.frame_accuracy;
  doc["false_positive_rate"] = report.false_positive_rate;
  doc["detection_delay"] = report.detection_delay ? nlohmann::json(*report.detection_delay) : nlohmann::json();
  auto delays = nlohmann::json::array();
  for (const auto& t : report.traces) delays.push_back(t.delay ? nlohmann::json(*t.delay) : nlohmann::json());
  doc["trace_delays"] = delays;
  doc["trace_count"] = report.traces.size();
  return doc;
}

void write_posterior_csv(std::ostream& out, const TraceDetection& d) {
  out << "time,posterior,label\n";
  char buf[64];
  for (std::size_t k = 0; k < d.posterior.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.12g,%.12g,%d\n", d.times[k], d.posterior[k], d.labels[k]);
    out << buf;
  }
}

nlohmann::json detector_to_json(const DetectorModel& model) {
  nlohmann::json doc;
  doc["network"] = to_json(model.net);
  doc["window"] = model.window;
  doc["bus_count"] = model.bus_count;
  doc["threshold"] = model.threshold;
  doc["normalization"] = {{"center", model.normalization.center}, {"scale", model.normalization.scale}};
  doc["final_loss"] = model.final_loss;
  return doc;
}

DetectorModel detector_from_json(const nlohmann::json& doc) {
  try {
    DetectorModel m;
    m.net = mlp_from_json(doc.at("network"));
    m.window = doc.at("window").get<std::size_t>();
    m.bus_count = doc.at("bus_count").get<std::size_t>();
    m.threshold = doc.at("threshold").get<double>();
    m.normalization.center = doc.at("normalization").at("center").get<double>();
    m.normalization.scale = doc.at("normalization").at("scale").get<double>();
    m.final_loss = doc.value("final_loss", 0.0);
    require_size(m.net.input_size(), m.window * m.bus_count, "detector checkpoint input");
    require_size(m.net.output_size(), 1, "detector checkpoint output");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("detector checkpoint: ") + e.what());
  }
}

void save_detector(const std::filesystem::path& path, const DetectorModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << detector_to_json(model).dump(1) << '\n';
}

DetectorModel load_detector(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open detector checkpoint " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
  return detector_from_json(doc);
}

double DetectorOracle::posterior(std::span<const double> window_values) const {
  ++queries_;
  return posterior_for_window(*model_, window_values);
}

std::size_t DetectorOracle::window() const { return model_->window; }
std::size_t DetectorOracle::bus_count() const { return model_->bus_count; }
double DetectorOracle::threshold() const { return model_->threshold; }

}  // namespace gridadv

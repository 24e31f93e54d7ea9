#include "gridadv/neural_core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "gridadv/error.hpp"

namespace gridadv {

namespace {

double activate(Activation a, double z) {
  switch (a) {
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case Activation::Identity: return z;
  }
  return z;
}

// Derivative expressed through the post-activation value.
double activation_slope(Activation a, double out) {
  switch (a) {
    case Activation::Relu: return out > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: return 1.0 - out * out;
    case Activation::Sigmoid: return out * (1.0 - out);
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "identity") return Activation::Identity;
  throw ValidationError("activation", "unknown activation '" + name + "'");
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.biases.size();
  return n;
}

MlpGradients MlpGradients::zeros_like(const Mlp& net) {
  MlpGradients g;
  for (const auto& l : net.layers) {
    g.weights.emplace_back(l.weights.size(), 0.0);
    g.biases.emplace_back(l.biases.size(), 0.0);
  }
  return g;
}

MlpGradients& MlpGradients::operator+=(const MlpGradients& other) {
  require_size(other.weights.size(), weights.size(), "gradient layers");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    require_size(other.weights[l].size(), weights[l].size(), "gradient weights");
    require_size(other.biases[l].size(), biases[l].size(), "gradient biases");
    for (std::size_t k = 0; k < weights[l].size(); ++k) weights[l][k] += other.weights[l][k];
    for (std::size_t k = 0; k < biases[l].size(); ++k) biases[l][k] += other.biases[l][k];
  }
  return *this;
}

MlpGradients& MlpGradients::operator*=(double scale) {
  for (auto& w : weights) for (auto& v : w) v *= scale;
  for (auto& b : biases) for (auto& v : b) v *= scale;
  return *this;
}

double MlpGradients::max_abs() const {
  double m = 0.0;
  for (const auto& w : weights) for (double v : w) m = std::max(m, std::abs(v));
  for (const auto& b : biases) for (double v : b) m = std::max(m, std::abs(v));
  return m;
}

Mlp init_mlp(const std::vector<std::size_t>& layer_sizes, const std::vector<Activation>& activations,
             std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw DimensionError("init_mlp: need at least an input and an output layer");
  require_size(activations.size(), layer_sizes.size() - 1, "init_mlp activations");
  for (auto s : layer_sizes) {
    if (s == 0) throw DimensionError("init_mlp: layer sizes must be positive");
  }
  Mlp net;
  net.layer_sizes = layer_sizes;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    DenseLayer layer;
    layer.inputs = layer_sizes[l];
    layer.outputs = layer_sizes[l + 1];
    layer.activation = activations[l];
    const double limit = 1.0 / std::sqrt(static_cast<double>(layer.inputs));
    std::uniform_real_distribution<double> dist(-limit, limit);
    layer.weights.resize(layer.inputs * layer.outputs);
    for (auto& w : layer.weights) w = dist(rng);
    layer.biases.assign(layer.outputs, 0.0);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

ForwardTrace forward_trace(const Mlp& net, std::span<const double> input) {
  require_size(input.size(), net.input_size(), "forward input");
  ForwardTrace trace;
  trace.activations.reserve(net.layers.size() + 1);
  trace.activations.emplace_back(input.begin(), input.end());
  for (const auto& layer : net.layers) {
    const auto& in = trace.activations.back();
    std::vector<double> out(layer.outputs);
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double* row = layer.weights.data() + o * layer.inputs;
      double z = layer.biases[o];
      for (std::size_t i = 0; i < layer.inputs; ++i) z += row[i] * in[i];
      out[o] = activate(layer.activation, z);
    }
    trace.activations.push_back(std::move(out));
  }
  return trace;
}

std::vector<double> forward(const Mlp& net, std::span<const double> input) {
  return std::move(forward_trace(net, input).activations.back());
}

std::vector<double> backward_accumulate(const Mlp& net, const ForwardTrace& trace,
                                        std::span<const double> output_gradient, MlpGradients& acc,
                                        GradientAt at) {
  require_size(output_gradient.size(), net.output_size(), "backward output gradient");
  require_size(trace.activations.size(), net.layers.size() + 1, "backward trace");
  require_size(acc.weights.size(), net.layers.size(), "backward accumulator");

  std::vector<double> delta(output_gradient.begin(), output_gradient.end());
  std::vector<double> prev;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& layer = net.layers[l];
    const auto& out = trace.activations[l + 1];
    const auto& in = trace.activations[l];
    const bool pre_activation = at == GradientAt::OutputPreActivation && l + 1 == net.layers.size();
    if (!pre_activation) {
      for (std::size_t o = 0; o < layer.outputs; ++o) delta[o] *= activation_slope(layer.activation, out[o]);
    }
    auto& gw = acc.weights[l];
    auto& gb = acc.biases[l];
    prev.assign(layer.inputs, 0.0);
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      gb[o] += d;
      const double* row = layer.weights.data() + o * layer.inputs;
      double* grow = gw.data() + o * layer.inputs;
      for (std::size_t i = 0; i < layer.inputs; ++i) {
        grow[i] += d * in[i];
        prev[i] += d * row[i];
      }
    }
    std::swap(delta, prev);
  }
  return delta;
}

BackwardResult backward(const Mlp& net, const ForwardTrace& trace, std::span<const double> output_gradient,
                        GradientAt at) {
  BackwardResult result;
  result.params = MlpGradients::zeros_like(net);
  result.input_gradient = backward_accumulate(net, trace, output_gradient, result.params, at);
  return result;
}

BackwardResult backward(const Mlp& net, std::span<const double> input, std::span<const double> output_gradient,
                        GradientAt at) {
  return backward(net, forward_trace(net, input), output_gradient, at);
}

AdamState AdamState::for_network(const Mlp& net, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.first_moment = MlpGradients::zeros_like(net);
  s.second_moment = MlpGradients::zeros_like(net);
  return s;
}

void adam_step(AdamState& opt, Mlp& net, const MlpGradients& g) {
  require_size(g.weights.size(), net.layers.size(), "adam gradient layers");
  if (opt.first_moment.weights.empty()) {
    opt.first_moment = MlpGradients::zeros_like(net);
    opt.second_moment = MlpGradients::zeros_like(net);
  }
  require_size(opt.first_moment.weights.size(), net.layers.size(), "adam moments");
  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  auto update = [&](std::vector<double>& p, const std::vector<double>& grad, std::vector<double>& m,
                    std::vector<double>& v) {
    require_size(grad.size(), p.size(), "adam gradient");
    require_size(m.size(), p.size(), "adam moment");
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * grad[k];
      v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * grad[k] * grad[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    update(net.layers[l].weights, g.weights[l], opt.first_moment.weights[l], opt.second_moment.weights[l]);
    update(net.layers[l].biases, g.biases[l], opt.first_moment.biases[l], opt.second_moment.biases[l]);
  }
}

bool all_finite(const Mlp& net) {
  for (const auto& l : net.layers) {
    for (double w : l.weights) if (!std::isfinite(w)) return false;
    for (double b : l.biases) if (!std::isfinite(b)) return false;
  }
  return true;
}

nlohmann::json to_json(const Mlp& net) {
  nlohmann::json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  doc["layer_sizes"] = net.layer_sizes;
  auto acts = nlohmann::json::array();
  auto weights = nlohmann::json::array();
  auto biases = nlohmann::json::array();
  for (const auto& l : net.layers) {
    acts.push_back(to_string(l.activation));
    weights.push_back(l.weights);
    biases.push_back(l.biases);
  }
  doc["activations"] = acts;
  doc["weights"] = weights;
  doc["biases"] = biases;
  return doc;
}

Mlp mlp_from_json(const nlohmann::json& doc) {
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw ValidationError("format_version", "unsupported version " + std::to_string(version));
    }
    Mlp net;
    net.layer_sizes = doc.at("layer_sizes").get<std::vector<std::size_t>>();
    const auto acts = doc.at("activations").get<std::vector<std::string>>();
    const auto& weights = doc.at("weights");
    const auto& biases = doc.at("biases");
    if (net.layer_sizes.size() < 2) throw DimensionError("checkpoint: fewer than two layers");
    require_size(acts.size(), net.layer_sizes.size() - 1, "checkpoint activations");
    require_size(weights.size(), acts.size(), "checkpoint weights");
    require_size(biases.size(), acts.size(), "checkpoint biases");
    for (std::size_t l = 0; l < acts.size(); ++l) {
      DenseLayer layer;
      layer.inputs = net.layer_sizes[l];
      layer.outputs = net.layer_sizes[l + 1];
      layer.activation = activation_from_string(acts[l]);
      layer.weights = weights[l].get<std::vector<double>>();
      layer.biases = biases[l].get<std::vector<double>>();
      require_size(layer.weights.size(), layer.inputs * layer.outputs, "checkpoint layer weights");
      require_size(layer.biases.size(), layer.outputs, "checkpoint layer biases");
      net.layers.push_back(std::move(layer));
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("network checkpoint: ") + e.what());
  }
}

void save_mlp(const std::filesystem::path& path, const Mlp& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(net).dump(1) << '\n';
}

Mlp load_mlp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
  return mlp_from_json(doc);
}

}  // namespace gridadv

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace gridadv {

enum class Activation { Relu, Tanh, Sigmoid, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Dense layer; weights are row-major (outputs x inputs).
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;
  std::vector<double> biases;
  Activation activation = Activation::Identity;
};

struct Mlp {
  std::vector<std::size_t> layer_sizes;
  std::vector<DenseLayer> layers;

  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t parameter_count() const;
  Activation output_activation() const { return layers.back().activation; }
};

// Parameter-shaped buffer used for gradients and optimizer moments.
struct MlpGradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static MlpGradients zeros_like(const Mlp& net);
  MlpGradients& operator+=(const MlpGradients& other);
  MlpGradients& operator*=(double scale);
  double max_abs() const;
};

/// Fan-in uniform weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero biases.
/// `activations` has one entry per weight layer.
Mlp init_mlp(const std::vector<std::size_t>& layer_sizes, const std::vector<Activation>& activations,
             std::uint64_t seed);

std::vector<double> forward(const Mlp& net, std::span<const double> input);

// Post-activation values of every layer, input first; needed by backward.
struct ForwardTrace {
  std::vector<std::vector<double>> activations;
  const std::vector<double>& output() const { return activations.back(); }
};

ForwardTrace forward_trace(const Mlp& net, std::span<const double> input);

// Whether the supplied gradient is dL/d(output) or dL/d(pre-activation of the
// output layer). The latter avoids the 0 * inf of sigmoid + cross-entropy.
enum class GradientAt { Output, OutputPreActivation };

struct BackwardResult {
  MlpGradients params;
  std::vector<double> input_gradient;
};

BackwardResult backward(const Mlp& net, const ForwardTrace& trace, std::span<const double> output_gradient,
                        GradientAt at = GradientAt::Output);
BackwardResult backward(const Mlp& net, std::span<const double> input, std::span<const double> output_gradient,
                        GradientAt at = GradientAt::Output);

/// Adds the parameter gradients into `accumulator` (shaped like `net`) and
/// returns the input gradient. Same arithmetic as backward().
std::vector<double> backward_accumulate(const Mlp& net, const ForwardTrace& trace,
                                        std::span<const double> output_gradient, MlpGradients& accumulator,
                                        GradientAt at = GradientAt::Output);

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  MlpGradients first_moment;
  MlpGradients second_moment;

  static AdamState for_network(const Mlp& net, double learning_rate = 1e-3);
};

/// One bias-corrected Adam descent step on `net`.
void adam_step(AdamState& opt, Mlp& net, const MlpGradients& gradients);

bool all_finite(const Mlp& net);

// Checkpoint document: format_version, layer_sizes, activations, weights
// (row-major per layer), biases.
inline constexpr int kCheckpointFormatVersion = 1;
nlohmann::json to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& doc);
void save_mlp(const std::filesystem::path& path, const Mlp& net);
Mlp load_mlp(const std::filesystem::path& path);

}  // namespace gridadv

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csihar/csi.hpp"
#include "csihar/lif.hpp"
#include "csihar/tensor.hpp"

namespace csihar {

enum class SnnVariant { ModelI, ModelII, FeatureHead };

// Geometry and spiking configuration of the spiking classifiers. A window
// must carry intervals * frames_per_interval frames. `step` repeats each
// interval's frames that many times through the first spiking layer.
struct SnnModelSpec {
  SnnVariant variant = SnnVariant::ModelII;
  std::size_t hidden_dim = 50;
  std::size_t intervals = 10;
  std::size_t frames_per_interval = 9;
  LifConfig lif{};
  std::size_t step = 5;
  // FeatureHead output arity (number of predicate values).
  std::size_t feature_arity = 2;
};

void validate(const SnnModelSpec& spec);

struct CnnSpec {
  std::size_t last_channel = 65;
  std::size_t conv_layers = 3;
  std::size_t kernel = 3;
};

void validate(const CnnSpec& spec);

// Channel count per conv layer, front to back. Derived from last_channel by
// repeated floored division by 1.5 toward the front; throws when a layer
// would get fewer than one channel.
std::vector<std::size_t> channel_schedule(const CnnSpec& spec);

// Named parameter tensors in a fixed construction order, so the flat tensor
// list can double as the parameter vector for gradient checks and SGD.
struct ModelParams {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  void add(std::string name, Tensor t);
  std::size_t index_of(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
};

// Same names and shapes as `base`, tensors replaced by `tensors`.
ModelParams with_tensors(const ModelParams& base, std::vector<Tensor> tensors);

// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer; the antenna
// weights start at exactly 1/antennas.
ModelParams init_snn_params(const SnnModelSpec& spec, std::size_t subcarriers,
                            std::size_t antennas, std::uint64_t seed);
ModelParams init_cnn_params(const CnnSpec& spec, std::size_t frames,
                            std::size_t subcarriers, std::size_t antennas,
                            std::uint64_t seed);

// Leaf tensor of shape [frames][subcarriers][antennas] for one window.
Tensor window_tensor(const CsiWindow& window);

// Weighted sum across the antenna axis: [F][S][A] -> [F][S].
Tensor antenna_average(Tape& tape, const Tensor& window, const Tensor& weights);

struct SnnOutputs {
  // Window-level distribution: 7 classes for ModelI/ModelII, feature_arity
  // values for FeatureHead.
  Tensor distribution;
  // FeatureHead only: one distribution per interval step, from that step's
  // spikes of the second spiking layer.
  std::vector<Tensor> interval_distributions;
  // Total spike count of the first spiking layer across the whole window.
  double first_layer_spikes = 0.0;
};

SnnOutputs snn_outputs(Tape& tape, const Tensor& window,
                       const SnnModelSpec& spec, const ModelParams& params,
                       SpikeMode mode = SpikeMode::Binary);

Tensor snn_forward(Tape& tape, const Tensor& window, const SnnModelSpec& spec,
                   const ModelParams& params,
                   SpikeMode mode = SpikeMode::Binary);

// Stride-1 convolution with kernel/2 zero padding. input [C][H][W],
// weight [Co][C][K][K], bias [Co] -> [Co][H][W].
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight,
              const Tensor& bias);

// 2x2 max pooling with stride 2; trailing odd row/column dropped.
Tensor maxpool2d(Tape& tape, const Tensor& input);

Tensor cnn_forward(Tape& tape, const Tensor& window, const CnnSpec& spec,
                   const ModelParams& params);

// Checkpoint codec. Little-endian layout: magic "SPKW", u32 tensor count,
// then per tensor u32 rank, u32 dims..., f64 values. Names are not stored;
// apply_checkpoint matches tensors to `params` by order and shape.
void save_params(const ModelParams& params, const std::string& path);
std::vector<Tensor> load_param_tensors(const std::string& path);
void apply_checkpoint(ModelParams& params, const std::string& path);

}  // namespace csihar

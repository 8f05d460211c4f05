#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "csihar/tensor.hpp"

namespace csihar {

enum class LifReset { Zero, Subtract };

struct LifConfig {
  double beta = 0.9;
  double threshold = 1.0;
  LifReset reset = LifReset::Zero;
};

// Membrane state after a run plus the emitted spike train.
struct SpikeState {
  std::vector<double> potentials;            // [neurons], U after the last step
  std::vector<std::vector<double>> spikes;   // [time][neurons], each 0 or 1
};

// Leaky integrate-and-fire dynamics, one row of `currents` per time step:
//   U <- beta * U + I[t]
//   spike when U > threshold (strict), emitted at the crossing step
//   reset before the next integration: Zero sets U to 0, Subtract removes
//   one threshold
// `initial_potentials` defaults to all zeros; passing the potentials of a
// previous call continues that run exactly.
SpikeState lif_forward(const std::vector<std::vector<double>>& currents,
                       const LifConfig& config,
                       std::vector<double> initial_potentials = {});

// d/dU of the arctan spike relaxation: 1 / (1 + pi^2 U^2).
// Callers pass U relative to the threshold so the peak sits at the boundary.
double surrogate_grad(double shifted_potential);

// Binary emits hard spikes and is the training/eval behaviour. Smooth swaps
// the forward for 1/2 + arctan(pi*u)/pi, whose exact derivative is
// surrogate_grad, making finite-difference checks well posed. Both modes use
// surrogate_grad in backward.
enum class SpikeMode { Binary, Smooth };

// On-tape threshold crossing of an already shifted potential (U - threshold).
Tensor spike_threshold(Tape& tape, const Tensor& shifted_potential,
                       SpikeMode mode = SpikeMode::Binary);

struct LifStepResult {
  Tensor spikes;
  Tensor potential;
};

// Tape-recorded counterpart of lif_forward, stepped manually so models can
// interleave layers. Holds the constant tensors a step needs so repeated
// steps do not grow the tape with duplicate leaves.
class LifCell {
 public:
  LifCell(LifConfig config, std::size_t neurons,
          SpikeMode mode = SpikeMode::Binary);

  const LifConfig& config() const { return config_; }
  Tensor initial_potential() const;
  LifStepResult step(Tape& tape, const Tensor& current,
                     const Tensor& potential) const;

 private:
  LifConfig config_;
  SpikeMode mode_;
  std::size_t neurons_;
  Tensor threshold_;
  Tensor ones_;
};

void validate(const LifConfig& config);

}  // namespace csihar

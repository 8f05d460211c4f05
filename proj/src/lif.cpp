#include "csihar/lif.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace csihar {

void validate(const LifConfig& config) {
  if (!(config.beta > 0.0 && config.beta <= 1.0)) {
    throw std::invalid_argument("lif: beta must be in (0,1], got " +
                                std::to_string(config.beta));
  }
  if (!(config.threshold > 0.0)) {
    throw std::invalid_argument("lif: threshold must be positive, got " +
                                std::to_string(config.threshold));
  }
}

SpikeState lif_forward(const std::vector<std::vector<double>>& currents,
                       const LifConfig& config,
                       std::vector<double> initial_potentials) {
  validate(config);
  if (currents.empty()) {
    throw std::invalid_argument("lif_forward: need at least one time step");
  }
  std::size_t neurons = currents.front().size();
  if (initial_potentials.empty()) {
    initial_potentials.assign(neurons, 0.0);
  }
  if (initial_potentials.size() != neurons) {
    throw std::invalid_argument("lif_forward: initial potential count " +
                                std::to_string(initial_potentials.size()) +
                                " for " + std::to_string(neurons) + " neurons");
  }

  SpikeState state;
  state.potentials = std::move(initial_potentials);
  state.spikes.reserve(currents.size());
  for (const auto& row : currents) {
    if (row.size() != neurons) {
      throw std::invalid_argument("lif_forward: ragged current row");
    }
    std::vector<double> step_spikes(neurons, 0.0);
    for (std::size_t n = 0; n < neurons; ++n) {
      if (!std::isfinite(row[n])) {
        throw std::domain_error("lif_forward: non-finite input current");
      }
      double u = config.beta * state.potentials[n] + row[n];
      if (u > config.threshold) {
        step_spikes[n] = 1.0;
        u = config.reset == LifReset::Zero ? 0.0 : u - config.threshold;
      }
      state.potentials[n] = u;
    }
    state.spikes.push_back(std::move(step_spikes));
  }
  return state;
}

double surrogate_grad(double shifted_potential) {
  double pu = std::numbers::pi * shifted_potential;
  return 1.0 / (1.0 + pu * pu);
}

Tensor spike_threshold(Tape& tape, const Tensor& shifted_potential,
                       SpikeMode mode) {
  const auto& u = shifted_potential.values();
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (mode == SpikeMode::Binary) {
      out[i] = u[i] > 0.0 ? 1.0 : 0.0;
    } else {
      out[i] = 0.5 + std::atan(std::numbers::pi * u[i]) / std::numbers::pi;
    }
  }
  return tape.custom(
      "spike_threshold", {shifted_potential}, shifted_potential.shape(),
      std::move(out),
      [shifted_potential](const std::vector<double>& g,
                          const std::vector<std::span<double>>& gin) {
        const auto& u = shifted_potential.values();
        for (std::size_t i = 0; i < g.size(); ++i) {
          gin[0][i] += g[i] * surrogate_grad(u[i]);
        }
      });
}

LifCell::LifCell(LifConfig config, std::size_t neurons, SpikeMode mode)
    : config_(config), mode_(mode), neurons_(neurons) {
  validate(config_);
  threshold_ = Tensor::full({neurons}, config_.threshold);
  ones_ = Tensor::full({neurons}, 1.0);
}

Tensor LifCell::initial_potential() const { return Tensor::zeros({neurons_}); }

LifStepResult LifCell::step(Tape& tape, const Tensor& current,
                            const Tensor& potential) const {
  if (current.size() != neurons_ || potential.size() != neurons_) {
    throw std::invalid_argument(
        "lif step: expected " + std::to_string(neurons_) + " neurons, got " +
        shape_to_string(current.shape()) + " current and " +
        shape_to_string(potential.shape()) + " potential");
  }
  Tensor u = tape.add(tape.scalar_mul(potential, config_.beta), current);
  Tensor spikes = spike_threshold(tape, tape.sub(u, threshold_), mode_);
  Tensor next;
  if (config_.reset == LifReset::Zero) {
    next = tape.mul(u, tape.sub(ones_, spikes));
  } else {
    next = tape.sub(u, tape.scalar_mul(spikes, config_.threshold));
  }
  return {spikes, next};
}

}  // namespace csihar

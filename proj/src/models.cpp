#include "csihar/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "io_util.hpp"

namespace csihar {

void validate(const SnnModelSpec& spec) {
  validate(spec.lif);
  if (spec.hidden_dim < 1) {
    throw std::invalid_argument("snn spec: hidden_dim must be >= 1");
  }
  if (spec.intervals < 1 || spec.frames_per_interval < 1) {
    throw std::invalid_argument("snn spec: intervals and frames_per_interval must be >= 1");
  }
  if (spec.step < 1) {
    throw std::invalid_argument("snn spec: step must be >= 1");
  }
  if (spec.variant == SnnVariant::FeatureHead && spec.feature_arity < 2) {
    throw std::invalid_argument("snn spec: feature_arity must be >= 2");
  }
}

void validate(const CnnSpec& spec) {
  if (spec.conv_layers < 1) {
    throw std::invalid_argument("cnn spec: conv_layers must be >= 1");
  }
  if (spec.kernel < 1 || spec.kernel % 2 == 0) {
    throw std::invalid_argument("cnn spec: kernel must be odd and >= 1");
  }
  if (spec.last_channel < spec.conv_layers) {
    throw std::invalid_argument("cnn spec: last_channel must be >= conv_layers");
  }
}

std::vector<std::size_t> channel_schedule(const CnnSpec& spec) {
  validate(spec);
  std::vector<std::size_t> channels(spec.conv_layers);
  std::size_t c = spec.last_channel;
  for (std::size_t i = spec.conv_layers; i-- > 0;) {
    if (c < 1) {
      throw std::invalid_argument(
          "cnn spec: channel schedule hits zero at layer " +
          std::to_string(i + 1) + " (last_channel " +
          std::to_string(spec.last_channel) + ")");
    }
    channels[i] = c;
    c = static_cast<std::size_t>(
        std::floor(static_cast<double>(c) / 1.5));
  }
  for (std::size_t i = 1; i < channels.size(); ++i) {
    if (channels[i] <= channels[i - 1]) {
      throw std::invalid_argument("cnn spec: channel schedule not increasing");
    }
  }
  return channels;
}

void ModelParams::add(std::string name, Tensor t) {
  names.push_back(std::move(name));
  tensors.push_back(std::move(t));
}

std::size_t ModelParams::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw std::invalid_argument("params: no tensor named '" + name + "'");
}

const Tensor& ModelParams::at(const std::string& name) const {
  return tensors[index_of(name)];
}

ModelParams with_tensors(const ModelParams& base, std::vector<Tensor> tensors) {
  if (tensors.size() != base.tensors.size()) {
    throw std::invalid_argument("params: expected " +
                                std::to_string(base.tensors.size()) +
                                " tensors, got " +
                                std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].shape() != base.tensors[i].shape()) {
      throw std::invalid_argument("params: shape mismatch for '" +
                                  base.names[i] + "'");
    }
  }
  ModelParams out;
  out.names = base.names;
  out.tensors = std::move(tensors);
  return out;
}

namespace {

Tensor uniform_init(std::vector<std::size_t> shape, std::size_t fan_in,
                    std::mt19937_64& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> values(n);
  for (double& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

}  // namespace

ModelParams init_snn_params(const SnnModelSpec& spec, std::size_t subcarriers,
                            std::size_t antennas, std::uint64_t seed) {
  validate(spec);
  if (subcarriers < 1 || antennas < 1) {
    throw std::invalid_argument("snn params: need >= 1 subcarrier and antenna");
  }
  std::mt19937_64 rng(seed);
  ModelParams params;
  params.add("antenna_weights",
             Tensor::full({antennas}, 1.0 / static_cast<double>(antennas), true));

  std::size_t frames = spec.intervals * spec.frames_per_interval;
  std::size_t in_dim =
      spec.variant == SnnVariant::ModelI ? frames * subcarriers : subcarriers;
  std::size_t out1 = spec.variant == SnnVariant::FeatureHead
                         ? spec.feature_arity
                         : spec.hidden_dim;
  params.add("w1", uniform_init({in_dim, out1}, in_dim, rng));
  params.add("b1", uniform_init({out1}, in_dim, rng));
  if (spec.variant != SnnVariant::FeatureHead) {
    params.add("w2", uniform_init({spec.hidden_dim, kActivityCount},
                                  spec.hidden_dim, rng));
    params.add("b2", uniform_init({kActivityCount}, spec.hidden_dim, rng));
  }
  return params;
}

ModelParams init_cnn_params(const CnnSpec& spec, std::size_t frames,
                            std::size_t subcarriers, std::size_t antennas,
                            std::uint64_t seed) {
  std::vector<std::size_t> channels = channel_schedule(spec);
  std::mt19937_64 rng(seed);
  ModelParams params;
  std::size_t h = frames, w = subcarriers, in_ch = antennas;
  for (std::size_t layer = 0; layer < channels.size(); ++layer) {
    std::size_t out_ch = channels[layer];
    std::size_t fan_in = in_ch * spec.kernel * spec.kernel;
    params.add("conv" + std::to_string(layer + 1) + "_w",
               uniform_init({out_ch, in_ch, spec.kernel, spec.kernel}, fan_in,
                            rng));
    params.add("conv" + std::to_string(layer + 1) + "_b",
               uniform_init({out_ch}, fan_in, rng));
    h /= 2;
    w /= 2;
    if (h < 1 || w < 1) {
      throw std::invalid_argument("cnn params: input " +
                                  std::to_string(frames) + "x" +
                                  std::to_string(subcarriers) +
                                  " too small for " +
                                  std::to_string(channels.size()) +
                                  " pooling layers");
    }
    in_ch = out_ch;
  }
  std::size_t flat = in_ch * h * w;
  params.add("fc1_w", uniform_init({flat, spec.last_channel}, flat, rng));
  params.add("fc1_b", uniform_init({spec.last_channel}, flat, rng));
  params.add("fc2_w", uniform_init({spec.last_channel, kActivityCount},
                                   spec.last_channel, rng));
  params.add("fc2_b", uniform_init({kActivityCount}, spec.last_channel, rng));
  return params;
}

Tensor window_tensor(const CsiWindow& window) {
  if (window.values.size() !=
      window.frames * window.subcarriers * window.antennas) {
    throw std::invalid_argument("window_tensor: value count mismatch");
  }
  return Tensor({window.frames, window.subcarriers, window.antennas},
                window.values);
}

Tensor antenna_average(Tape& tape, const Tensor& window,
                       const Tensor& weights) {
  if (window.rank() != 3) {
    throw std::invalid_argument("antenna_average: expected rank-3 window, got " +
                                shape_to_string(window.shape()));
  }
  std::size_t frames = window.shape()[0];
  std::size_t subcarriers = window.shape()[1];
  std::size_t antennas = window.shape()[2];
  if (weights.shape() != std::vector<std::size_t>{antennas}) {
    throw std::invalid_argument("antenna_average: " +
                                std::to_string(antennas) + " antennas but " +
                                std::to_string(weights.size()) + " weights");
  }
  Tensor flat = tape.reshape(window, {frames * subcarriers, antennas});
  Tensor mixed = tape.matmul(flat, weights);
  return tape.reshape(mixed, {frames, subcarriers});
}

namespace {

void check_window_geometry(const Tensor& window, const SnnModelSpec& spec) {
  std::size_t frames = spec.intervals * spec.frames_per_interval;
  if (window.rank() != 3 || window.shape()[0] != frames) {
    throw std::invalid_argument(
        "snn: expected [" + std::to_string(frames) +
        "][subcarriers][antennas] window, got " +
        shape_to_string(window.shape()));
  }
}

Tensor row_of(Tape& tape, const Tensor& matrix, std::size_t row) {
  std::size_t cols = matrix.shape()[1];
  return tape.reshape(tape.slice_rows(matrix, row, 1), {cols});
}

double value_sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  return s;
}

}  // namespace

SnnOutputs snn_outputs(Tape& tape, const Tensor& window,
                       const SnnModelSpec& spec, const ModelParams& params,
                       SpikeMode mode) {
  validate(spec);
  check_window_geometry(window, spec);
  std::size_t subcarriers = window.shape()[1];

  Tensor avg = antenna_average(tape, window, params.at("antenna_weights"));
  const Tensor& w1 = params.at("w1");
  const Tensor& b1 = params.at("b1");

  SnnOutputs out;

  if (spec.variant == SnnVariant::ModelI) {
    LifCell cell(spec.lif, subcarriers, mode);
    Tensor potential = cell.initial_potential();
    std::vector<Tensor> spikes;
    spikes.reserve(window.shape()[0]);
    for (std::size_t f = 0; f < window.shape()[0]; ++f) {
      LifStepResult res = cell.step(tape, row_of(tape, avg, f), potential);
      potential = res.potential;
      spikes.push_back(res.spikes);
      out.first_layer_spikes += value_sum(res.spikes);
    }
    Tensor flat = tape.concat(spikes);
    Tensor hidden = tape.add(tape.matmul(flat, w1), b1);
    Tensor logits =
        tape.add(tape.matmul(hidden, params.at("w2")), params.at("b2"));
    out.distribution = tape.softmax(logits);
    return out;
  }

  LifCell front(spec.lif, subcarriers, mode);
  double presentations =
      static_cast<double>(spec.frames_per_interval * spec.step);
  std::vector<Tensor> rates;
  rates.reserve(spec.intervals);
  for (std::size_t i = 0; i < spec.intervals; ++i) {
    Tensor potential = front.initial_potential();
    Tensor counts;
    for (std::size_t rep = 0; rep < spec.step; ++rep) {
      for (std::size_t f = 0; f < spec.frames_per_interval; ++f) {
        Tensor current =
            row_of(tape, avg, i * spec.frames_per_interval + f);
        LifStepResult res = front.step(tape, current, potential);
        potential = res.potential;
        counts = counts.defined() ? tape.add(counts, res.spikes) : res.spikes;
      }
    }
    out.first_layer_spikes += value_sum(counts);
    rates.push_back(tape.scalar_mul(counts, 1.0 / presentations));
  }

  std::size_t width = spec.variant == SnnVariant::FeatureHead
                          ? spec.feature_arity
                          : spec.hidden_dim;
  LifCell back(spec.lif, width, mode);
  Tensor potential = back.initial_potential();
  std::vector<Tensor> interval_spikes;
  interval_spikes.reserve(spec.intervals);
  for (std::size_t i = 0; i < spec.intervals; ++i) {
    Tensor current = tape.add(tape.matmul(rates[i], w1), b1);
    LifStepResult res = back.step(tape, current, potential);
    potential = res.potential;
    interval_spikes.push_back(res.spikes);
  }

  if (spec.variant == SnnVariant::ModelII) {
    Tensor logits = tape.add(tape.matmul(interval_spikes.back(), params.at("w2")),
                             params.at("b2"));
    out.distribution = tape.softmax(logits);
    return out;
  }

  Tensor total = interval_spikes[0];
  for (std::size_t i = 1; i < interval_spikes.size(); ++i) {
    total = tape.add(total, interval_spikes[i]);
  }
  out.distribution = tape.softmax(total);
  out.interval_distributions.reserve(spec.intervals);
  for (const Tensor& s : interval_spikes) {
    out.interval_distributions.push_back(tape.softmax(s));
  }
  return out;
}

Tensor snn_forward(Tape& tape, const Tensor& window, const SnnModelSpec& spec,
                   const ModelParams& params, SpikeMode mode) {
  return snn_outputs(tape, window, spec, params, mode).distribution;
}

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight,
              const Tensor& bias) {
  if (input.rank() != 3 || weight.rank() != 4 || bias.rank() != 1) {
    throw std::invalid_argument("conv2d: expected [C][H][W] input, [Co][C][K][K] weight, [Co] bias");
  }
  std::size_t C = input.shape()[0];
  std::size_t H = input.shape()[1];
  std::size_t W = input.shape()[2];
  std::size_t Co = weight.shape()[0];
  std::size_t K = weight.shape()[2];
  if (weight.shape()[1] != C || weight.shape()[3] != K || K % 2 == 0 ||
      bias.shape()[0] != Co) {
    throw std::invalid_argument("conv2d: weight " +
                                shape_to_string(weight.shape()) +
                                " does not fit input " +
                                shape_to_string(input.shape()));
  }
  std::size_t pad = K / 2;
  const std::vector<double>& in = input.values();
  const std::vector<double>& w = weight.values();
  const std::vector<double>& b = bias.values();

  std::vector<double> out(Co * H * W);
  for (std::size_t co = 0; co < Co; ++co) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        double acc = b[co];
        for (std::size_t ci = 0; ci < C; ++ci) {
          for (std::size_t ky = 0; ky < K; ++ky) {
            std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) -
                                static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t kx = 0; kx < K; ++kx) {
              std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) -
                                  static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
              acc += w[((co * C + ci) * K + ky) * K + kx] *
                     in[(ci * H + static_cast<std::size_t>(iy)) * W +
                        static_cast<std::size_t>(ix)];
            }
          }
        }
        out[(co * H + y) * W + x] = acc;
      }
    }
  }

  return tape.custom(
      "conv2d", {input, weight, bias}, {Co, H, W}, std::move(out),
      [input, weight, C, H, W, Co, K, pad](
          const std::vector<double>& g,
          const std::vector<std::span<double>>& gin) {
        const std::vector<double>& in = input.values();
        const std::vector<double>& w = weight.values();
        for (std::size_t co = 0; co < Co; ++co) {
          for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
              double go = g[(co * H + y) * W + x];
              if (go == 0.0) continue;
              gin[2][co] += go;
              for (std::size_t ci = 0; ci < C; ++ci) {
                for (std::size_t ky = 0; ky < K; ++ky) {
                  std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) -
                                      static_cast<std::ptrdiff_t>(pad);
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                  for (std::size_t kx = 0; kx < K; ++kx) {
                    std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) -
                                        static_cast<std::ptrdiff_t>(pad);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W))
                      continue;
                    std::size_t ii =
                        (ci * H + static_cast<std::size_t>(iy)) * W +
                        static_cast<std::size_t>(ix);
                    std::size_t wi = ((co * C + ci) * K + ky) * K + kx;
                    gin[0][ii] += w[wi] * go;
                    gin[1][wi] += in[ii] * go;
                  }
                }
              }
            }
          }
        }
      });
}

Tensor maxpool2d(Tape& tape, const Tensor& input) {
  if (input.rank() != 3) {
    throw std::invalid_argument("maxpool2d: expected [C][H][W], got " +
                                shape_to_string(input.shape()));
  }
  std::size_t C = input.shape()[0];
  std::size_t H = input.shape()[1];
  std::size_t W = input.shape()[2];
  std::size_t Ho = H / 2;
  std::size_t Wo = W / 2;
  if (Ho < 1 || Wo < 1) {
    throw std::invalid_argument("maxpool2d: input " +
                                shape_to_string(input.shape()) +
                                " too small to pool");
  }
  const std::vector<double>& in = input.values();
  std::vector<double> out(C * Ho * Wo);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < Ho; ++y) {
      for (std::size_t x = 0; x < Wo; ++x) {
        std::size_t best_idx = (c * H + 2 * y) * W + 2 * x;
        double best = in[best_idx];
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            std::size_t idx = (c * H + 2 * y + dy) * W + 2 * x + dx;
            if (in[idx] > best) {
              best = in[idx];
              best_idx = idx;
            }
          }
        }
        std::size_t oi = (c * Ho + y) * Wo + x;
        out[oi] = best;
        argmax[oi] = best_idx;
      }
    }
  }
  return tape.custom("maxpool2d", {input}, {C, Ho, Wo}, std::move(out),
                     [argmax = std::move(argmax)](
                         const std::vector<double>& g,
                         const std::vector<std::span<double>>& gin) {
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         gin[0][argmax[i]] += g[i];
                       }
                     });
}

namespace {

// [F][S][A] window to channels-first [A][F][S] image.
Tensor to_channels_first(Tape& tape, const Tensor& window) {
  std::size_t F = window.shape()[0];
  std::size_t S = window.shape()[1];
  std::size_t A = window.shape()[2];
  const std::vector<double>& in = window.values();
  std::vector<double> out(in.size());
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < A; ++a) {
        out[(a * F + f) * S + s] = in[(f * S + s) * A + a];
      }
    }
  }
  return tape.custom("channels_first", {window}, {A, F, S}, std::move(out),
                     [F, S, A](const std::vector<double>& g,
                               const std::vector<std::span<double>>& gin) {
                       for (std::size_t f = 0; f < F; ++f) {
                         for (std::size_t s = 0; s < S; ++s) {
                           for (std::size_t a = 0; a < A; ++a) {
                             gin[0][(f * S + s) * A + a] +=
                                 g[(a * F + f) * S + s];
                           }
                         }
                       }
                     });
}

}  // namespace

Tensor cnn_forward(Tape& tape, const Tensor& window, const CnnSpec& spec,
                   const ModelParams& params) {
  if (window.rank() != 3) {
    throw std::invalid_argument("cnn: expected rank-3 window, got " +
                                shape_to_string(window.shape()));
  }
  std::vector<std::size_t> channels = channel_schedule(spec);
  Tensor x = to_channels_first(tape, window);
  for (std::size_t layer = 0; layer < channels.size(); ++layer) {
    const std::string id = std::to_string(layer + 1);
    x = conv2d(tape, x, params.at("conv" + id + "_w"),
               params.at("conv" + id + "_b"));
    x = tape.relu(x);
    x = maxpool2d(tape, x);
  }
  Tensor flat = tape.reshape(x, {x.size()});
  Tensor hidden = tape.add(tape.matmul(flat, params.at("fc1_w")),
                           params.at("fc1_b"));
  Tensor logits = tape.add(tape.matmul(hidden, params.at("fc2_w")),
                           params.at("fc2_b"));
  return tape.softmax(logits);
}

void save_params(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("save_params: cannot open " + path);
  }
  out.write("SPKW", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(params.tensors.size()));
  for (const Tensor& t : params.tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) {
      detail::put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (double v : t.values()) {
      detail::put_f64(out, v);
    }
  }
  if (!out) {
    throw std::runtime_error("save_params: write failed for " + path);
  }
}

std::vector<Tensor> load_param_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("load_params: cannot open " + path);
  }
  detail::ByteReader r(in, path);
  r.magic("SPKW");
  std::uint32_t count = r.u32();
  std::vector<Tensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t rank = r.u32();
    if (rank > 8) {
      throw std::runtime_error(path + ": implausible rank " +
                               std::to_string(rank) + " at byte " +
                               std::to_string(r.offset() - 4));
    }
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = r.u32();
      n *= shape[d];
    }
    if (n > (std::size_t{1} << 28)) {
      throw std::runtime_error(path + ": implausible tensor size at byte " +
                               std::to_string(r.offset()));
    }
    std::vector<double> values(n);
    for (std::size_t v = 0; v < n; ++v) values[v] = r.f64();
    tensors.emplace_back(std::move(shape), std::move(values), true);
  }
  r.expect_eof();
  return tensors;
}

void apply_checkpoint(ModelParams& params, const std::string& path) {
  std::vector<Tensor> loaded = load_param_tensors(path);
  if (loaded.size() != params.tensors.size()) {
    throw std::runtime_error(path + ": checkpoint has " +
                             std::to_string(loaded.size()) + " tensors, model " +
                             std::to_string(params.tensors.size()));
  }
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    if (loaded[i].shape() != params.tensors[i].shape()) {
      throw std::runtime_error(path + ": shape mismatch for '" +
                               params.names[i] + "': checkpoint " +
                               shape_to_string(loaded[i].shape()) + ", model " +
                               shape_to_string(params.tensors[i].shape()));
    }
  }
  params.tensors = std::move(loaded);
}

}  // namespace csihar

#include "csihar/csi.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace csihar {

namespace {

// Neumaier compensated summation; keeps long means stable enough that mean
// preservation under Mean downsampling survives at ~1e-26 squared error.
double stable_sum(const double* data, std::size_t n, std::size_t stride) {
  double sum = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = data[i * stride];
    double t = sum + v;
    if (std::fabs(sum) >= std::fabs(v)) {
      comp += (sum - t) + v;
    } else {
      comp += (v - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

struct SeriesStats {
  double mean;
  double stddev;
  double norm1_diff;
};

SeriesStats series_stats(const double* data, std::size_t n,
                         std::size_t stride) {
  SeriesStats s{};
  s.mean = stable_sum(data, n, stride) / static_cast<double>(n);
  double sq = 0.0;
  double norm1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = data[i * stride] - s.mean;
    sq += d * d;
    if (i + 1 < n) norm1 += std::fabs(data[(i + 1) * stride] - data[i * stride]);
  }
  s.stddev = std::sqrt(sq / static_cast<double>(n));
  s.norm1_diff = norm1;
  return s;
}

double aggregate(const std::vector<double>& group, DownsampleMode mode) {
  switch (mode) {
    case DownsampleMode::Mean: {
      double sum = 0.0;
      for (double v : group) sum += v;
      return sum / static_cast<double>(group.size());
    }
    case DownsampleMode::Min:
      return *std::min_element(group.begin(), group.end());
    case DownsampleMode::Max:
      return *std::max_element(group.begin(), group.end());
    case DownsampleMode::Median: {
      std::vector<double> sorted(group);
      std::sort(sorted.begin(), sorted.end());
      std::size_t mid = sorted.size() / 2;
      if (sorted.size() % 2 == 1) return sorted[mid];
      return 0.5 * (sorted[mid - 1] + sorted[mid]);
    }
  }
  throw std::invalid_argument("downsample: unknown mode");
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft_inplace(std::vector<std::complex<double>>& a) {
  std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    std::complex<double> wlen(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Frame-wise mean across all (subcarrier, antenna) cells.
std::vector<double> cell_mean_series(const CsiRecording& rec) {
  std::vector<double> out(rec.frames);
  std::size_t cells = rec.subcarriers * rec.antennas;
  for (std::size_t f = 0; f < rec.frames; ++f) {
    out[f] = stable_sum(rec.magnitudes.data() + f * cells, cells, 1) /
             static_cast<double>(cells);
  }
  return out;
}

}  // namespace

void validate(const CsiRecording& rec) {
  if (rec.sample_rate <= 0.0) {
    throw std::invalid_argument("recording: sample rate must be positive");
  }
  if (rec.magnitudes.size() != rec.frames * rec.subcarriers * rec.antennas) {
    throw std::invalid_argument(
        "recording: magnitude count " + std::to_string(rec.magnitudes.size()) +
        " does not match " + std::to_string(rec.frames) + "x" +
        std::to_string(rec.subcarriers) + "x" + std::to_string(rec.antennas));
  }
  for (double v : rec.magnitudes) {
    if (!(std::isfinite(v) && v >= 0.0)) {
      throw std::invalid_argument("recording: magnitudes must be finite and >= 0");
    }
  }
}

DownsampleMode downsample_mode_from_string(const std::string& name) {
  if (name == "mean") return DownsampleMode::Mean;
  if (name == "median") return DownsampleMode::Median;
  if (name == "min") return DownsampleMode::Min;
  if (name == "max") return DownsampleMode::Max;
  throw std::invalid_argument("unknown downsample mode '" + name + "'");
}

std::string to_string(DownsampleMode mode) {
  switch (mode) {
    case DownsampleMode::Mean: return "mean";
    case DownsampleMode::Median: return "median";
    case DownsampleMode::Min: return "min";
    case DownsampleMode::Max: return "max";
  }
  return "?";
}

CsiRecording downsample(const CsiRecording& rec, std::size_t factor,
                        DownsampleMode mode) {
  if (factor < 1) {
    throw std::invalid_argument("downsample: factor must be >= 1");
  }
  if (rec.frames < factor) {
    throw std::invalid_argument("downsample: " + std::to_string(rec.frames) +
                                " frames is fewer than factor " +
                                std::to_string(factor));
  }
  CsiRecording out;
  out.frames = rec.frames / factor;
  out.subcarriers = rec.subcarriers;
  out.antennas = rec.antennas;
  out.sample_rate = rec.sample_rate / static_cast<double>(factor);
  out.label = rec.label;
  out.magnitudes.resize(out.frames * out.subcarriers * out.antennas);

  std::size_t cells = rec.subcarriers * rec.antennas;
  std::vector<double> group(factor);
  for (std::size_t of = 0; of < out.frames; ++of) {
    for (std::size_t c = 0; c < cells; ++c) {
      for (std::size_t k = 0; k < factor; ++k) {
        group[k] = rec.magnitudes[(of * factor + k) * cells + c];
      }
      out.magnitudes[of * cells + c] = aggregate(group, mode);
    }
  }
  return out;
}

FidelityReport fidelity_metrics(const CsiRecording& original,
                                const CsiRecording& downsampled,
                                std::optional<std::size_t> window_len) {
  if (original.subcarriers != downsampled.subcarriers ||
      original.antennas != downsampled.antennas) {
    throw std::invalid_argument("fidelity_metrics: geometry mismatch");
  }
  if (downsampled.frames == 0 || downsampled.frames > original.frames) {
    throw std::invalid_argument("fidelity_metrics: bad frame counts");
  }
  std::size_t factor = original.frames / downsampled.frames;
  if (original.frames / factor != downsampled.frames) {
    throw std::invalid_argument(
        "fidelity_metrics: downsampled frame count does not divide original");
  }
  std::size_t cells = original.subcarriers * original.antennas;

  auto stats_over = [cells](const CsiRecording& rec, std::size_t begin,
                            std::size_t len, std::size_t cell) {
    return series_stats(rec.magnitudes.data() + begin * cells + cell, len,
                        cells);
  };

  auto compare = [&](std::size_t o_begin, std::size_t o_len,
                     std::size_t d_begin, std::size_t d_len) {
    double acc_mean = 0.0, acc_std = 0.0, acc_norm1 = 0.0;
    for (std::size_t cell = 0; cell < cells; ++cell) {
      SeriesStats so = stats_over(original, o_begin, o_len, cell);
      SeriesStats sd = stats_over(downsampled, d_begin, d_len, cell);
      double dm = so.mean - sd.mean;
      double ds = so.stddev - sd.stddev;
      double dn = so.norm1_diff - sd.norm1_diff;
      acc_mean += dm * dm;
      acc_std += ds * ds;
      acc_norm1 += dn * dn;
    }
    double denom = static_cast<double>(cells);
    return std::array<double, 3>{acc_mean / denom, acc_std / denom,
                                 acc_norm1 / denom};
  };

  FidelityReport report;
  if (!window_len) {
    auto full = compare(0, original.frames, 0, downsampled.frames);
    report.mse_mean = full[0];
    report.mse_std = full[1];
    report.mse_norm1_diff = full[2];
    return report;
  }

  std::size_t w_orig = *window_len;
  if (w_orig < factor || w_orig > original.frames) {
    throw std::invalid_argument("fidelity_metrics: bad window length " +
                                std::to_string(w_orig));
  }
  std::size_t w_down = w_orig / factor;
  std::size_t count = std::min(original.frames / w_orig,
                               downsampled.frames / w_down);
  if (count == 0) {
    throw std::invalid_argument("fidelity_metrics: window longer than data");
  }
  report.window_len = w_orig;
  for (std::size_t w = 0; w < count; ++w) {
    auto r = compare(w * w_orig, w_orig, w * w_down, w_down);
    report.per_window.push_back(r);
    report.mse_mean += r[0];
    report.mse_std += r[1];
    report.mse_norm1_diff += r[2];
  }
  report.mse_mean /= static_cast<double>(count);
  report.mse_std /= static_cast<double>(count);
  report.mse_norm1_diff /= static_cast<double>(count);
  return report;
}

std::vector<double> fft_magnitude(const std::vector<double>& series) {
  if (series.empty()) {
    throw std::invalid_argument("fft_magnitude: empty series");
  }
  std::vector<std::complex<double>> a(next_pow2(series.size()));
  for (std::size_t i = 0; i < series.size(); ++i) a[i] = series[i];
  fft_inplace(a);
  std::vector<double> mag(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) mag[i] = std::abs(a[i]);
  return mag;
}

std::vector<double> spectrum_mse(const CsiRecording& original,
                                 const CsiRecording& downsampled) {
  if (original.frames < 2 || downsampled.frames < 2) {
    throw std::invalid_argument("spectrum_mse: need at least 2 frames");
  }
  if (original.subcarriers != downsampled.subcarriers ||
      original.antennas != downsampled.antennas) {
    throw std::invalid_argument("spectrum_mse: geometry mismatch");
  }
  std::vector<double> so = cell_mean_series(original);
  std::vector<double> sd = cell_mean_series(downsampled);
  std::vector<double> mo = fft_magnitude(so);
  std::vector<double> md = fft_magnitude(sd);
  double scale_o = 1.0 / static_cast<double>(so.size());
  double scale_d = 1.0 / static_cast<double>(sd.size());

  double bin_hz_o = original.sample_rate / static_cast<double>(mo.size());
  double bin_hz_d = downsampled.sample_rate / static_cast<double>(md.size());
  std::size_t retained = md.size() / 2 + 1;
  std::size_t orig_cap = mo.size() / 2;

  std::vector<double> out(retained);
  for (std::size_t k = 0; k < retained; ++k) {
    double freq = bin_hz_d * static_cast<double>(k);
    auto j = static_cast<std::size_t>(std::llround(freq / bin_hz_o));
    j = std::min(j, orig_cap);
    double diff = mo[j] * scale_o - md[k] * scale_d;
    out[k] = diff * diff;
  }
  return out;
}

std::vector<CsiWindow> make_windows(const CsiRecording& rec,
                                    std::size_t window_frames,
                                    std::size_t stride) {
  if (stride < 1) {
    throw std::invalid_argument("make_windows: stride must be >= 1");
  }
  if (window_frames < 1 || window_frames > rec.frames) {
    throw std::invalid_argument(
        "make_windows: window of " + std::to_string(window_frames) +
        " frames in a recording of " + std::to_string(rec.frames));
  }
  std::size_t count = (rec.frames - window_frames) / stride + 1;
  std::size_t cells = rec.subcarriers * rec.antennas;
  std::vector<CsiWindow> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    CsiWindow win;
    win.frames = window_frames;
    win.subcarriers = rec.subcarriers;
    win.antennas = rec.antennas;
    win.start_frame = w * stride;
    win.label = rec.label;
    auto begin = rec.magnitudes.begin() +
                 static_cast<std::ptrdiff_t>(win.start_frame * cells);
    win.values.assign(begin,
                      begin + static_cast<std::ptrdiff_t>(window_frames * cells));
    out.push_back(std::move(win));
  }
  return out;
}

}  // namespace csihar

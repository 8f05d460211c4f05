#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "csihar/activity.hpp"
#include "csihar/pose.hpp"

namespace csihar {

// Magnitude-only CSI capture. Phase is not modelled.
struct CsiRecording {
  std::size_t frames = 0;
  std::size_t subcarriers = 0;
  std::size_t antennas = 0;
  double sample_rate = 0.0;
  std::vector<double> magnitudes;  // [frame][subcarrier][antenna]
  std::optional<Activity> label;

  double at(std::size_t f, std::size_t s, std::size_t a) const {
    return magnitudes[(f * subcarriers + s) * antennas + a];
  }
  double& at(std::size_t f, std::size_t s, std::size_t a) {
    return magnitudes[(f * subcarriers + s) * antennas + a];
  }
};

void validate(const CsiRecording& rec);

enum class DownsampleMode { Mean, Median, Min, Max };

DownsampleMode downsample_mode_from_string(const std::string& name);
std::string to_string(DownsampleMode mode);

struct SynthConfig {
  double duration_s = 80.0;
  double sample_rate = 150.0;
  std::size_t subcarriers = 64;
  std::size_t antennas = 4;
  double noise_sigma = 0.05;
};

// Deterministic synthetic capture of one activity. Subcarriers are split
// into four equal bands, one per body group; each band carries a sinusoidal
// modulation at the activity's frequency and amplitude for that group on top
// of a static per-cell base level, plus Gaussian noise. The pose stream is
// generated from the same activity model at 30 frames per second, noise
/// free. Squatting is the one activity with within-period structure: its arm
// modulation runs through the whole 3 s period while the leg modulation is
// silent for the first 0.6 s, and the pattern repeats every 3 s.
std::pair<CsiRecording, PoseSequence> synth_recording(Activity activity,
                                                      const SynthConfig& config,
                                                      std::uint64_t seed);

// Aggregates disjoint groups of `factor` consecutive frames per
// (subcarrier, antenna) cell; remainder frames are dropped and the sample
// rate is divided by the factor.
CsiRecording downsample(const CsiRecording& rec, std::size_t factor,
                        DownsampleMode mode);

struct FidelityReport {
  double mse_mean = 0.0;
  double mse_std = 0.0;
  double mse_norm1_diff = 0.0;
  // Engaged for windowed scope: per-window (mse_mean, mse_std,
  // mse_norm1_diff), with the top-level numbers averaging the windows.
  std::optional<std::size_t> window_len;
  std::vector<std::array<double, 3>> per_window;
};

// Compares per-series statistics (mean, population std, L1 norm of
// consecutive differences) between a recording and its downsampled version,
// as an MSE across all (subcarrier, antenna) series. `window_len`, counted
// in original frames, switches to windowed scope; original window w is
// compared against downsampled window w.
FidelityReport fidelity_metrics(const CsiRecording& original,
                                const CsiRecording& downsampled,
                                std::optional<std::size_t> window_len = {});

// In-place iterative radix-2 FFT helpers for real input series.
// fft_magnitude zero-pads to the next power of two and returns |X_k| for all
// bins k in [0, padded length).
std::vector<double> fft_magnitude(const std::vector<double>& series);

// Squared difference of the two amplitude spectra per retained bin. Both
// spectra come from the subcarrier-and-antenna mean series, zero-padded to a
// power of two and amplitude-normalized by the unpadded length. Retained
// bins are the downsampled spectrum's non-negative frequencies (its Nyquist
// band); each is compared against the nearest-frequency bin of the original
// spectrum.
std::vector<double> spectrum_mse(const CsiRecording& original,
                                 const CsiRecording& downsampled);

struct CsiWindow {
  std::size_t frames = 0;
  std::size_t subcarriers = 0;
  std::size_t antennas = 0;
  std::size_t start_frame = 0;
  std::vector<double> values;  // [frame][subcarrier][antenna]
  std::optional<Activity> label;
};

std::vector<CsiWindow> make_windows(const CsiRecording& rec,
                                    std::size_t window_frames,
                                    std::size_t stride);

// Binary codec. Little-endian layout: magic "CSI1", u32 frames, u32
// subcarriers, u32 antennas, f32 sample rate, u8 label code (255 when
// unlabeled), then frames*subcarriers*antennas f32 magnitudes in
// [frame][subcarrier][antenna] order. Magnitudes are quantized to f32, so
// save/load is the identity for data that is already f32-representable
// (everything synth_recording or load_recording produced).
void save_recording(const CsiRecording& rec, const std::string& path);
CsiRecording load_recording(const std::string& path);

void save_pose(const PoseSequence& pose, const std::string& path);
PoseSequence load_pose(const std::string& path);

}  // namespace csihar

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "csihar/csi.hpp"

namespace csihar {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

// Per body group: CSI band amplitude, joint angle amplitude (rad), and
// modulation frequency (Hz).
struct GroupModel {
  double csi_amp;
  double angle_amp;
  double freq;
};

struct ActivityModel {
  std::array<GroupModel, kBodyGroupCount> groups;
  // Left and right limbs half a cycle apart (gait-like motion).
  bool alternate_sides;
  // Squat timing: legs silent for the first 0.6 s of every 3 s period,
  // arms modulated through the whole period.
  bool squat_phasing;
};

// Index order: Forearms, UpperArms, UpperLegs, LowerLegs.
ActivityModel model_for(Activity activity) {
  switch (activity) {
    case Activity::Walking:
      return {{{{0.05, 0.06, 1.2}, {0.05, 0.05, 1.2},
                {0.45, 0.50, 1.2}, {0.45, 0.55, 1.2}}},
              true, false};
    case Activity::Running:
      return {{{{0.30, 0.45, 2.5}, {0.25, 0.35, 2.5},
                {0.50, 0.55, 2.5}, {0.50, 0.60, 2.5}}},
              true, false};
    case Activity::Jumping:
      return {{{{0.15, 0.15, 2.0}, {0.10, 0.10, 2.0},
                {0.45, 0.50, 2.0}, {0.50, 0.55, 2.0}}},
              false, false};
    case Activity::Squatting:
      return {{{{0.30, 0.45, 1.0}, {0.35, 0.50, 1.0},
                {0.40, 0.50, 0.625}, {0.35, 0.45, 0.625}}},
              false, true};
    case Activity::Waving:
      return {{{{0.55, 0.80, 1.8}, {0.35, 0.45, 1.8},
                {0.00, 0.02, 1.8}, {0.00, 0.02, 1.8}}},
              false, false};
    case Activity::Clapping:
      return {{{{0.50, 0.60, 3.5}, {0.12, 0.15, 3.5},
                {0.00, 0.02, 3.5}, {0.00, 0.02, 3.5}}},
              false, false};
    case Activity::Wiping:
      return {{{{0.40, 0.50, 1.0}, {0.30, 0.40, 1.0},
                {0.00, 0.02, 1.0}, {0.00, 0.02, 1.0}}},
              false, false};
  }
  throw std::invalid_argument("synth_recording: unknown activity");
}

constexpr double kSquatPeriod = 3.0;
constexpr double kSquatLegDelay = 0.6;

bool is_leg_group(std::size_t g) {
  return g == static_cast<std::size_t>(BodyGroup::UpperLegs) ||
         g == static_cast<std::size_t>(BodyGroup::LowerLegs);
}

// Unit modulation for one group at time t; `phase` shifts the carrier.
double modulation(const ActivityModel& model, std::size_t group, double t,
                  double phase) {
  double f = model.groups[group].freq;
  if (model.squat_phasing) {
    double tp = std::fmod(t, kSquatPeriod);
    if (is_leg_group(group)) {
      if (tp < kSquatLegDelay) return 0.0;
      return std::sin(kTau * f * (tp - kSquatLegDelay) + phase);
    }
    return std::sin(kTau * f * tp + phase);
  }
  return std::sin(kTau * f * t + phase);
}

double base_level(std::size_t s, std::size_t a) {
  return 0.8 * (1.0 + 0.15 * std::sin(1.7 * static_cast<double>(s) +
                                      0.9 * static_cast<double>(a)));
}

struct Joint {
  double x;
  double y;
};

void write_joint(PoseSequence& pose, std::size_t frame, std::size_t kp,
                 Joint j) {
  pose.coords[(frame * kKeypointCount + kp) * 2] = j.x;
  pose.coords[(frame * kKeypointCount + kp) * 2 + 1] = j.y;
}

}  // namespace

std::pair<CsiRecording, PoseSequence> synth_recording(Activity activity,
                                                      const SynthConfig& config,
                                                      std::uint64_t seed) {
  if (config.duration_s <= 0.0 || config.sample_rate <= 0.0) {
    throw std::invalid_argument("synth_recording: duration and rate must be positive");
  }
  if (config.subcarriers < 1 || config.antennas < 1) {
    throw std::invalid_argument("synth_recording: need >= 1 subcarrier and antenna");
  }
  if (config.noise_sigma < 0.0) {
    throw std::invalid_argument("synth_recording: noise sigma must be >= 0");
  }
  ActivityModel model = model_for(activity);

  CsiRecording rec;
  rec.frames = static_cast<std::size_t>(std::llround(config.duration_s *
                                                     config.sample_rate));
  rec.subcarriers = config.subcarriers;
  rec.antennas = config.antennas;
  rec.sample_rate = config.sample_rate;
  rec.label = activity;
  rec.magnitudes.resize(rec.frames * rec.subcarriers * rec.antennas);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::size_t band_size = std::max<std::size_t>(1, config.subcarriers / kBodyGroupCount);
  for (std::size_t f = 0; f < rec.frames; ++f) {
    double t = static_cast<double>(f) / config.sample_rate;
    for (std::size_t s = 0; s < rec.subcarriers; ++s) {
      std::size_t group = std::min<std::size_t>(s / band_size,
                                                kBodyGroupCount - 1);
      double amp = model.groups[group].csi_amp;
      for (std::size_t a = 0; a < rec.antennas; ++a) {
        double phase = 0.9 * static_cast<double>(s) +
                       0.4 * static_cast<double>(a);
        double v = base_level(s, a);
        if (amp != 0.0) v += amp * modulation(model, group, t, phase);
        if (config.noise_sigma > 0.0) v += config.noise_sigma * noise(rng);
        if (v < 0.0) v = 0.0;
        rec.at(f, s, a) = static_cast<double>(static_cast<float>(v));
      }
    }
  }

  PoseSequence pose;
  pose.frame_rate = 30.0;
  pose.frames = static_cast<std::size_t>(std::llround(config.duration_s *
                                                      pose.frame_rate));
  pose.coords.resize(pose.frames * kKeypointCount * 2);

  constexpr Joint kNose{0.0, 1.72};
  constexpr Joint kEye[2] = {{-0.04, 1.76}, {0.04, 1.76}};
  constexpr Joint kEar[2] = {{-0.09, 1.72}, {0.09, 1.72}};
  constexpr Joint kShoulder[2] = {{-0.22, 1.50}, {0.22, 1.50}};
  constexpr Joint kHip[2] = {{-0.14, 1.00}, {0.14, 1.00}};
  constexpr double kUpperArmLen = 0.30;
  constexpr double kForearmLen = 0.28;
  constexpr double kUpperLegLen = 0.45;
  constexpr double kLowerLegLen = 0.42;
  constexpr double kRest = -std::numbers::pi / 2.0;

  auto group_amp = [&](BodyGroup g) {
    return model.groups[static_cast<std::size_t>(g)].angle_amp;
  };

  for (std::size_t f = 0; f < pose.frames; ++f) {
    double t = static_cast<double>(f) / pose.frame_rate;
    write_joint(pose, f, 0, kNose);
    for (std::size_t side = 0; side < 2; ++side) {
      double side_phase =
          (model.alternate_sides && side == 1) ? std::numbers::pi : 0.0;
      // Slight outward lean so left and right limbs never overlap exactly.
      double lean = (side == 0) ? -0.06 : 0.06;

      write_joint(pose, f, 1 + side, kEye[side]);
      write_joint(pose, f, 3 + side, kEar[side]);
      write_joint(pose, f, 5 + side, kShoulder[side]);
      write_joint(pose, f, 11 + side, kHip[side]);

      double ua = kRest + lean +
                  group_amp(BodyGroup::UpperArms) *
                      modulation(model, static_cast<std::size_t>(BodyGroup::UpperArms),
                                 t, side_phase);
      double fa = kRest + lean +
                  group_amp(BodyGroup::Forearms) *
                      modulation(model, static_cast<std::size_t>(BodyGroup::Forearms),
                                 t, side_phase);
      Joint elbow{kShoulder[side].x + kUpperArmLen * std::cos(ua),
                  kShoulder[side].y + kUpperArmLen * std::sin(ua)};
      Joint wrist{elbow.x + kForearmLen * std::cos(fa),
                  elbow.y + kForearmLen * std::sin(fa)};
      write_joint(pose, f, 7 + side, elbow);
      write_joint(pose, f, 9 + side, wrist);

      double ul = kRest + lean +
                  group_amp(BodyGroup::UpperLegs) *
                      modulation(model, static_cast<std::size_t>(BodyGroup::UpperLegs),
                                 t, side_phase);
      double ll = kRest + lean +
                  group_amp(BodyGroup::LowerLegs) *
                      modulation(model, static_cast<std::size_t>(BodyGroup::LowerLegs),
                                 t, side_phase);
      Joint knee{kHip[side].x + kUpperLegLen * std::cos(ul),
                 kHip[side].y + kUpperLegLen * std::sin(ul)};
      Joint ankle{knee.x + kLowerLegLen * std::cos(ll),
                  knee.y + kLowerLegLen * std::sin(ll)};
      write_joint(pose, f, 13 + side, knee);
      write_joint(pose, f, 15 + side, ankle);
    }
  }

  return {std::move(rec), std::move(pose)};
}

}  // namespace csihar

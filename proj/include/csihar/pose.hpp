#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "csihar/activity.hpp"

namespace csihar {

// Keypoint index map (17-point convention):
//   0 nose, 1 left eye, 2 right eye, 3 left ear, 4 right ear,
//   5 left shoulder, 6 right shoulder, 7 left elbow, 8 right elbow,
//   9 left wrist, 10 right wrist, 11 left hip, 12 right hip,
//   13 left knee, 14 right knee, 15 left ankle, 16 right ankle
inline constexpr std::size_t kKeypointCount = 17;

struct PoseSequence {
  std::size_t frames = 0;
  double frame_rate = 30.0;
  std::vector<double> coords;  // [frame][keypoint][x,y]

  double x(std::size_t frame, std::size_t kp) const {
    return coords[(frame * kKeypointCount + kp) * 2];
  }
  double y(std::size_t frame, std::size_t kp) const {
    return coords[(frame * kKeypointCount + kp) * 2 + 1];
  }
};

// Limbs are proximal-to-distal joint pairs; angles use atan2(dy, dx).
enum class Limb : std::size_t {
  LeftForearm = 0,
  RightForearm = 1,
  LeftUpperArm = 2,
  RightUpperArm = 3,
  LeftUpperLeg = 4,
  RightUpperLeg = 5,
  LeftLowerLeg = 6,
  RightLowerLeg = 7,
};
inline constexpr std::size_t kLimbCount = 8;

enum class BodyGroup : std::size_t {
  Forearms = 0,
  UpperArms = 1,
  UpperLegs = 2,
  LowerLegs = 3,
};
inline constexpr std::size_t kBodyGroupCount = 4;

// One angle series per limb, [limb][frame]. When both joints of a limb
// coincide in a frame the previous frame's angle is carried forward (0 for
// frame 0).
std::array<std::vector<double>, kLimbCount> limb_angles(
    const PoseSequence& pose);

struct MovementFeatures {
  // Indexed by BodyGroup; group value is the mean of its two limbs.
  std::array<double, kBodyGroupCount> range_of_motion{};
  std::array<double, kBodyGroupCount> mean_consec_diff{};
};

// Feature names accepted by configs: {forearm, upper_arm, upper_leg,
// lower_leg} x {_rom, _mcd}. Throws std::invalid_argument on unknown names.
double feature_by_name(const MovementFeatures& f, const std::string& name);

// Splits the angle series into disjoint windows of `window` frames (partial
// tail dropped) and computes per-group range of motion and mean consecutive
// difference in each. Differences are wrapped to the shortest arc, so a
// single step never exceeds pi.
std::vector<MovementFeatures> movement_features(
    const std::array<std::vector<double>, kLimbCount>& angles,
    std::size_t window);

struct BinaryEvents {
  bool move_upperarms = false;
  bool move_forearms_a_lot = false;
  bool move_forearms = false;
  bool move_upperleg_a_lot = false;
  bool move_upperleg = false;
  bool move_lowerleg = false;
};

// Event order used by panel files and discovery variable names.
inline constexpr std::array<const char*, 6> kEventNames{
    "move_upperarms", "move_forearms_a_lot", "move_forearms",
    "move_upperleg_a_lot", "move_upperleg", "move_lowerleg"};

std::array<bool, 6> to_array(const BinaryEvents& e);

struct EventThresholds {
  double forearms_move = 0.03;
  double forearms_a_lot = 0.12;
  double upper_arms_move = 0.03;
  double upper_legs_move = 0.12;
  double upper_legs_a_lot = 0.95;
  double lower_legs_move = 0.12;
};

// Text form: one `group.level = value` per line, groups forearms,
// upper_arms, upper_legs, lower_legs and levels move, a_lot. Lines starting
// with # and blank lines are skipped. Missing keys keep defaults.
EventThresholds parse_thresholds(const std::string& text);

// Forearm and upper-arm events trigger on mean consecutive difference,
// leg events on range of motion. Comparisons are strictly greater.
// Throws std::invalid_argument when an a-lot threshold is below its base.
std::vector<BinaryEvents> binarize_events(
    const std::vector<MovementFeatures>& per_subinterval,
    const EventThresholds& thresholds);

struct DecisionTree {
  struct Node {
    bool leaf = false;
    Activity label = Activity::Walking;
    std::string feature;
    double threshold = 0.0;
    int if_true = -1;
    int if_false = -1;
  };
  std::vector<Node> nodes;
  int root = -1;
};

// Indented text, one node per line. A decision line reads
//   feature <name> > <threshold> ?
// and is followed by its two subtrees (first the true branch), each
// indented deeper. A leaf line reads
//   -> <label>
DecisionTree parse_tree(const std::string& text);

// Calibrated against the synthetic generator's activity models.
const std::string& default_tree_text();
const DecisionTree& default_tree();

Activity decision_tree_label(const MovementFeatures& features,
                             const DecisionTree& tree);

}  // namespace csihar

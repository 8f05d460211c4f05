#include "csihar/pose.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace csihar {

namespace {

struct LimbJoints {
  std::size_t from;
  std::size_t to;
};

constexpr std::array<LimbJoints, kLimbCount> kLimbJoints{{
    {7, 9},    // left forearm: elbow -> wrist
    {8, 10},   // right forearm
    {5, 7},    // left upper arm: shoulder -> elbow
    {6, 8},    // right upper arm
    {11, 13},  // left upper leg: hip -> knee
    {12, 14},  // right upper leg
    {13, 15},  // left lower leg: knee -> ankle
    {14, 16},  // right lower leg
}};

constexpr std::array<std::array<Limb, 2>, kBodyGroupCount> kGroupLimbs{{
    {Limb::LeftForearm, Limb::RightForearm},
    {Limb::LeftUpperArm, Limb::RightUpperArm},
    {Limb::LeftUpperLeg, Limb::RightUpperLeg},
    {Limb::LeftLowerLeg, Limb::RightLowerLeg},
}};

double wrapped_abs_diff(double a, double b) {
  double d = std::fabs(a - b);
  d = std::fmod(d, 2.0 * std::numbers::pi);
  if (d > std::numbers::pi) d = 2.0 * std::numbers::pi - d;
  return d;
}

std::string strip(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::array<std::string, 8>& feature_names() {
  static const std::array<std::string, 8> names{
      "forearm_rom",   "forearm_mcd",   "upper_arm_rom", "upper_arm_mcd",
      "upper_leg_rom", "upper_leg_mcd", "lower_leg_rom", "lower_leg_mcd"};
  return names;
}

}  // namespace

std::array<std::vector<double>, kLimbCount> limb_angles(
    const PoseSequence& pose) {
  if (pose.coords.size() != pose.frames * kKeypointCount * 2) {
    throw std::invalid_argument("limb_angles: coordinate buffer size " +
                                std::to_string(pose.coords.size()) + " for " +
                                std::to_string(pose.frames) + " frames");
  }
  std::array<std::vector<double>, kLimbCount> out;
  for (std::size_t l = 0; l < kLimbCount; ++l) {
    out[l].resize(pose.frames);
    const auto [from, to] = kLimbJoints[l];
    double prev = 0.0;
    for (std::size_t f = 0; f < pose.frames; ++f) {
      double dx = pose.x(f, to) - pose.x(f, from);
      double dy = pose.y(f, to) - pose.y(f, from);
      double angle = (dx == 0.0 && dy == 0.0) ? prev : std::atan2(dy, dx);
      out[l][f] = angle;
      prev = angle;
    }
  }
  return out;
}

double feature_by_name(const MovementFeatures& f, const std::string& name) {
  const auto& names = feature_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) {
      std::size_t group = i / 2;
      return i % 2 == 0 ? f.range_of_motion[group] : f.mean_consec_diff[group];
    }
  }
  throw std::invalid_argument("unknown feature '" + name + "'");
}

std::vector<MovementFeatures> movement_features(
    const std::array<std::vector<double>, kLimbCount>& angles,
    std::size_t window) {
  if (window < 2) {
    throw std::invalid_argument("movement_features: window must be >= 2, got " +
                                std::to_string(window));
  }
  std::size_t frames = angles[0].size();
  for (const auto& series : angles) {
    if (series.size() != frames) {
      throw std::invalid_argument("movement_features: ragged angle series");
    }
  }
  std::size_t count = frames / window;
  std::vector<MovementFeatures> out(count);
  for (std::size_t w = 0; w < count; ++w) {
    std::size_t begin = w * window;
    std::array<double, kLimbCount> rom{};
    std::array<double, kLimbCount> mcd{};
    for (std::size_t l = 0; l < kLimbCount; ++l) {
      const auto& s = angles[l];
      double lo = s[begin], hi = s[begin];
      double diff_sum = 0.0;
      for (std::size_t t = begin + 1; t < begin + window; ++t) {
        lo = std::min(lo, s[t]);
        hi = std::max(hi, s[t]);
        diff_sum += wrapped_abs_diff(s[t], s[t - 1]);
      }
      rom[l] = hi - lo;
      mcd[l] = diff_sum / static_cast<double>(window - 1);
    }
    for (std::size_t g = 0; g < kBodyGroupCount; ++g) {
      auto a = static_cast<std::size_t>(kGroupLimbs[g][0]);
      auto b = static_cast<std::size_t>(kGroupLimbs[g][1]);
      out[w].range_of_motion[g] = 0.5 * (rom[a] + rom[b]);
      out[w].mean_consec_diff[g] = 0.5 * (mcd[a] + mcd[b]);
    }
  }
  return out;
}

std::array<bool, 6> to_array(const BinaryEvents& e) {
  return {e.move_upperarms, e.move_forearms_a_lot, e.move_forearms,
          e.move_upperleg_a_lot, e.move_upperleg, e.move_lowerleg};
}

EventThresholds parse_thresholds(const std::string& text) {
  EventThresholds t;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = strip(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("thresholds: line " + std::to_string(line_no) +
                                  ": expected 'group.level = value'");
    }
    std::string key = strip(s.substr(0, eq));
    std::string value_text = strip(s.substr(eq + 1));
    double value;
    try {
      std::size_t used = 0;
      value = std::stod(value_text, &used);
      if (used != value_text.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::invalid_argument("thresholds: line " + std::to_string(line_no) +
                                  ": bad value '" + value_text + "'");
    }
    if (key == "forearms.move") t.forearms_move = value;
    else if (key == "forearms.a_lot") t.forearms_a_lot = value;
    else if (key == "upper_arms.move") t.upper_arms_move = value;
    else if (key == "upper_legs.move") t.upper_legs_move = value;
    else if (key == "upper_legs.a_lot") t.upper_legs_a_lot = value;
    else if (key == "lower_legs.move") t.lower_legs_move = value;
    else {
      throw std::invalid_argument("thresholds: line " + std::to_string(line_no) +
                                  ": unknown key '" + key + "'");
    }
  }
  return t;
}

std::vector<BinaryEvents> binarize_events(
    const std::vector<MovementFeatures>& per_subinterval,
    const EventThresholds& thresholds) {
  if (thresholds.forearms_a_lot < thresholds.forearms_move ||
      thresholds.upper_legs_a_lot < thresholds.upper_legs_move) {
    throw std::invalid_argument(
        "binarize_events: a_lot threshold below base threshold");
  }
  std::vector<BinaryEvents> out;
  out.reserve(per_subinterval.size());
  for (const auto& f : per_subinterval) {
    BinaryEvents e;
    auto g = [&](BodyGroup group) { return static_cast<std::size_t>(group); };
    double forearm = f.mean_consec_diff[g(BodyGroup::Forearms)];
    double upper_arm = f.mean_consec_diff[g(BodyGroup::UpperArms)];
    double upper_leg = f.range_of_motion[g(BodyGroup::UpperLegs)];
    double lower_leg = f.range_of_motion[g(BodyGroup::LowerLegs)];
    e.move_forearms = forearm > thresholds.forearms_move;
    e.move_forearms_a_lot = forearm > thresholds.forearms_a_lot;
    e.move_upperarms = upper_arm > thresholds.upper_arms_move;
    e.move_upperleg = upper_leg > thresholds.upper_legs_move;
    e.move_upperleg_a_lot = upper_leg > thresholds.upper_legs_a_lot;
    e.move_lowerleg = lower_leg > thresholds.lower_legs_move;
    out.push_back(e);
  }
  return out;
}

namespace {

struct TreeLine {
  std::size_t indent;
  std::string content;
  int number;
};

int build_tree(const std::vector<TreeLine>& lines, std::size_t& pos,
               DecisionTree& tree) {
  if (pos >= lines.size()) {
    throw std::invalid_argument("tree: unexpected end of input");
  }
  const TreeLine& line = lines[pos];
  ++pos;
  DecisionTree::Node node;
  if (line.content.rfind("->", 0) == 0) {
    node.leaf = true;
    node.label = activity_from_string(strip(line.content.substr(2)));
    tree.nodes.push_back(node);
    return static_cast<int>(tree.nodes.size() - 1);
  }

  std::istringstream in(line.content);
  std::string kw, name, gt, qmark;
  double threshold;
  if (!(in >> kw >> name >> gt >> threshold >> qmark) || kw != "feature" ||
      gt != ">" || qmark != "?") {
    throw std::invalid_argument(
        "tree: line " + std::to_string(line.number) +
        ": expected 'feature <name> > <threshold> ?' or '-> <label>'");
  }
  MovementFeatures probe;
  feature_by_name(probe, name);
  node.feature = name;
  node.threshold = threshold;

  if (pos >= lines.size() || lines[pos].indent <= line.indent) {
    throw std::invalid_argument("tree: line " + std::to_string(line.number) +
                                ": decision node needs two children");
  }
  std::size_t child_indent = lines[pos].indent;
  int t_branch = build_tree(lines, pos, tree);
  if (pos >= lines.size() || lines[pos].indent != child_indent) {
    throw std::invalid_argument("tree: line " + std::to_string(line.number) +
                                ": decision node needs two children");
  }
  int f_branch = build_tree(lines, pos, tree);
  node.if_true = t_branch;
  node.if_false = f_branch;
  tree.nodes.push_back(node);
  return static_cast<int>(tree.nodes.size() - 1);
}

}  // namespace

DecisionTree parse_tree(const std::string& text) {
  std::vector<TreeLine> lines;
  std::istringstream in(text);
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    std::string content = strip(raw);
    if (content.empty() || content[0] == '#') continue;
    std::size_t indent = 0;
    while (indent < raw.size() && (raw[indent] == ' ' || raw[indent] == '\t'))
      ++indent;
    lines.push_back({indent, content, number});
  }
  if (lines.empty()) throw std::invalid_argument("tree: empty config");
  DecisionTree tree;
  std::size_t pos = 0;
  tree.root = build_tree(lines, pos, tree);
  if (pos != lines.size()) {
    throw std::invalid_argument("tree: trailing content at line " +
                                std::to_string(lines[pos].number));
  }
  return tree;
}

const std::string& default_tree_text() {
  static const std::string text = R"(feature upper_leg_rom > 0.4 ?
    feature upper_leg_mcd > 0.105 ?
        feature forearm_mcd > 0.09 ?
            -> running
            -> jumping
        feature upper_arm_mcd > 0.03 ?
            -> squatting
            -> walking
    feature forearm_mcd > 0.23 ?
        -> clapping
        feature forearm_mcd > 0.12 ?
            -> waving
            -> wiping
)";
  return text;
}

const DecisionTree& default_tree() {
  static const DecisionTree tree = parse_tree(default_tree_text());
  return tree;
}

Activity decision_tree_label(const MovementFeatures& features,
                             const DecisionTree& tree) {
  if (tree.root < 0 || tree.nodes.empty()) {
    throw std::invalid_argument("decision_tree_label: empty tree");
  }
  int at = tree.root;
  while (true) {
    const auto& node = tree.nodes[static_cast<std::size_t>(at)];
    if (node.leaf) return node.label;
    double v = feature_by_name(features, node.feature);
    at = v > node.threshold ? node.if_true : node.if_false;
  }
}

}  // namespace csihar

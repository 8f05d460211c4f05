#include "csihar/activity.hpp"

#include <stdexcept>

namespace csihar {

const std::array<std::string, kActivityCount>& activity_names() {
  static const std::array<std::string, kActivityCount> names{
      "walking", "running",  "jumping", "squatting",
      "waving",  "clapping", "wiping"};
  return names;
}

std::string to_string(Activity a) {
  return activity_names()[static_cast<std::size_t>(a)];
}

Activity activity_from_string(const std::string& name) {
  const auto& names = activity_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<Activity>(i);
  }
  throw std::invalid_argument("unknown activity '" + name + "'");
}

std::optional<Activity> activity_from_code(std::uint8_t code) {
  if (code == kUnlabeledCode) return std::nullopt;
  if (code >= kActivityCount) {
    throw std::invalid_argument("unknown activity code " +
                                std::to_string(int(code)));
  }
  return static_cast<Activity>(code);
}

}  // namespace csihar

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

namespace csihar {

// Class order is fixed; it defines label codes in files and the index of
// classifier outputs.
enum class Activity : std::uint8_t {
  Walking = 0,
  Running = 1,
  Jumping = 2,
  Squatting = 3,
  Waving = 4,
  Clapping = 5,
  Wiping = 6,
};

inline constexpr std::size_t kActivityCount = 7;
inline constexpr std::uint8_t kUnlabeledCode = 255;

const std::array<std::string, kActivityCount>& activity_names();
std::string to_string(Activity a);

// Throws std::invalid_argument for names outside the seven activities.
Activity activity_from_string(const std::string& name);

std::optional<Activity> activity_from_code(std::uint8_t code);

}  // namespace csihar

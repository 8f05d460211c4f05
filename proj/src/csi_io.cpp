#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "csihar/csi.hpp"
#include "io_util.hpp"

namespace csihar {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'I', '1'};
constexpr std::size_t kMaxElements = std::size_t{1} << 31;

}  // namespace

void save_recording(const CsiRecording& rec, const std::string& path) {
  validate(rec);
  if (rec.frames > UINT32_MAX || rec.subcarriers > UINT32_MAX ||
      rec.antennas > UINT32_MAX) {
    throw std::invalid_argument("save_recording: dimensions exceed u32 range");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("save_recording: cannot open " + path);
  }
  out.write(kMagic, 4);
  detail::put_u32(out, static_cast<std::uint32_t>(rec.frames));
  detail::put_u32(out, static_cast<std::uint32_t>(rec.subcarriers));
  detail::put_u32(out, static_cast<std::uint32_t>(rec.antennas));
  detail::put_f32(out, static_cast<float>(rec.sample_rate));
  std::uint8_t code = rec.label ? static_cast<std::uint8_t>(*rec.label)
                                : kUnlabeledCode;
  out.put(static_cast<char>(code));
  for (double v : rec.magnitudes) {
    detail::put_f32(out, static_cast<float>(v));
  }
  if (!out) {
    throw std::runtime_error("save_recording: write failed for " + path);
  }
}

CsiRecording load_recording(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("load_recording: cannot open " + path);
  }
  detail::ByteReader r(in, path);
  r.magic(kMagic);
  CsiRecording rec;
  rec.frames = r.u32();
  rec.subcarriers = r.u32();
  rec.antennas = r.u32();
  rec.sample_rate = static_cast<double>(r.f32());
  std::uint8_t code = r.u8();
  if (code != kUnlabeledCode && code >= kActivityCount) {
    throw std::runtime_error(path + ": unknown label code " +
                             std::to_string(code) + " at byte 20");
  }
  rec.label = activity_from_code(code);

  auto total = static_cast<std::uint64_t>(rec.frames) * rec.subcarriers *
               rec.antennas;
  if (total > kMaxElements) {
    throw std::runtime_error(path + ": implausible header at byte 4 (" +
                             std::to_string(total) + " samples)");
  }
  rec.magnitudes.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    rec.magnitudes[i] = static_cast<double>(r.f32());
  }
  r.expect_eof();
  validate(rec);
  return rec;
}

void save_pose(const PoseSequence& pose, const std::string& path) {
  if (pose.coords.size() != pose.frames * kKeypointCount * 2) {
    throw std::invalid_argument("save_pose: coordinate buffer size mismatch");
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("save_pose: cannot open " + path);
  }
  out << "frame";
  for (std::size_t k = 0; k < kKeypointCount; ++k) {
    out << ",kp" << k << "_x,kp" << k << "_y";
  }
  out << "\n";
  out.precision(17);
  for (std::size_t f = 0; f < pose.frames; ++f) {
    out << f;
    for (std::size_t k = 0; k < kKeypointCount; ++k) {
      out << ',' << pose.x(f, k) << ',' << pose.y(f, k);
    }
    out << "\n";
  }
  if (!out) {
    throw std::runtime_error("save_pose: write failed for " + path);
  }
}

PoseSequence load_pose(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_pose: cannot open " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error(path + ": missing header row");
  }
  {
    std::ostringstream expect;
    expect << "frame";
    for (std::size_t k = 0; k < kKeypointCount; ++k) {
      expect << ",kp" << k << "_x,kp" << k << "_y";
    }
    if (line != expect.str()) {
      throw std::runtime_error(path + ": unexpected header row");
    }
  }

  PoseSequence pose;
  pose.frame_rate = 30.0;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<double> values;
    values.reserve(kKeypointCount * 2 + 1);
    while (std::getline(ss, field, ',')) {
      std::size_t used = 0;
      double v;
      try {
        v = std::stod(field, &used);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ": row " + std::to_string(row + 2) +
                                 ": bad number '" + field + "'");
      }
      if (used != field.size()) {
        throw std::runtime_error(path + ": row " + std::to_string(row + 2) +
                                 ": bad number '" + field + "'");
      }
      values.push_back(v);
    }
    if (values.size() != kKeypointCount * 2 + 1) {
      throw std::runtime_error(path + ": row " + std::to_string(row + 2) +
                               ": expected " +
                               std::to_string(kKeypointCount * 2 + 1) +
                               " fields, got " + std::to_string(values.size()));
    }
    if (static_cast<std::size_t>(values[0]) != row) {
      throw std::runtime_error(path + ": row " + std::to_string(row + 2) +
                               ": frame index out of order");
    }
    pose.coords.insert(pose.coords.end(), values.begin() + 1, values.end());
    ++row;
  }
  pose.frames = row;
  return pose;
}

}  // namespace csihar

#pragma once

#include <filesystem>
#include <iosfwd>

#include <json.hpp>

#include "eventfield/camera.hpp"
#include "eventfield/events.hpp"
#include "eventfield/image.hpp"

namespace evf::io {

// EVT1 layout (little-endian):
//   "EVT1" | width u16 | height u16 | c_pos f32 | c_neg f32 | count u64
//   count x { t_us u64 | x u16 | y u16 | p i8 | pad u8 }
struct EventFile {
    EventStream stream;
    Thresholds thresholds;
};

void write_evt1(std::ostream& os, const EventStream& stream, const Thresholds& thresholds);
EventFile read_evt1(std::istream& is);
void write_evt1(const std::filesystem::path& path, const EventStream& stream, const Thresholds& thresholds);
EventFile read_evt1(const std::filesystem::path& path);

/// PFM with a negative (little-endian) scale; 1 channel "Pf" or 3 channels "PF".
void write_pfm(const std::filesystem::path& path, const Image& image);
Image read_pfm(const std::filesystem::path& path);

/// 8-bit binary PPM preview; values clamped to [0, 1] after optional gamma.
void write_ppm(const std::filesystem::path& path, const Image& image, double gamma = 1.0);

nlohmann::json camera_to_json(const CameraModel& camera);
CameraModel camera_from_json(const nlohmann::json& j);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace evf::io

#include "eventfield/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "eventfield/error.hpp"

namespace evf::io {

namespace {

template <typename T>
void put_le(std::ostream& os, T value) {
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    os.write(bytes.data(), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
    std::array<char, sizeof(T)> bytes;
    is.read(bytes.data(), sizeof(T));
    if (!is) {
        throw IoError("unexpected end of file");
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open " + path.string());
    }
    return is;
}

}  // namespace

void write_evt1(std::ostream& os, const EventStream& stream, const Thresholds& thresholds) {
    os.write("EVT1", 4);
    put_le<std::uint16_t>(os, stream.width);
    put_le<std::uint16_t>(os, stream.height);
    put_le<float>(os, static_cast<float>(thresholds.c_pos));
    put_le<float>(os, static_cast<float>(thresholds.c_neg));
    put_le<std::uint64_t>(os, stream.events.size());
    for (const Event& e : stream.events) {
        put_le<std::uint64_t>(os, e.t);
        put_le<std::uint16_t>(os, e.x);
        put_le<std::uint16_t>(os, e.y);
        put_le<std::int8_t>(os, e.p);
        put_le<std::uint8_t>(os, 0);
    }
    if (!os) {
        throw IoError("failed writing EVT1 stream");
    }
}

EventFile read_evt1(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "EVT1", 4) != 0) {
        throw IoError("missing EVT1 magic");
    }
    EventFile file;
    file.stream.width = get_le<std::uint16_t>(is);
    file.stream.height = get_le<std::uint16_t>(is);
    file.thresholds.c_pos = get_le<float>(is);
    file.thresholds.c_neg = get_le<float>(is);
    const auto count = get_le<std::uint64_t>(is);
    file.stream.events.resize(count);
    for (Event& e : file.stream.events) {
        e.t = get_le<std::uint64_t>(is);
        e.x = get_le<std::uint16_t>(is);
        e.y = get_le<std::uint16_t>(is);
        e.p = get_le<std::int8_t>(is);
        get_le<std::uint8_t>(is);
    }
    return file;
}

void write_evt1(const std::filesystem::path& path, const EventStream& stream, const Thresholds& thresholds) {
    auto os = open_out(path);
    write_evt1(os, stream, thresholds);
}

EventFile read_evt1(const std::filesystem::path& path) {
    auto is = open_in(path);
    try {
        return read_evt1(is);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_pfm(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw InvalidInput("write_pfm: only 1 or 3 channels are supported");
    }
    auto os = open_out(path);
    os << (image.channels == 3 ? "PF" : "Pf") << "\n" << image.width << " " << image.height << "\n-1.0\n";
    // PFM scanlines run bottom to top.
    for (int y = image.height - 1; y >= 0; --y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < image.channels; ++c) {
                put_le<float>(os, static_cast<float>(image.at(x, y, c)));
            }
        }
    }
    if (!os) {
        throw IoError("failed writing " + path.string());
    }
}

Image read_pfm(const std::filesystem::path& path) {
    auto is = open_in(path);
    std::string kind;
    int width = 0;
    int height = 0;
    double scale = 0.0;
    is >> kind >> width >> height >> scale;
    if (!is || (kind != "PF" && kind != "Pf") || width <= 0 || height <= 0 || scale == 0.0) {
        throw IoError(path.string() + ": malformed PFM header");
    }
    if (scale > 0.0) {
        throw IoError(path.string() + ": big-endian PFM is not supported");
    }
    is.get();  // single whitespace after the scale
    Image image(width, height, kind == "PF" ? 3 : 1);
    for (int y = height - 1; y >= 0; --y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < image.channels; ++c) {
                image.at(x, y, c) = get_le<float>(is);
            }
        }
    }
    return image;
}

void write_ppm(const std::filesystem::path& path, const Image& image, double gamma) {
    if (image.channels != 1 && image.channels != 3) {
        throw InvalidInput("write_ppm: only 1 or 3 channels are supported");
    }
    auto os = open_out(path);
    os << "P6\n" << image.width << " " << image.height << "\n255\n";
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                double v = image.at(x, y, image.channels == 3 ? c : 0);
                v = std::clamp(v, 0.0, 1.0);
                if (gamma != 1.0) {
                    v = std::pow(v, 1.0 / gamma);
                }
                os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
            }
        }
    }
}

nlohmann::json camera_to_json(const CameraModel& camera) {
    nlohmann::json j;
    j["fx"] = camera.fx;
    j["fy"] = camera.fy;
    j["cx"] = camera.cx;
    j["cy"] = camera.cy;
    std::vector<double> r(9);
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) {
            r[i * 3 + k] = camera.rotation(i, k);
        }
    }
    j["R"] = r;
    j["t"] = {camera.translation.x(), camera.translation.y(), camera.translation.z()};
    j["width"] = camera.width;
    j["height"] = camera.height;
    return j;
}

CameraModel camera_from_json(const nlohmann::json& j) {
    CameraModel cam;
    try {
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
        const auto r = j.at("R").get<std::vector<double>>();
        const auto t = j.at("t").get<std::vector<double>>();
        if (r.size() != 9 || t.size() != 3) {
            throw IoError("camera JSON: R must have 9 entries and t 3");
        }
        for (int i = 0; i < 3; ++i) {
            for (int k = 0; k < 3; ++k) {
                cam.rotation(i, k) = r[i * 3 + k];
            }
            cam.translation[i] = t[i];
        }
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("camera JSON: ") + e.what());
    }
    cam.validate();
    return cam;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    auto os = open_out(path);
    os << j.dump(2) << "\n";
}

nlohmann::json read_json(const std::filesystem::path& path) {
    auto is = open_in(path);
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

}  // namespace evf::io

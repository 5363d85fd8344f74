#include "eventfield/events.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eventfield/error.hpp"

namespace evf {

Image bayer_select(const Image& image, const BayerPattern& pattern) {
    if (image.channels != 3) {
        throw InvalidInput("bayer_select: expected a 3-channel image, got " +
                           std::to_string(image.channels));
    }
    Image out(image.width, image.height, 1);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            out.at(x, y) = image.at(x, y, static_cast<int>(pattern.at(x, y)));
        }
    }
    return out;
}

Image log_intensity(const Image& frame, double eps) {
    if (!(eps > 0.0)) {
        throw InvalidInput("log_intensity: eps must be positive");
    }
    Image out = frame;
    for (double& v : out.values) {
        v = std::log(std::max(v, eps));
    }
    return out;
}

AccumulationImage naive_accumulate(const EventStream& stream, Timestamp t0, Timestamp t1,
                                   const Thresholds& thresholds, double decay) {
    if (t0 > t1) {
        throw InvalidInput("naive_accumulate: t0 > t1");
    }
    if (!(decay > 0.0 && decay <= 1.0)) {
        throw InvalidInput("naive_accumulate: decay must lie in (0, 1]");
    }
    AccumulationImage out(stream.width, stream.height);

    // First pass: number of in-window events per pixel, which fixes k_last.
    std::vector<std::uint32_t> count(stream.pixel_count(), 0);
    for (const Event& e : stream.events) {
        if (e.t > t0 && e.t <= t1) {
            ++count[static_cast<std::size_t>(e.y) * stream.width + e.x];
        }
    }
    // Second pass: weight each event by decay^(k_last - k) directly.
    std::vector<std::uint32_t> seen(stream.pixel_count(), 0);
    for (const Event& e : stream.events) {
        if (e.t <= t0 || e.t > t1) {
            continue;
        }
        const std::size_t pix = static_cast<std::size_t>(e.y) * stream.width + e.x;
        const std::uint32_t k = seen[pix]++;
        const std::uint32_t k_last = count[pix] - 1;
        const double weight = decay == 1.0 ? 1.0 : std::pow(decay, static_cast<double>(k_last - k));
        out.values[pix] += thresholds.step(e.p) * weight;
    }
    return out;
}

StreamReport validate_stream(const EventStream& stream) {
    StreamReport report;
    for (std::size_t i = 0; i < stream.events.size(); ++i) {
        const Event& e = stream.events[i];
        std::ostringstream msg;
        if (e.x >= stream.width || e.y >= stream.height) {
            msg << "event " << i << " at (" << e.x << ", " << e.y << ") outside " << stream.width << "x"
                << stream.height;
            return {StreamReport::Issue::bounds, i, msg.str()};
        }
        if (e.p != 1 && e.p != -1) {
            msg << "event " << i << " has polarity " << static_cast<int>(e.p);
            return {StreamReport::Issue::polarity, i, msg.str()};
        }
        if (i > 0 && e.t < stream.events[i - 1].t) {
            msg << "event " << i << " timestamp " << e.t << " precedes " << stream.events[i - 1].t;
            return {StreamReport::Issue::ordering, i, msg.str()};
        }
    }
    return report;
}

}  // namespace evf

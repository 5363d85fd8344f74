#include "eventfield/edi.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "eventfield/error.hpp"

namespace evf {

namespace {

void require_exact_index(const DecayAccumulator& index, const char* who) {
    if (index.decay() != 1.0) {
        throw InvalidInput(std::string(who) + ": index must be built with decay = 1");
    }
}

void require_mosaic_shape(const Image& frame, const DecayAccumulator& index, const char* who) {
    if (frame.width != index.width() || frame.height != index.height()) {
        throw InvalidInput(std::string(who) + ": frame and index resolution differ");
    }
}

double signed_window(const DecayAccumulator& index, int x, int y, Timestamp from, Timestamp to) {
    return to >= from ? index.query_pixel(x, y, from, to) : -index.query_pixel(x, y, to, from);
}

Image map_channels(const Image& frame, const std::function<Image(const Image&)>& mono_op) {
    if (frame.channels == 1) {
        return mono_op(frame);
    }
    if (frame.channels == 3) {
        return demosaic_nearest(mono_op(bayer_select(frame)));
    }
    throw InvalidInput("expected a 1- or 3-channel frame");
}

}  // namespace

Image esi_synthesize(const Image& ref_frame, Timestamp ref_time, const DecayAccumulator& index, Timestamp t) {
    require_exact_index(index, "esi_synthesize");
    return map_channels(ref_frame, [&](const Image& mono) {
        require_mosaic_shape(mono, index, "esi_synthesize");
        Image out = mono;
        for (int y = 0; y < mono.height; ++y) {
            for (int x = 0; x < mono.width; ++x) {
                out.at(x, y) = mono.at(x, y) * std::exp(signed_window(index, x, y, ref_time, t));
            }
        }
        return out;
    });
}

double edi_mean_gain(const DecayAccumulator& index, int x, int y, const ExposureWindow& window,
                     const EdiOptions& options) {
    require_exact_index(index, "edi_mean_gain");
    if (window.t_end <= window.t_start) {
        throw InvalidInput("edi: exposure window must have positive length");
    }
    if (options.n_quad < 2) {
        throw InvalidInput("edi: n_quad must be at least 2");
    }
    const auto length = static_cast<double>(window.duration());
    if (options.method == EdiIntegration::quadrature) {
        double sum = 0.0;
        for (int i = 0; i < options.n_quad; ++i) {
            const double tau = static_cast<double>(window.t_start) + (i + 0.5) * length / options.n_quad;
            const auto tau_us = static_cast<Timestamp>(std::llround(tau));
            sum += std::exp(index.query_pixel(x, y, window.t_start, tau_us));
        }
        return sum / options.n_quad;
    }

    // exp(E(t_start, tau)) is a step function that changes only at event times.
    const auto times = index.pixel_times(x, y);
    const auto first = std::upper_bound(times.begin(), times.end(), window.t_start);
    const auto last = std::upper_bound(times.begin(), times.end(), window.t_end);
    double integral = 0.0;
    double level = 0.0;
    Timestamp cursor = window.t_start;
    for (auto it = first; it != last; ++it) {
        const auto j = static_cast<std::size_t>(it - times.begin());
        integral += std::exp(level) * static_cast<double>(*it - cursor);
        const double before = j == 0 ? 0.0 : index.pixel_state(x, y, j - 1);
        level += index.pixel_state(x, y, j) - before;
        cursor = *it;
    }
    integral += std::exp(level) * static_cast<double>(window.t_end - cursor);
    return integral / length;
}

Image edi_deblur(const Image& blurry, const ExposureWindow& window, const DecayAccumulator& index,
                 const EdiOptions& options) {
    require_exact_index(index, "edi_deblur");
    return map_channels(blurry, [&](const Image& mono) {
        require_mosaic_shape(mono, index, "edi_deblur");
        Image out = mono;
        for (int y = 0; y < mono.height; ++y) {
            for (int x = 0; x < mono.width; ++x) {
                out.at(x, y) = mono.at(x, y) / edi_mean_gain(index, x, y, window, options);
            }
        }
        return out;
    });
}

Image edi_reblur(const Image& sharp_start, const ExposureWindow& window, const DecayAccumulator& index,
                 const EdiOptions& options) {
    require_exact_index(index, "edi_reblur");
    return map_channels(sharp_start, [&](const Image& mono) {
        require_mosaic_shape(mono, index, "edi_reblur");
        Image out = mono;
        for (int y = 0; y < mono.height; ++y) {
            for (int x = 0; x < mono.width; ++x) {
                out.at(x, y) = mono.at(x, y) * edi_mean_gain(index, x, y, window, options);
            }
        }
        return out;
    });
}

std::vector<Image> synthesize_reference_frames(std::span<const Image> blurry_frames,
                                               std::span<const ExposureWindow> windows,
                                               std::span<const Timestamp> t_refs, const DecayAccumulator& index) {
    require_exact_index(index, "synthesize_reference_frames");
    if (blurry_frames.size() != windows.size() || windows.empty()) {
        throw InvalidInput("synthesize_reference_frames: need one window per blurry frame");
    }
    const Timestamp coverage = index.coverage_end();
    for (const ExposureWindow& w : windows) {
        if (w.t_end > coverage) {
            throw OutOfRange("synthesize_reference_frames: exposure ends after event coverage");
        }
    }
    std::vector<Image> deblurred(blurry_frames.size());
    std::vector<bool> ready(blurry_frames.size(), false);
    std::vector<Image> out;
    for (Timestamp t : t_refs) {
        if (t > coverage) {
            throw OutOfRange("synthesize_reference_frames: timestamp " + std::to_string(t) +
                             " outside event coverage");
        }
        std::size_t best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < windows.size(); ++i) {
            const double mid = 0.5 * (static_cast<double>(windows[i].t_start) + static_cast<double>(windows[i].t_end));
            const double dist = std::abs(mid - static_cast<double>(t));
            if (dist < best_dist) {
                best_dist = dist;
                best = i;
            }
        }
        if (!ready[best]) {
            deblurred[best] = edi_deblur(blurry_frames[best], windows[best], index);
            ready[best] = true;
        }
        out.push_back(t == windows[best].t_start ? deblurred[best]
                                                  : esi_synthesize(deblurred[best], windows[best].t_start, index, t));
    }
    return out;
}

Image demosaic_nearest(const Image& mosaic, const BayerPattern& pattern) {
    if (mosaic.channels != 1) {
        throw InvalidInput("demosaic_nearest: expected a single-channel mosaic");
    }
    Image out(mosaic.width, mosaic.height, 3);
    for (int y = 0; y < mosaic.height; ++y) {
        for (int x = 0; x < mosaic.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                if (static_cast<int>(pattern.at(x, y)) == c) {
                    out.at(x, y, c) = mosaic.at(x, y);
                    continue;
                }
                // Nearest cell of channel c inside the 2x2 block, preferring the same row.
                double value = 0.0;
                bool found = false;
                const int order[4][2] = {{x ^ 1, y}, {x, y ^ 1}, {x ^ 1, y ^ 1}, {x, y}};
                for (const auto& cell : order) {
                    if (cell[0] >= mosaic.width || cell[1] >= mosaic.height) {
                        continue;
                    }
                    if (static_cast<int>(pattern.at(cell[0], cell[1])) == c) {
                        value = mosaic.at(cell[0], cell[1]);
                        found = true;
                        break;
                    }
                }
                out.at(x, y, c) = found ? value : mosaic.at(x, y);
            }
        }
    }
    return out;
}

}  // namespace evf

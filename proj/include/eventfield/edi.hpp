#pragma once

#include <span>
#include <vector>

#include "eventfield/accum_index.hpp"
#include "eventfield/events.hpp"
#include "eventfield/image.hpp"

namespace evf {

struct ExposureWindow {
    Timestamp t_start = 0;
    Timestamp t_end = 0;

    Timestamp duration() const { return t_end - t_start; }
};

enum class EdiIntegration {
    exact,       // piecewise-constant sum between event timestamps
    quadrature,  // midpoint rule with n_quad nodes
};

struct EdiOptions {
    EdiIntegration method = EdiIntegration::exact;
    int n_quad = 64;
};

/// I(t) = I(ref_time) * exp(E(ref_time, t)); the window is negated for t < ref_time.
/// The index must be built with decay = 1.
Image esi_synthesize(const Image& ref_frame, Timestamp ref_time, const DecayAccumulator& index, Timestamp t);

/// Mean of exp(E(t_start, tau)) over the exposure for one pixel.
double edi_mean_gain(const DecayAccumulator& index, int x, int y, const ExposureWindow& window,
                     const EdiOptions& options = {});

/// Recovers the sharp frame at window.t_start from a blurry exposure:
/// I = B / mean_tau exp(E(t_start, tau)).
Image edi_deblur(const Image& blurry, const ExposureWindow& window, const DecayAccumulator& index,
                 const EdiOptions& options = {});

/// Forward model: the blurry exposure produced by a sharp start-of-exposure frame.
Image edi_reblur(const Image& sharp_start, const ExposureWindow& window, const DecayAccumulator& index,
                 const EdiOptions& options = {});

/// For every requested timestamp, deblurs the exposure whose midpoint is
/// closest and ESI-shifts it to that timestamp.
std::vector<Image> synthesize_reference_frames(std::span<const Image> blurry_frames,
                                               std::span<const ExposureWindow> windows,
                                               std::span<const Timestamp> t_refs, const DecayAccumulator& index);

/// Block-wise nearest-neighbour demosaicing of a mosaiced single-channel image.
Image demosaic_nearest(const Image& mosaic, const BayerPattern& pattern = {});

}  // namespace evf

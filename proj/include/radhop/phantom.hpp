#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "radhop/volume.hpp"

namespace radhop {

// Synthetic three-channel study generator used in place of clinical data.
//
// Intensity model (before noise):
//   outside gland:  T2 0.20, ADC 0.25, DWI 0.20
//   inside gland:   T2 0.60, ADC 0.60, DWI 0.40, plus a smooth low-frequency
//                   texture field (amplitude 0.05) per channel
//   inside lesion:  delta = 0.4 * texture_contrast applied as
//                   T2 - delta, ADC - delta, DWI + delta, plus a higher
//                   frequency texture component of amplitude 0.1 * contrast
// Independent N(0, noise_sigma) noise is added per voxel and channel.
struct PhantomSpec {
    std::uint64_t seed = 1;
    int n_lesions = 1;
    double gland_radius_mm = 30.0;
    double lesion_radius_mm = 6.0;
    double texture_contrast = 0.5; // (0, 1]
    double noise_sigma = 0.08;     // >= 0
    std::array<int, 3> dims{20, 96, 96};
    std::array<double, 3> spacing{3.0, 1.0, 1.0};

    void validate() const;
};

struct PhantomLesion {
    int label = 0;                          // value in the lesion mask
    std::array<double, 3> center_mm{};      // physical center
    std::array<double, 3> semi_axes_mm{};   // ellipsoid semi-axes
    std::int64_t voxel_count = 0;
};

// Deterministic for a fixed spec: equal seeds produce byte-identical studies.
// Throws PlacementError when a lesion cannot be placed inside the gland after
// bounded retries.
std::pair<Study, std::vector<PhantomLesion>> generate_phantom(const PhantomSpec& spec);

// Expected mean-intensity offset of lesion voxels relative to gland
// background for a given contrast (sign per channel: T2 -, ADC -, DWI +).
double phantom_lesion_delta(double texture_contrast);

} // namespace radhop

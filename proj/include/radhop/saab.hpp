#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "radhop/errors.hpp"

namespace radhop {

// One Saab transform: an affine map y_m = a_m . x + b_m over a flattened
// F x F neighborhood. Anchor 0 is the fixed DC vector (1/F, ..., 1/F)
// normalized to unit length; the remaining anchors are the principal
// components of the DC-removed (AC) samples.
struct SaabKernel {
    int filter_size = 0;                      // F
    std::vector<double> mean;                 // sample mean of the AC component, length F*F
    std::vector<std::vector<double>> anchors; // retained anchors, [0] = DC, each length F*F
    std::vector<double> bias;                 // per-anchor bias b_m (0 by default)
    std::vector<double> energies;             // fraction of this kernel's input variance

    int dim() const { return filter_size * filter_size; }
    int num_anchors() const { return static_cast<int>(anchors.size()); }
};

// Fits a kernel from N x (F*F) row-major float samples. AC anchors whose
// energy fraction falls below energy_threshold are dropped; the DC anchor is
// always retained. Zero-variance input yields a DC-only kernel.
SaabKernel fit_saab(const float* samples, std::int64_t n_samples, int filter_size,
                    double energy_threshold);
SaabKernel fit_saab(const std::vector<std::vector<float>>& samples, int filter_size,
                    double energy_threshold);

// y_m = a_m . x + b_m for each retained anchor.
void apply_saab(const SaabKernel& k, std::span<const float> x, std::span<float> out);
std::vector<float> apply_saab(const SaabKernel& k, std::span<const float> x);

// Channel-wise Saab layer: one kernel per retained parent channel. A child's
// absolute energy is its parent's absolute energy times the child's fraction
// of that kernel's input variance; children below the threshold are masked.
struct CwSaabLayer {
    int filter_size = 0;
    std::vector<SaabKernel> kernels;     // per parent, unpruned
    std::vector<double> child_energy;    // absolute energies, parent-major child order
    std::vector<std::uint8_t> keep_mask; // same order as child_energy
    std::vector<int> parent_of_child;    // same order

    int total_children() const { return static_cast<int>(child_energy.size()); }
    int retained_children() const;
};

// One sample matrix per parent channel (N_p x F*F row-major floats).
struct CwSamples {
    const float* data = nullptr;
    std::int64_t n = 0;
};

CwSaabLayer fit_cw_saab(const std::vector<CwSamples>& per_parent,
                        const std::vector<double>& parent_energies, int filter_size,
                        double energy_threshold);

} // namespace radhop

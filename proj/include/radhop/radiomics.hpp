#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "radhop/dft.hpp"
#include "radhop/radhop.hpp"
#include "radhop/volume.hpp"

namespace radhop {

// 2D region of interest: per-sequence intensity crops sharing one binary
// mask, with its center of mass in study voxel coordinates.
struct Roi {
    int slice = 0;
    int height = 0, width = 0;
    std::array<int, 2> origin{0, 0}; // crop top-left (y, x) in study coords
    std::array<std::vector<float>, 3> crops;
    std::vector<std::uint8_t> mask; // row-major height*width
    double spacing_y = 1.0, spacing_x = 1.0;
    std::array<double, 2> center_of_mass{0.0, 0.0}; // (y, x) in study coords

    std::int64_t mask_count() const;
    void validate() const; // DegenerateRoi when mask has < 2 pixels
};

struct RadiomicsConfig {
    int gray_levels = 32; // fixed bin count over the ROI min..max
    // Co-occurrence / run-length directions are the four symmetric 2D
    // directions at distance 1.
    void validate() const;
};

inline constexpr int kRadiomicsFeatureCount = 104;

// Family sizes in output order: first order 19, shape 2D 10, GLCM 24,
// GLRLM 16, GLSZM 16, NGTDM 5, GLDM 14. Exact formulas are pinned in
// docs/radiomics_features.md.
std::array<int, 7> radiomics_family_sizes();
const std::vector<std::string>& radiomics_feature_names();

std::vector<float> extract_radiomics(const Roi& roi, int sequence,
                                     const RadiomicsConfig& config);

// Stage-1 feature vector at the ROI's center of mass: a 24x24 window per
// sequence (shifted inside bounds when the center is near an edge), pushed
// through the fitted RadHop + DFT + fusion pipeline.
std::vector<float> radhop_roi_feature(const Roi& roi, const Study& study,
                                      const std::array<RadHopModel, 3>& models,
                                      const std::array<DftSelection, 3>& selections,
                                      bool* shifted = nullptr);

} // namespace radhop

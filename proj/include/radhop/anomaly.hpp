#pragma once

#include <cstdint>
#include <vector>

#include "radhop/volume.hpp"

namespace radhop {

// Stage-1 probabilities on the stride grid. Grid points sit at voxel
// coordinates offset + k*stride in-plane (offset 4, the center of an 8-block)
// so a stride-8 grid aligns with anomaly units; coarser heatmaps are filled
// by nearest-grid assignment. Values are zero outside the gland.
struct Heatmap {
    Volume prob;
    int patch_size = 24;
    int stride = 8;
    static constexpr int kGridOffset = kUnitSize / 2;
};

// Per-slice grid of anomaly scores; unit (i, j) covers the 8x8 voxel block
// [8i, 8i+8) x [8j, 8j+8) of its slice, scored by averaging the stride-8
// predictions in a 3x3 window around the unit's own grid point.
struct AnomalyMap {
    int slice = 0;
    int rows = 0, cols = 0; // floor(H/8), floor(W/8)
    std::vector<float> scores;

    float at(int i, int j) const { return scores[static_cast<std::size_t>(i) * cols + j]; }
    float& at(int i, int j) { return scores[static_cast<std::size_t>(i) * cols + j]; }
};

// Requires a stride-8 heatmap from 24x24 patches (ConfigError otherwise).
AnomalyMap compute_anomaly_map(const Heatmap& heatmap, int slice);
std::vector<AnomalyMap> compute_anomaly_maps(const Heatmap& heatmap);

// Axis-aligned voxel rectangle [y0, y1) x [x0, x1), clipped to the slice.
struct VoxelRect {
    int y0 = 0, x0 = 0, y1 = 0, x1 = 0;
    int height() const { return y1 - y0; }
    int width() const { return x1 - x0; }
};

// Receptive field of one anomaly unit through the 3x3 stride-8 averaging of
// 24x24 patches: 40x40 voxels for interior units.
VoxelRect unit_receptive_field(int i, int j, int slice_h, int slice_w);
// Receptive field of the 3x3 unit context block centered on a unit: 56x56.
VoxelRect context_receptive_field(int i, int j, int slice_h, int slice_w);

// Units paired with calibration ground truth. A unit is labeled positive when
// at least `lesion_frac` of its 8x8 block is lesion; units that do not touch
// the gland are excluded from calibration.
struct LabeledUnitSet {
    std::vector<float> scores;
    std::vector<std::uint8_t> labels;
};
LabeledUnitSet label_units(const AnomalyMap& map, const Study& study, double lesion_frac = 0.5);

// T_opt = argmin FPR subject to TPR >= r over observed score thresholds;
// ties resolve to the highest threshold. Binarization is score >= T.
double calibrate_threshold(const LabeledUnitSet& units, double r);

struct Candidate {
    int slice = 0;
    int i = 0, j = 0;        // top-left unit of the 2x2 square
    double mean_score = 0.0; // mean of the four unit scores

    // 16x16 voxel block covered by the candidate.
    VoxelRect block() const { return {kUnitSize * i, kUnitSize * j, kUnitSize * (i + 2), kUnitSize * (j + 2)}; }
};

// Binarizes at T and reports 2x2 all-hot squares. Overlapping squares are
// grouped by connectivity; each group keeps its best-mean square plus any
// further squares that do not overlap an already kept one.
std::vector<Candidate> detect_candidates(const AnomalyMap& map, double threshold);

} // namespace radhop

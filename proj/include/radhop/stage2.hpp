#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "radhop/anomaly.hpp"
#include "radhop/radiomics.hpp"
#include "radhop/stage1.hpp"

namespace radhop {

// Stage-2 feature layout per candidate: 9 neighboring anomaly units plus
// their mean and population std (11), handcrafted radiomics per sequence
// (104 x 3), and the stage-1 RadHop vector at the ROI center (3000 at
// defaults) -> 3323 before stage-2 DFT.
struct Stage2Layout {
    static constexpr int kAnomaly = 11;
    static constexpr int kRadiomicsPerSequence = kRadiomicsFeatureCount;
    int radhop_len = 3000;
    int total() const { return kAnomaly + 3 * kRadiomicsPerSequence + radhop_len; }
};

// 3x3 unit block centered on the candidate's strongest unit, row-major, then
// mean, then population std; units outside the map contribute 0.
std::array<double, 11> anomaly_features(const AnomalyMap& map, const Candidate& candidate);

struct CandidateRecord {
    int study = -1;
    Candidate candidate;
    int label = -1; // 1 TP, 0 FP, -1 unknown
    double stage1_region_max = 0.0;
    double stage2_prob = -1.0;
};

struct Stage2Dataset {
    FeatureMatrix x; // n_candidates x 3323
    std::vector<std::uint8_t> labels;
    std::vector<CandidateRecord> records;
    Stage2Layout layout;
};

struct Stage2Options {
    double t_opt = 0.5;
    double iou_min = 0.1;          // candidate block vs lesion slice overlap
    RadiomicsConfig radiomics;
    DftConfig dft{32, 500};        // stage-2 DFT keep_k
    GbdtParams gbdt;
    int threads = 0;
};

// The ROI attached to a candidate: its 16x16 voxel block, masked to the
// gland (whole block when the gland does not reach it).
Roi candidate_roi(const Study& study, const Candidate& candidate);

// Candidate label: positive iff the 16x16 block overlaps some lesion of its
// slice with IoU >= iou_min.
int candidate_label(const Study& study, const Candidate& candidate, double iou_min);

// Builds the labeled stage-2 dataset over a cohort from stage-1 sweeps.
Stage2Dataset build_stage2_dataset(const std::vector<Study>& studies,
                                   const std::vector<Heatmap>& heatmaps,
                                   const Stage1Artifacts& stage1, const Stage2Options& options);

struct Stage2Model {
    DftSelection selection; // over the 3323-wide stage-2 features
    GbdtModel classifier;
};

Stage2Model train_stage2(const Stage2Dataset& dataset, const Stage2Options& options);

double stage2_predict(const Stage2Model& model, std::span<const float> features);

struct RefinedHeatmap {
    Heatmap heatmap;
    std::vector<CandidateRecord> candidates;
};

// Rescales each candidate region (its 16x16 block grown to the stage-1
// component containing it) by stage2_prob / region_max, clamped to [0,1].
// Overlapping regions are merged and take the highest stage-2 probability.
RefinedHeatmap refine_heatmap(const Heatmap& stage1, const Study& study,
                              const std::vector<CandidateRecord>& candidates,
                              double component_min_prob = 0.05);

} // namespace radhop

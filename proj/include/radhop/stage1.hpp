#pragma once

#include <cstdint>
#include <vector>

#include "radhop/anomaly.hpp"
#include "radhop/dft.hpp"
#include "radhop/gbdt.hpp"
#include "radhop/radhop.hpp"
#include "radhop/rng.hpp"
#include "radhop/volume.hpp"

namespace radhop {

// Hard-negative mining: dense-sweep negatives are binned by soft label and
// resampled with exponentially decaying counts N_i ~ exp(-lambda*(i-1)),
// i = 1..bins, normalized so the targets sum to total_negatives.
struct MiningConfig {
    double lambda = 0.4;
    int bins = 10;
    double neg_pos_ratio = 4.0;
    std::int64_t total_negatives = 0; // 0 = derive from ratio * positives

    void validate() const;
};

// Largest-remainder rounding of the normalized geometric series.
std::vector<std::int64_t> mining_bin_targets(std::int64_t total, double lambda, int bins);

// Returns selected indices into the negatives (ascending). Bins are equal
// width over [0,1]; a bin's shortfall is redistributed proportionally to the
// remaining bins' weights.
std::vector<std::int64_t> hard_negative_resample(std::span<const double> soft_labels,
                                                 const MiningConfig& config, Rng& rng);

// Everything needed to run stage-1 inference.
struct Stage1Artifacts {
    std::array<RadHopModel, 3> radhop;
    std::array<DftSelection, 3> dft;
    GbdtModel classifier; // the second-round model

    std::vector<float> features(const Patch& patch) const; // selected + fused
};

struct GridPrediction {
    int z = 0, y = 0, x = 0;
    float prob = 0.0f;
};

struct Stage1TrainOptions {
    std::uint64_t seed = 7;
    RadHopConfig radhop;
    DftConfig dft;
    GbdtParams gbdt;
    MiningConfig mining;
    int folds = 5;
    int sweep_stride = 8;
    int threads = 0;
};

struct Stage1TrainResult {
    Stage1Artifacts artifacts;
    GbdtModel step1_classifier;
    // Stride-grid predictions of the deployed classifier on the training
    // cohort, reusable for anomaly calibration without a second sweep.
    std::vector<std::vector<GridPrediction>> sweep_predictions;
    std::vector<std::int64_t> mining_bin_counts;
    std::int64_t n_positives = 0;
    std::int64_t n_step1_negatives = 0;
    std::int64_t n_dense_negatives = 0;
    bool single_study_warning = false;
};

// Two-step training: random-sampling round, soft labels over the dense
// negative sweep, exponential resampling by hardness, second round. The
// second-round classifier is the deployed one.
Stage1TrainResult train_stage1(const std::vector<Study>& studies,
                               const Stage1TrainOptions& options);

// Dense voxel-wise prediction over the gland on the stride grid (in-plane
// coordinates 4 + k*stride that keep the patch inside the volume); off-grid
// voxels take their nearest grid value, non-gland voxels are zero.
Heatmap predict_heatmap(const Study& study, const Stage1Artifacts& artifacts, int stride,
                        int threads = 0);

Heatmap assemble_heatmap(const Study& study, const std::vector<GridPrediction>& predictions,
                         int stride, int patch_size);

} // namespace radhop

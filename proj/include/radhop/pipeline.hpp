#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "radhop/config.hpp"
#include "radhop/metrics.hpp"
#include "radhop/stage2.hpp"

namespace radhop {

// The deployable artifact: stage-1 feature extractors and classifier, the
// calibrated anomaly threshold, and the stage-2 refinement model. Stored as
// one versioned little-endian container.
struct PipelineModel {
    RunConfig config;
    Stage1Artifacts stage1;
    double t_opt = 0.5;
    bool has_stage2 = false;
    Stage2Model stage2;
    std::uint64_t param_count = 0; // inference reals, verified on load
};

struct TrainReport {
    std::int64_t n_studies = 0;
    std::int64_t n_positive_patches = 0;
    std::int64_t n_step1_negatives = 0;
    std::int64_t n_dense_negatives = 0;
    std::vector<std::int64_t> mining_bin_counts;
    std::int64_t n_candidates = 0;
    std::int64_t n_tp_candidates = 0;
    double t_opt = 0.0;
    std::uint64_t param_count = 0;
    std::int64_t transform_flops_per_patch = 0;
    bool stage2_trained = false;
    std::vector<std::string> warnings;
};

PipelineModel train_pipeline(const std::vector<Study>& studies, const RunConfig& config,
                             TrainReport* report = nullptr);

struct PredictionResult {
    Heatmap stage1_heatmap;
    Heatmap final_heatmap; // refined, or the stage-1 map when stage1_only
    std::vector<AnomalyMap> anomaly;
    std::vector<CandidateRecord> candidates;
};

PredictionResult predict_study(const PipelineModel& model, const Study& study,
                               bool stage1_only = false);

// Inference-time stored reals: saab anchors/biases, global PCA vectors, tree
// thresholds/leaves/base scores, and the calibrated threshold.
std::uint64_t pipeline_param_count(const PipelineModel& model);

void save_pipeline(const PipelineModel& model, const std::string& path);
PipelineModel load_pipeline(const std::string& path);

// Cohort directories: one study subdirectory per case plus manifest.json.
struct ManifestCase {
    std::string id;
    int label = 0;
    int n_lesions = 0;
};

std::vector<ManifestCase> read_manifest(const std::string& cohort_dir);
void write_manifest(const std::string& cohort_dir, const std::vector<ManifestCase>& cases);

EvalReport evaluate_cohort(const std::string& cohort_dir, const std::string& pred_dir,
                           const RunConfig& config);

} // namespace radhop

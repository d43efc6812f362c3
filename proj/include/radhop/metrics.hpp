#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "radhop/volume.hpp"

namespace radhop {

// A detected lesion: one 6-connected 3D component of the thresholded heatmap,
// scored by its maximum probability.
struct Detection {
    std::vector<std::int64_t> voxels; // sorted linear voxel ids
    double score = 0.0;
};

// 6-connected components of mask-like predicate over a volume.
std::vector<std::vector<std::int64_t>> connected_components_6(
    const Volume& v, float threshold, std::int64_t min_voxels = 1);

std::vector<Detection> extract_detections(const Volume& heatmap, double min_prob = 0.05,
                                          std::int64_t min_voxels = 8);

// Ground-truth lesions of a study: voxel sets grouped by mask label.
std::vector<std::vector<std::int64_t>> lesion_voxel_sets(const Volume& lesion_mask);

double iou(std::span<const std::int64_t> a, std::span<const std::int64_t> b);

struct PrPoint {
    double score = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct ApResult {
    double ap = 0.0;
    std::vector<PrPoint> curve; // one point per ranked detection
};

// Detections ranked by descending score (ties: larger volume, then first
// voxel id, then study index); each detection greedily matches the
// highest-IoU unmatched ground-truth lesion of its study with IoU >= iou_min.
// AP is the step sum of (R_n - R_{n-1}) * P_n down the ranked list.
ApResult match_and_ap(const std::vector<std::vector<Detection>>& detections_per_study,
                      const std::vector<std::vector<std::vector<std::int64_t>>>& gt_per_study,
                      double iou_min = 0.1);

// Rank-statistic AUROC; ties count one half.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

inline double picai_score(double ap, double auroc_value) { return 0.5 * (ap + auroc_value); }

struct CaseResult {
    std::string id;
    int label = 0;
    double case_score = 0.0;
    int n_detections = 0;
};

struct EvalReport {
    double ap = 0.0;
    double auroc = 0.0;
    double score = 0.0;
    std::vector<PrPoint> curve;
    std::vector<CaseResult> cases;
};

} // namespace radhop

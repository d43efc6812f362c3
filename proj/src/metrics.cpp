#include "radhop/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace radhop {

std::vector<std::vector<std::int64_t>> connected_components_6(const Volume& v, float threshold,
                                                              std::int64_t min_voxels) {
    const int D = v.dims[0], H = v.dims[1], W = v.dims[2];
    std::vector<std::uint8_t> visited(static_cast<std::size_t>(v.voxel_count()), 0);
    std::vector<std::vector<std::int64_t>> comps;
    std::vector<std::int64_t> stack;

    for (std::int64_t seed = 0; seed < v.voxel_count(); ++seed) {
        if (visited[static_cast<std::size_t>(seed)] || v.data[static_cast<std::size_t>(seed)] < threshold) continue;
        std::vector<std::int64_t> comp;
        stack.clear();
        stack.push_back(seed);
        visited[static_cast<std::size_t>(seed)] = 1;
        while (!stack.empty()) {
            const std::int64_t id = stack.back();
            stack.pop_back();
            comp.push_back(id);
            const int z = static_cast<int>(id / (static_cast<std::int64_t>(H) * W));
            const int rem = static_cast<int>(id % (static_cast<std::int64_t>(H) * W));
            const int y = rem / W, x = rem % W;
            const int nz[6] = {z - 1, z + 1, z, z, z, z};
            const int ny[6] = {y, y, y - 1, y + 1, y, y};
            const int nx[6] = {x, x, x, x, x - 1, x + 1};
            for (int k = 0; k < 6; ++k) {
                if (nz[k] < 0 || nz[k] >= D || ny[k] < 0 || ny[k] >= H || nx[k] < 0 || nx[k] >= W)
                    continue;
                const std::int64_t nid = v.index(nz[k], ny[k], nx[k]);
                if (visited[static_cast<std::size_t>(nid)] || v.data[static_cast<std::size_t>(nid)] < threshold) continue;
                visited[static_cast<std::size_t>(nid)] = 1;
                stack.push_back(nid);
            }
        }
        if (static_cast<std::int64_t>(comp.size()) >= min_voxels) {
            std::sort(comp.begin(), comp.end());
            comps.push_back(std::move(comp));
        }
    }
    return comps;
}

std::vector<Detection> extract_detections(const Volume& heatmap, double min_prob,
                                          std::int64_t min_voxels) {
    heatmap.validate();
    auto comps = connected_components_6(heatmap, static_cast<float>(min_prob), min_voxels);
    std::vector<Detection> out;
    out.reserve(comps.size());
    for (auto& c : comps) {
        Detection d;
        d.score = 0.0;
        for (auto id : c) d.score = std::max(d.score, static_cast<double>(heatmap.data[static_cast<std::size_t>(id)]));
        d.voxels = std::move(c);
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<std::vector<std::int64_t>> lesion_voxel_sets(const Volume& lesion_mask) {
    std::map<int, std::vector<std::int64_t>> by_label;
    for (std::int64_t id = 0; id < lesion_mask.voxel_count(); ++id) {
        const int label = static_cast<int>(lesion_mask.data[static_cast<std::size_t>(id)]);
        if (label > 0) by_label[label].push_back(id);
    }
    std::vector<std::vector<std::int64_t>> out;
    out.reserve(by_label.size());
    for (auto& [label, voxels] : by_label) out.push_back(std::move(voxels));
    return out;
}

double iou(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
    if (a.empty() || b.empty()) throw ConfigError("iou of empty voxel set");
    std::size_t i = 0, j = 0, inter = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) {
            ++inter;
            ++i;
            ++j;
        } else if (a[i] < b[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

ApResult match_and_ap(const std::vector<std::vector<Detection>>& detections_per_study,
                      const std::vector<std::vector<std::vector<std::int64_t>>>& gt_per_study,
                      double iou_min) {
    if (detections_per_study.size() != gt_per_study.size())
        throw ShapeError("detections/gt study count mismatch");
    std::int64_t total_gt = 0;
    for (const auto& g : gt_per_study) total_gt += static_cast<std::int64_t>(g.size());
    if (total_gt == 0) throw DegenerateGroundTruth("no ground-truth lesions in cohort");

    struct Ranked {
        double score;
        std::size_t study, det;
        std::int64_t volume;
        std::int64_t first_voxel;
    };
    std::vector<Ranked> ranked;
    for (std::size_t s = 0; s < detections_per_study.size(); ++s)
        for (std::size_t k = 0; k < detections_per_study[s].size(); ++k) {
            const Detection& d = detections_per_study[s][k];
            ranked.push_back({d.score, s, k, static_cast<std::int64_t>(d.voxels.size()),
                              d.voxels.empty() ? 0 : d.voxels.front()});
        }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.volume != b.volume) return a.volume > b.volume;
        if (a.first_voxel != b.first_voxel) return a.first_voxel < b.first_voxel;
        return a.study < b.study;
    });

    std::vector<std::vector<std::uint8_t>> gt_matched(gt_per_study.size());
    for (std::size_t s = 0; s < gt_per_study.size(); ++s)
        gt_matched[s].assign(gt_per_study[s].size(), 0);

    ApResult res;
    std::int64_t tp = 0;
    double prev_recall = 0.0;
    std::int64_t rank = 0;
    for (const Ranked& r : ranked) {
        ++rank;
        const Detection& det = detections_per_study[r.study][r.det];
        int best_gt = -1;
        double best_iou = 0.0;
        for (std::size_t g = 0; g < gt_per_study[r.study].size(); ++g) {
            if (gt_matched[r.study][g]) continue;
            const double v = iou(det.voxels, gt_per_study[r.study][g]);
            if (v >= iou_min && v > best_iou) {
                best_iou = v;
                best_gt = static_cast<int>(g);
            }
        }
        if (best_gt >= 0) {
            gt_matched[r.study][static_cast<std::size_t>(best_gt)] = 1;
            ++tp;
        }
        const double precision = static_cast<double>(tp) / static_cast<double>(rank);
        const double recall = static_cast<double>(tp) / static_cast<double>(total_gt);
        res.ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        res.curve.push_back({r.score, precision, recall});
    }
    return res;
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw ShapeError("scores/labels length mismatch");
    std::int64_t n_pos = 0, n_neg = 0;
    for (auto l : labels) (l ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw DegenerateLabels("auroc needs both classes");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks for tied scores.
    double pos_rank_sum = 0.0;
    std::size_t k = 0;
    while (k < order.size()) {
        std::size_t k2 = k;
        while (k2 < order.size() && scores[order[k2]] == scores[order[k]]) ++k2;
        const double midrank = 0.5 * (static_cast<double>(k + 1) + static_cast<double>(k2));
        for (std::size_t t = k; t < k2; ++t)
            if (labels[order[t]]) pos_rank_sum += midrank;
        k = k2;
    }
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

} // namespace radhop

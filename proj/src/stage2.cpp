#include "radhop/stage2.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "radhop/metrics.hpp"
#include "radhop/parallel.hpp"

namespace radhop {

std::array<double, 11> anomaly_features(const AnomalyMap& map, const Candidate& candidate) {
    // Anchor on the strongest of the four units, row-major tie break.
    int ai = candidate.i, aj = candidate.j;
    float best = -1.0f;
    for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj) {
            const int i = candidate.i + di, j = candidate.j + dj;
            if (i < 0 || i >= map.rows || j < 0 || j >= map.cols) continue;
            if (map.at(i, j) > best) {
                best = map.at(i, j);
                ai = i;
                aj = j;
            }
        }

    std::array<double, 11> out{};
    double sum = 0.0;
    int k = 0;
    for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj, ++k) {
            const int i = ai + di, j = aj + dj;
            const double v =
                (i >= 0 && i < map.rows && j >= 0 && j < map.cols) ? map.at(i, j) : 0.0;
            out[static_cast<std::size_t>(k)] = v;
            sum += v;
        }
    const double mean = sum / 9.0;
    double var = 0.0;
    for (int t = 0; t < 9; ++t) var += (out[static_cast<std::size_t>(t)] - mean) * (out[static_cast<std::size_t>(t)] - mean);
    out[9] = mean;
    out[10] = std::sqrt(var / 9.0);
    return out;
}

Roi candidate_roi(const Study& study, const Candidate& candidate) {
    const VoxelRect block = candidate.block();
    Roi roi;
    roi.slice = candidate.slice;
    roi.height = block.height();
    roi.width = block.width();
    roi.origin = {block.y0, block.x0};
    roi.spacing_y = study.t2.spacing[1];
    roi.spacing_x = study.t2.spacing[2];
    roi.mask.assign(static_cast<std::size_t>(roi.height) * roi.width, 0);
    for (int s = 0; s < 3; ++s) roi.crops[static_cast<std::size_t>(s)].resize(roi.mask.size());

    bool any_gland = false;
    for (int y = 0; y < roi.height; ++y)
        for (int x = 0; x < roi.width; ++x) {
            const int sy = block.y0 + y, sx = block.x0 + x;
            const std::size_t id = static_cast<std::size_t>(y) * roi.width + x;
            for (int s = 0; s < 3; ++s)
                roi.crops[static_cast<std::size_t>(s)][id] = study.sequence(s).at(candidate.slice, sy, sx);
            const bool g = study.gland_mask.at(candidate.slice, sy, sx) > 0.5f;
            roi.mask[id] = g ? 1 : 0;
            any_gland = any_gland || g;
        }
    if (!any_gland) roi.mask.assign(roi.mask.size(), 1);

    double cy = 0, cx = 0, n = 0;
    for (int y = 0; y < roi.height; ++y)
        for (int x = 0; x < roi.width; ++x)
            if (roi.mask[static_cast<std::size_t>(y) * roi.width + x]) {
                cy += block.y0 + y;
                cx += block.x0 + x;
                n += 1;
            }
    roi.center_of_mass = {cy / n, cx / n};
    return roi;
}

int candidate_label(const Study& study, const Candidate& candidate, double iou_min) {
    if (!study.has_lesion_mask) return 0;
    const VoxelRect block = candidate.block();
    const int z = candidate.slice;

    std::map<int, std::int64_t> lesion_slice_area, inter;
    for (int y = 0; y < study.t2.dims[1]; ++y)
        for (int x = 0; x < study.t2.dims[2]; ++x) {
            const int label = static_cast<int>(study.lesion_mask.at(z, y, x));
            if (label <= 0) continue;
            lesion_slice_area[label] += 1;
            if (y >= block.y0 && y < block.y1 && x >= block.x0 && x < block.x1) inter[label] += 1;
        }
    const std::int64_t block_area = static_cast<std::int64_t>(block.height()) * block.width();
    for (const auto& [label, i] : inter) {
        const std::int64_t uni = block_area + lesion_slice_area[label] - i;
        if (static_cast<double>(i) / static_cast<double>(uni) >= iou_min) return 1;
    }
    return 0;
}

Stage2Dataset build_stage2_dataset(const std::vector<Study>& studies,
                                   const std::vector<Heatmap>& heatmaps,
                                   const Stage1Artifacts& stage1, const Stage2Options& options) {
    if (studies.size() != heatmaps.size()) throw ShapeError("studies/heatmaps count mismatch");

    Stage2Dataset ds;
    int radhop_len = 0;
    for (const auto& sel : stage1.dft) radhop_len += static_cast<int>(sel.kept.size());
    ds.layout.radhop_len = radhop_len;

    struct Job {
        int study;
        AnomalyMap map;
        Candidate cand;
    };
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < studies.size(); ++s) {
        const auto maps = compute_anomaly_maps(heatmaps[s]);
        for (const auto& map : maps)
            for (const auto& cand : detect_candidates(map, options.t_opt))
                jobs.push_back(Job{static_cast<int>(s), map, cand});
    }
    if (jobs.empty()) throw EmptyStage("no stage-2 candidates over the calibrated threshold");

    ds.x = FeatureMatrix(static_cast<std::int64_t>(jobs.size()), ds.layout.total());
    ds.labels.resize(jobs.size());
    ds.records.resize(jobs.size());
    parallel_for(
        static_cast<std::int64_t>(jobs.size()),
        [&](std::int64_t k) {
            const Job& job = jobs[static_cast<std::size_t>(k)];
            const Study& study = studies[static_cast<std::size_t>(job.study)];
            float* dst = ds.x.row(k);

            const auto anom = anomaly_features(job.map, job.cand);
            for (double v : anom) *dst++ = static_cast<float>(v);

            const Roi roi = candidate_roi(study, job.cand);
            for (int seq = 0; seq < 3; ++seq) {
                const auto f = extract_radiomics(roi, seq, options.radiomics);
                dst = std::copy(f.begin(), f.end(), dst);
            }
            const auto rh = radhop_roi_feature(roi, study, stage1.radhop, stage1.dft);
            std::copy(rh.begin(), rh.end(), dst);

            const int label = candidate_label(study, job.cand, options.iou_min);
            ds.labels[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(label);
            CandidateRecord rec;
            rec.study = job.study;
            rec.candidate = job.cand;
            rec.label = label;
            ds.records[static_cast<std::size_t>(k)] = rec;
        },
        options.threads);
    return ds;
}

Stage2Model train_stage2(const Stage2Dataset& dataset, const Stage2Options& options) {
    bool has_pos = false, has_neg = false;
    for (auto l : dataset.labels) (l ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw DegenerateLabels("train_stage2 needs TP and FP candidates");

    Stage2Model model;
    model.selection = dft_select(dataset.x, dataset.labels, options.dft, options.threads);
    FeatureMatrix selected(dataset.x.rows, static_cast<std::int64_t>(model.selection.kept.size()));
    for (std::int64_t i = 0; i < dataset.x.rows; ++i) {
        const float* src = dataset.x.row(i);
        float* dst = selected.row(i);
        for (std::size_t k = 0; k < model.selection.kept.size(); ++k)
            dst[k] = src[model.selection.kept[k]];
    }
    model.classifier = gbdt_train(selected, dataset.labels, options.gbdt, options.threads);
    return model;
}

double stage2_predict(const Stage2Model& model, std::span<const float> features) {
    const auto sel = model.selection.apply(features);
    return model.classifier.predict_proba(sel);
}

RefinedHeatmap refine_heatmap(const Heatmap& stage1, const Study& study,
                              const std::vector<CandidateRecord>& candidates,
                              double component_min_prob) {
    RefinedHeatmap out;
    out.heatmap = stage1;
    out.candidates = candidates;

    const Volume& v = stage1.prob;
    const auto comps = connected_components_6(v, static_cast<float>(component_min_prob), 1);
    std::vector<std::int32_t> comp_of(static_cast<std::size_t>(v.voxel_count()), -1);
    for (std::size_t c = 0; c < comps.size(); ++c)
        for (auto id : comps[c]) comp_of[static_cast<std::size_t>(id)] = static_cast<std::int32_t>(c);

    // Region of each candidate: block voxels plus every component they touch.
    // Candidates joined through shared components or overlapping blocks merge
    // into one region and take the highest stage-2 probability, so no voxel
    // is rescaled twice.
    std::vector<std::size_t> scored;
    for (std::size_t k = 0; k < candidates.size(); ++k)
        if (candidates[k].stage2_prob >= 0.0) scored.push_back(k);
    const std::size_t nc = scored.size();

    std::vector<std::size_t> parent(nc + comps.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
    const auto find = [&](std::size_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };
    const auto unite = [&](std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    };

    std::vector<std::vector<std::int64_t>> block_voxels(nc);
    for (std::size_t k = 0; k < nc; ++k) {
        const CandidateRecord& rec = candidates[scored[k]];
        const VoxelRect block = rec.candidate.block();
        for (int y = block.y0; y < block.y1; ++y)
            for (int x = block.x0; x < block.x1; ++x) {
                const std::int64_t id = v.index(rec.candidate.slice, y, x);
                block_voxels[k].push_back(id);
                if (comp_of[static_cast<std::size_t>(id)] >= 0)
                    unite(k, nc + static_cast<std::size_t>(comp_of[static_cast<std::size_t>(id)]));
            }
        for (std::size_t k2 = 0; k2 < k; ++k2) {
            const Candidate& a = candidates[scored[k]].candidate;
            const Candidate& b = candidates[scored[k2]].candidate;
            if (a.slice == b.slice && std::abs(a.i - b.i) <= 1 && std::abs(a.j - b.j) <= 1)
                unite(k, k2);
        }
    }

    struct Region {
        std::vector<std::int64_t> voxels;
        double p2 = 0.0;
        bool has_candidate = false;
    };
    std::map<std::size_t, Region> regions;
    for (std::size_t k = 0; k < nc; ++k) {
        Region& r = regions[find(k)];
        r.voxels.insert(r.voxels.end(), block_voxels[k].begin(), block_voxels[k].end());
        r.p2 = std::max(r.p2, candidates[scored[k]].stage2_prob);
        r.has_candidate = true;
    }
    for (std::size_t c = 0; c < comps.size(); ++c) {
        const std::size_t root = find(nc + c);
        auto it = regions.find(root);
        if (it == regions.end()) continue; // component without a candidate
        it->second.voxels.insert(it->second.voxels.end(), comps[c].begin(), comps[c].end());
    }

    for (auto& [root, region] : regions) {
        if (!region.has_candidate) continue;
        std::sort(region.voxels.begin(), region.voxels.end());
        region.voxels.erase(std::unique(region.voxels.begin(), region.voxels.end()),
                            region.voxels.end());
        double p1 = 0.0;
        for (auto id : region.voxels) p1 = std::max(p1, static_cast<double>(v.data[static_cast<std::size_t>(id)]));
        if (p1 <= 0.0) continue;
        const double factor = region.p2 / p1;
        for (auto id : region.voxels) {
            const double nv = static_cast<double>(out.heatmap.prob.data[static_cast<std::size_t>(id)]) * factor;
            out.heatmap.prob.data[static_cast<std::size_t>(id)] = static_cast<float>(std::clamp(nv, 0.0, 1.0));
        }
    }

    // Record the stage-1 region max for the CSV.
    for (auto& rec : out.candidates) {
        const VoxelRect block = rec.candidate.block();
        double p1 = 0.0;
        for (int y = block.y0; y < block.y1; ++y)
            for (int x = block.x0; x < block.x1; ++x) {
                const std::int64_t id = v.index(rec.candidate.slice, y, x);
                const std::int32_t c = comp_of[static_cast<std::size_t>(id)];
                p1 = std::max(p1, static_cast<double>(v.data[static_cast<std::size_t>(id)]));
                if (c >= 0)
                    for (auto cid : comps[static_cast<std::size_t>(c)])
                        p1 = std::max(p1, static_cast<double>(v.data[static_cast<std::size_t>(cid)]));
            }
        rec.stage1_region_max = p1;
    }
    return out;
}

} // namespace radhop

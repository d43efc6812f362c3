#include "radhop/stage1.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "radhop/parallel.hpp"

namespace radhop {

void MiningConfig::validate() const {
    if (lambda <= 0.0) throw ConfigError("mining lambda must be > 0");
    if (bins < 2) throw ConfigError("mining bins must be >= 2");
    if (neg_pos_ratio <= 0.0) throw ConfigError("neg_pos_ratio must be > 0");
    if (total_negatives < 0) throw ConfigError("total_negatives must be >= 0");
}

std::vector<std::int64_t> mining_bin_targets(std::int64_t total, double lambda, int bins) {
    if (bins < 2) throw ConfigError("mining bins must be >= 2");
    if (lambda <= 0.0) throw ConfigError("mining lambda must be > 0");
    if (total < 0) throw ConfigError("total must be >= 0");
    std::vector<double> w(static_cast<std::size_t>(bins));
    double sum = 0.0;
    for (int i = 0; i < bins; ++i) {
        w[static_cast<std::size_t>(i)] = std::exp(-lambda * i); // bin index i+1 in 1..bins
        sum += w[static_cast<std::size_t>(i)];
    }
    std::vector<std::int64_t> targets(static_cast<std::size_t>(bins));
    std::vector<std::pair<double, int>> remainders;
    std::int64_t assigned = 0;
    for (int i = 0; i < bins; ++i) {
        const double quota = static_cast<double>(total) * w[static_cast<std::size_t>(i)] / sum;
        targets[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::floor(quota));
        assigned += targets[static_cast<std::size_t>(i)];
        remainders.emplace_back(quota - std::floor(quota), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::int64_t k = 0; k < total - assigned; ++k)
        targets[static_cast<std::size_t>(remainders[static_cast<std::size_t>(k)].second)] += 1;
    return targets;
}

std::vector<std::int64_t> hard_negative_resample(std::span<const double> soft_labels,
                                                 const MiningConfig& config, Rng& rng) {
    config.validate();
    if (soft_labels.empty()) throw ConfigError("hard_negative_resample: empty negative set");
    const int bins = config.bins;
    const std::int64_t want = config.total_negatives;
    if (want <= 0) throw ConfigError("hard_negative_resample: total_negatives not set");

    // Equal-width soft-label bins over [0,1]; bin 1 holds the easiest samples.
    std::vector<std::vector<std::int64_t>> members(static_cast<std::size_t>(bins));
    for (std::size_t i = 0; i < soft_labels.size(); ++i) {
        const double s = std::clamp(soft_labels[i], 0.0, 1.0);
        const int b = std::min(static_cast<int>(s * bins), bins - 1);
        members[static_cast<std::size_t>(b)].push_back(static_cast<std::int64_t>(i));
    }
    for (auto& m : members) rng.shuffle(m);

    std::vector<double> weights(static_cast<std::size_t>(bins));
    for (int i = 0; i < bins; ++i) weights[static_cast<std::size_t>(i)] = std::exp(-config.lambda * i);

    std::vector<std::int64_t> take(static_cast<std::size_t>(bins), 0);
    std::vector<std::int64_t> targets = mining_bin_targets(want, config.lambda, bins);
    std::int64_t leftover = want;
    // First pass takes the exponential targets; shortfalls are redistributed
    // proportionally to the remaining bins until the budget or the pool runs
    // out. Every retargeted pass takes at least one sample, so this
    // terminates.
    while (leftover > 0) {
        for (int b = 0; b < bins; ++b) {
            const std::int64_t avail =
                static_cast<std::int64_t>(members[static_cast<std::size_t>(b)].size()) - take[static_cast<std::size_t>(b)];
            const std::int64_t t = std::min(targets[static_cast<std::size_t>(b)], avail);
            if (t > 0) {
                take[static_cast<std::size_t>(b)] += t;
                leftover -= t;
            }
        }
        if (leftover <= 0) break;
        // Recompute targets over bins with spare capacity.
        double wsum = 0.0;
        std::vector<int> spare;
        for (int b = 0; b < bins; ++b)
            if (static_cast<std::int64_t>(members[static_cast<std::size_t>(b)].size()) > take[static_cast<std::size_t>(b)]) {
                spare.push_back(b);
                wsum += weights[static_cast<std::size_t>(b)];
            }
        if (spare.empty()) break;
        std::fill(targets.begin(), targets.end(), 0);
        std::vector<std::pair<double, int>> rem;
        std::int64_t assigned = 0;
        for (int b : spare) {
            const double quota = static_cast<double>(leftover) * weights[static_cast<std::size_t>(b)] / wsum;
            targets[static_cast<std::size_t>(b)] = static_cast<std::int64_t>(std::floor(quota));
            assigned += targets[static_cast<std::size_t>(b)];
            rem.emplace_back(quota - std::floor(quota), b);
        }
        std::stable_sort(rem.begin(), rem.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::int64_t k = 0; k < leftover - assigned && k < static_cast<std::int64_t>(rem.size()); ++k)
            targets[static_cast<std::size_t>(rem[static_cast<std::size_t>(k)].second)] += 1;
    }

    std::vector<std::int64_t> selected;
    for (int b = 0; b < bins; ++b)
        for (std::int64_t k = 0; k < take[static_cast<std::size_t>(b)]; ++k)
            selected.push_back(members[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)]);
    std::sort(selected.begin(), selected.end());
    return selected;
}

std::vector<float> Stage1Artifacts::features(const Patch& patch) const {
    std::array<std::vector<float>, 3> selected;
    for (int s = 0; s < 3; ++s) {
        auto full = radhop_transform(radhop[static_cast<std::size_t>(s)], patch.pixels[static_cast<std::size_t>(s)]);
        selected[static_cast<std::size_t>(s)] = dft[static_cast<std::size_t>(s)].apply(full);
    }
    return fuse_sequences(selected[0], selected[1], selected[2], {&dft[0], &dft[1], &dft[2]});
}

namespace {

struct HarvestedPatch {
    Patch patch;
    int study = -1;
    bool on_grid = false;
};

} // namespace

Stage1TrainResult train_stage1(const std::vector<Study>& studies,
                               const Stage1TrainOptions& options) {
    if (studies.empty()) throw ConfigError("train_stage1: empty cohort");
    options.radhop.validate();
    options.dft.validate();
    options.gbdt.validate();
    options.mining.validate();
    if (options.folds < 2) throw ConfigError("folds must be >= 2");

    const int S = options.radhop.patch_size;
    PatchExtractOptions pe;
    pe.size = S;
    pe.stride = options.sweep_stride;

    // Harvest dense positives and the grid sweep from every study. The grid
    // patches double as the dense negative pool and as the calibration sweep.
    std::vector<HarvestedPatch> pos, grid;
    for (std::size_t s = 0; s < studies.size(); ++s) {
        auto patches = extract_patches(studies[s], pe);
        for (auto& p : patches) {
            HarvestedPatch hp;
            hp.study = static_cast<int>(s);
            const bool on_grid =
                (p.center[1] - kUnitSize / 2) % options.sweep_stride == 0 &&
                (p.center[2] - kUnitSize / 2) % options.sweep_stride == 0;
            hp.on_grid = on_grid;
            hp.patch = std::move(p);
            (hp.patch.label == PatchLabel::Positive ? pos : grid).push_back(std::move(hp));
        }
    }
    // Grid positives (lesion-touching grid points) live in `pos` as well;
    // recover them for the sweep by re-scanning.
    std::vector<const HarvestedPatch*> sweep;
    for (const auto& hp : pos)
        if (hp.on_grid) sweep.push_back(&hp);
    for (const auto& hp : grid) sweep.push_back(&hp);

    if (pos.empty()) throw DegenerateLabels("train_stage1: cohort has no positive patches");
    if (grid.empty()) throw DegenerateLabels("train_stage1: cohort has no negative patches");

    Stage1TrainResult result;
    result.n_positives = static_cast<std::int64_t>(pos.size());
    result.n_dense_negatives = static_cast<std::int64_t>(grid.size());
    result.single_study_warning = studies.size() < 2;

    // Step-1 training set: all positives plus ratio * P random grid negatives.
    Rng rng(options.seed);
    std::vector<std::int64_t> neg_order(grid.size());
    std::iota(neg_order.begin(), neg_order.end(), 0);
    rng.shuffle(neg_order);
    const std::int64_t want_neg = std::min<std::int64_t>(
        static_cast<std::int64_t>(grid.size()),
        static_cast<std::int64_t>(std::llround(options.mining.neg_pos_ratio * static_cast<double>(pos.size()))));
    result.n_step1_negatives = want_neg;
    std::vector<std::int64_t> step1_negs(neg_order.begin(), neg_order.begin() + want_neg);
    std::sort(step1_negs.begin(), step1_negs.end());

    // Fit RadHop per sequence on the step-1 patches.
    for (int seq = 0; seq < 3; ++seq) {
        PatchStack stack;
        stack.size = S;
        stack.data.reserve((pos.size() + step1_negs.size()) * static_cast<std::size_t>(S) * S);
        for (const auto& hp : pos) stack.append(hp.patch.pixels[static_cast<std::size_t>(seq)]);
        for (auto i : step1_negs) stack.append(grid[static_cast<std::size_t>(i)].patch.pixels[static_cast<std::size_t>(seq)]);
        result.artifacts.radhop[static_cast<std::size_t>(seq)] = fit_radhop(stack, options.radhop);
    }

    const std::int64_t n1 = static_cast<std::int64_t>(pos.size()) + want_neg;
    std::vector<std::uint8_t> y1(static_cast<std::size_t>(n1), 0);
    for (std::size_t i = 0; i < pos.size(); ++i) y1[i] = 1;

    const auto step1_patch = [&](std::int64_t i) -> const Patch& {
        if (i < static_cast<std::int64_t>(pos.size())) return pos[static_cast<std::size_t>(i)].patch;
        return grid[static_cast<std::size_t>(step1_negs[static_cast<std::size_t>(i - static_cast<std::int64_t>(pos.size()))])].patch;
    };

    // DFT per sequence on the full-width step-1 features, then the fused
    // step-1 matrix.
    FeatureMatrix x1;
    {
        std::array<FeatureMatrix, 3> selected;
        for (int seq = 0; seq < 3; ++seq) {
            const RadHopModel& model = result.artifacts.radhop[static_cast<std::size_t>(seq)];
            FeatureMatrix full(n1, model.layout.total());
            parallel_for(
                n1,
                [&](std::int64_t i) {
                    auto f = radhop_transform(model, step1_patch(i).pixels[static_cast<std::size_t>(seq)]);
                    std::copy(f.begin(), f.end(), full.row(i));
                },
                options.threads);
            result.artifacts.dft[static_cast<std::size_t>(seq)] =
                dft_select(full, y1, options.dft, options.threads);
            const auto& sel = result.artifacts.dft[static_cast<std::size_t>(seq)];
            FeatureMatrix& out = selected[static_cast<std::size_t>(seq)];
            out = FeatureMatrix(n1, static_cast<std::int64_t>(sel.kept.size()));
            parallel_for(
                n1,
                [&](std::int64_t i) {
                    const float* src = full.row(i);
                    float* dst = out.row(i);
                    for (std::size_t k = 0; k < sel.kept.size(); ++k)
                        dst[k] = src[sel.kept[k]];
                },
                options.threads);
        }
        x1 = FeatureMatrix(n1, selected[0].cols + selected[1].cols + selected[2].cols);
        parallel_for(
            n1,
            [&](std::int64_t i) {
                float* dst = x1.row(i);
                for (int seq = 0; seq < 3; ++seq) {
                    const FeatureMatrix& m = selected[static_cast<std::size_t>(seq)];
                    dst = std::copy(m.row(i), m.row(i) + m.cols, dst);
                }
            },
            options.threads);
    }

    result.step1_classifier = gbdt_train(x1, y1, options.gbdt, options.threads);

    // Selected + fused features for the rest of the sweep (grid negatives not
    // in the step-1 set).
    std::vector<std::int64_t> rest;
    {
        std::vector<std::uint8_t> in_step1(grid.size(), 0);
        for (auto i : step1_negs) in_step1[static_cast<std::size_t>(i)] = 1;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(grid.size()); ++i)
            if (!in_step1[static_cast<std::size_t>(i)]) rest.push_back(i);
    }
    FeatureMatrix x_rest(static_cast<std::int64_t>(rest.size()), x1.cols);
    parallel_for(
        static_cast<std::int64_t>(rest.size()),
        [&](std::int64_t k) {
            auto f = result.artifacts.features(grid[static_cast<std::size_t>(rest[static_cast<std::size_t>(k)])].patch);
            std::copy(f.begin(), f.end(), x_rest.row(k));
        },
        options.threads);

    // Soft labels: cross-fold prediction inside the step-1 training set,
    // first-round model for everything it never saw.
    std::vector<double> soft1 =
        gbdt_cross_predict(x1, y1, options.gbdt, options.folds, options.threads);
    std::vector<double> grid_soft(grid.size(), 0.0);
    for (std::size_t k = 0; k < step1_negs.size(); ++k)
        grid_soft[static_cast<std::size_t>(step1_negs[k])] = soft1[static_cast<std::size_t>(pos.size() + k)];
    std::vector<double> rest_soft(rest.size(), 0.0);
    parallel_for(
        static_cast<std::int64_t>(rest.size()),
        [&](std::int64_t k) {
            rest_soft[static_cast<std::size_t>(k)] = result.step1_classifier.predict_proba(x_rest.row_span(k));
        },
        options.threads);
    for (std::size_t k = 0; k < rest.size(); ++k) grid_soft[static_cast<std::size_t>(rest[k])] = rest_soft[k];

    // Hard-negative resampling over the dense pool.
    MiningConfig mining = options.mining;
    if (mining.total_negatives == 0) mining.total_negatives = want_neg;
    Rng mining_rng(options.seed + 0x5851F42D4C957F2DULL);
    std::vector<std::int64_t> mined = hard_negative_resample(grid_soft, mining, mining_rng);
    {
        result.mining_bin_counts.assign(static_cast<std::size_t>(mining.bins), 0);
        for (auto i : mined) {
            const int b = std::min(static_cast<int>(std::clamp(grid_soft[static_cast<std::size_t>(i)], 0.0, 1.0) * mining.bins),
                                   mining.bins - 1);
            result.mining_bin_counts[static_cast<std::size_t>(b)] += 1;
        }
    }

    // Step-2 training set: positives plus the mined negatives; features are
    // already available either in x1 or x_rest.
    std::vector<std::int64_t> rest_pos_of_grid(grid.size(), -1);
    for (std::size_t k = 0; k < rest.size(); ++k) rest_pos_of_grid[static_cast<std::size_t>(rest[k])] = static_cast<std::int64_t>(k);
    std::vector<std::int64_t> step1_pos_of_grid(grid.size(), -1);
    for (std::size_t k = 0; k < step1_negs.size(); ++k)
        step1_pos_of_grid[static_cast<std::size_t>(step1_negs[k])] = static_cast<std::int64_t>(pos.size() + k);

    FeatureMatrix x2(static_cast<std::int64_t>(pos.size()) + static_cast<std::int64_t>(mined.size()), x1.cols);
    std::vector<std::uint8_t> y2(static_cast<std::size_t>(x2.rows), 0);
    for (std::size_t i = 0; i < pos.size(); ++i) {
        std::copy(x1.row(static_cast<std::int64_t>(i)), x1.row(static_cast<std::int64_t>(i)) + x1.cols, x2.row(static_cast<std::int64_t>(i)));
        y2[i] = 1;
    }
    for (std::size_t k = 0; k < mined.size(); ++k) {
        const std::int64_t gi = mined[k];
        const std::int64_t dst = static_cast<std::int64_t>(pos.size() + k);
        if (step1_pos_of_grid[static_cast<std::size_t>(gi)] >= 0) {
            const std::int64_t src = step1_pos_of_grid[static_cast<std::size_t>(gi)];
            std::copy(x1.row(src), x1.row(src) + x1.cols, x2.row(dst));
        } else {
            const std::int64_t src = rest_pos_of_grid[static_cast<std::size_t>(gi)];
            std::copy(x_rest.row(src), x_rest.row(src) + x_rest.cols, x2.row(dst));
        }
    }
    result.artifacts.classifier = gbdt_train(x2, y2, options.gbdt, options.threads);

    // Sweep predictions of the deployed classifier, grouped per study.
    result.sweep_predictions.resize(studies.size());
    std::vector<float> sweep_probs(sweep.size(), 0.0f);
    parallel_for(
        static_cast<std::int64_t>(sweep.size()),
        [&](std::int64_t k) {
            const HarvestedPatch& hp = *sweep[static_cast<std::size_t>(k)];
            auto f = result.artifacts.features(hp.patch);
            sweep_probs[static_cast<std::size_t>(k)] =
                static_cast<float>(result.artifacts.classifier.predict_proba(f));
        },
        options.threads);
    for (std::size_t k = 0; k < sweep.size(); ++k) {
        const HarvestedPatch& hp = *sweep[k];
        result.sweep_predictions[static_cast<std::size_t>(hp.study)].push_back(
            GridPrediction{hp.patch.center[0], hp.patch.center[1], hp.patch.center[2], sweep_probs[k]});
    }
    return result;
}

Heatmap assemble_heatmap(const Study& study, const std::vector<GridPrediction>& predictions,
                         int stride, int patch_size) {
    const int D = study.t2.dims[0], H = study.t2.dims[1], W = study.t2.dims[2];
    const std::vector<int> gys = patch_grid_coords(H, patch_size, stride);
    const std::vector<int> gxs = patch_grid_coords(W, patch_size, stride);
    if (gys.empty() || gxs.empty()) throw ConfigError("volume too small for the patch grid");

    // Dense per-slice grids; unpredicted grid points stay zero.
    const int ky = static_cast<int>(gys.size()), kx = static_cast<int>(gxs.size());
    std::vector<float> gridv(static_cast<std::size_t>(D) * ky * kx, 0.0f);
    const auto gidx = [&](int coord, const std::vector<int>& coords) {
        const int k = static_cast<int>((coord - coords.front()) / stride);
        return k;
    };
    for (const auto& p : predictions) {
        const int iy = gidx(p.y, gys), ix = gidx(p.x, gxs);
        if (p.z < 0 || p.z >= D || iy < 0 || iy >= ky || ix < 0 || ix >= kx ||
            gys[static_cast<std::size_t>(iy)] != p.y || gxs[static_cast<std::size_t>(ix)] != p.x)
            throw ConfigError("prediction off the stride grid");
        gridv[(static_cast<std::size_t>(p.z) * ky + iy) * kx + ix] = p.prob;
    }

    Heatmap hm;
    hm.patch_size = patch_size;
    hm.stride = stride;
    hm.prob = Volume(study.t2.dims, study.t2.spacing, 0.0f);
    const auto nearest = [&](int v, const std::vector<int>& coords) {
        const int k = static_cast<int>(std::lround(static_cast<double>(v - coords.front()) / stride));
        return std::clamp(k, 0, static_cast<int>(coords.size()) - 1);
    };
    for (int z = 0; z < D; ++z)
        for (int y = 0; y < H; ++y) {
            const int iy = nearest(y, gys);
            for (int x = 0; x < W; ++x) {
                if (study.gland_mask.at(z, y, x) <= 0.5f) continue;
                const int ix = nearest(x, gxs);
                hm.prob.at(z, y, x) = gridv[(static_cast<std::size_t>(z) * ky + iy) * kx + ix];
            }
        }
    return hm;
}

Heatmap predict_heatmap(const Study& study, const Stage1Artifacts& artifacts, int stride,
                        int threads) {
    if (stride < 1) throw ConfigError("stride must be >= 1");
    bool any_gland = std::any_of(study.gland_mask.data.begin(), study.gland_mask.data.end(),
                                 [](float v) { return v > 0.5f; });
    if (!any_gland) throw ConfigError("predict_heatmap: empty gland mask");

    const int S = artifacts.radhop[0].config.patch_size;
    const int D = study.t2.dims[0], H = study.t2.dims[1], W = study.t2.dims[2];
    const std::vector<int> gys = patch_grid_coords(H, S, stride);
    const std::vector<int> gxs = patch_grid_coords(W, S, stride);

    std::vector<GridPrediction> sites;
    for (int z = 0; z < D; ++z)
        for (int gy : gys)
            for (int gx : gxs)
                if (study.gland_mask.at(z, gy, gx) > 0.5f)
                    sites.push_back(GridPrediction{z, gy, gx, 0.0f});

    parallel_for(
        static_cast<std::int64_t>(sites.size()),
        [&](std::int64_t k) {
            GridPrediction& gp = sites[static_cast<std::size_t>(k)];
            const PatchWindow w = patch_window(gp.y, gp.x, S);
            Patch p = crop_patch(study, gp.z, w.y0, w.x0, S);
            auto f = artifacts.features(p);
            gp.prob = static_cast<float>(artifacts.classifier.predict_proba(f));
        },
        threads);
    return assemble_heatmap(study, sites, stride, S);
}

} // namespace radhop

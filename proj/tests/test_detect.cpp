#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "radhop/anomaly.hpp"
#include "radhop/config.hpp"
#include "radhop/metrics.hpp"
#include "radhop/pipeline.hpp"
#include "radhop/radiomics.hpp"
#include "radhop/rng.hpp"
#include "radhop/stage2.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace radhop;
namespace fs = std::filesystem;

namespace {

Heatmap uniform_heatmap(std::array<int, 3> dims, float p) {
    Heatmap hm;
    hm.patch_size = 24;
    hm.stride = 8;
    hm.prob = Volume(dims, {1, 1, 1}, p);
    return hm;
}

AnomalyMap make_map(int rows, int cols, float fill = 0.0f) {
    AnomalyMap m;
    m.rows = rows;
    m.cols = cols;
    m.scores.assign(static_cast<std::size_t>(rows) * cols, fill);
    return m;
}

} // namespace

TEST_CASE("anomaly map: uniform predictions give uniform unit scores") {
    Heatmap hm = uniform_heatmap({2, 96, 96}, 0.37f);
    AnomalyMap map = compute_anomaly_map(hm, 1);
    CHECK(map.rows == 12);
    CHECK(map.cols == 12);
    for (float s : map.scores) CHECK(s == doctest::Approx(0.37).epsilon(1e-6));

    SUBCASE("wrong stride provenance is a ConfigError") {
        hm.stride = 4;
        CHECK_THROWS_AS(compute_anomaly_map(hm, 1), ConfigError);
        hm.stride = 8;
        hm.patch_size = 32;
        CHECK_THROWS_AS(compute_anomaly_map(hm, 1), ConfigError);
    }
}

TEST_CASE("anomaly map: a single hot grid point spreads 1/9 over nine units") {
    Heatmap hm = uniform_heatmap({1, 96, 96}, 0.0f);
    // Grid point of unit (5, 6) sits at voxel (8*5+4, 8*6+4).
    hm.prob.at(0, 44, 52) = 1.0f;
    AnomalyMap map = compute_anomaly_map(hm, 0);
    for (int i = 0; i < map.rows; ++i)
        for (int j = 0; j < map.cols; ++j) {
            const bool touched = std::abs(i - 5) <= 1 && std::abs(j - 6) <= 1;
            CHECK(map.at(i, j) == doctest::Approx(touched ? 1.0 / 9.0 : 0.0).epsilon(1e-7));
        }
}

TEST_CASE("anomaly geometry: 40x40 unit receptive field, 56x56 context") {
    const VoxelRect rf = unit_receptive_field(5, 5, 400, 400);
    CHECK(rf.height() == 40);
    CHECK(rf.width() == 40);
    const VoxelRect ctx = context_receptive_field(5, 5, 400, 400);
    CHECK(ctx.height() == 56);
    CHECK(ctx.width() == 56);
    Candidate c;
    c.i = 2;
    c.j = 3;
    const VoxelRect block = c.block();
    CHECK(block.height() == 16);
    CHECK(block.width() == 16);
    CHECK(block.y0 == 16);
    CHECK(block.x0 == 24);
}

TEST_CASE("calibrate_threshold: sweep oracle and the TPR constraint") {
    SUBCASE("perfect separation picks a threshold between the classes") {
        LabeledUnitSet units;
        units.scores = {0.1f, 0.2f, 0.3f, 0.8f, 0.9f};
        units.labels = {0, 0, 0, 1, 1};
        const double t = calibrate_threshold(units, 0.95);
        CHECK(t == doctest::Approx(0.8));
        int fp = 0, tp = 0;
        for (std::size_t i = 0; i < units.scores.size(); ++i)
            if (units.scores[i] >= t) (units.labels[i] ? tp : fp)++;
        CHECK(fp == 0);
        CHECK(tp == 2);
    }
    SUBCASE("ten hand-labeled units match an exhaustive sweep") {
        LabeledUnitSet units;
        units.scores = {0.05f, 0.15f, 0.22f, 0.4f, 0.41f, 0.5f, 0.55f, 0.71f, 0.8f, 0.95f};
        units.labels = {0, 0, 1, 0, 1, 1, 0, 1, 1, 1};
        const double r = 0.8;
        const double got = calibrate_threshold(units, r);

        double best_t = -1, best_fpr = 2;
        for (float t : units.scores) {
            int tp = 0, fp = 0, np = 0, nn = 0;
            for (std::size_t i = 0; i < units.scores.size(); ++i) {
                (units.labels[i] ? np : nn)++;
                if (units.scores[i] >= t) (units.labels[i] ? tp : fp)++;
            }
            const double tpr = static_cast<double>(tp) / np;
            const double fpr = static_cast<double>(fp) / nn;
            if (tpr >= r && (fpr < best_fpr || (fpr == best_fpr && t > best_t))) {
                best_fpr = fpr;
                best_t = t;
            }
        }
        CHECK(got == doctest::Approx(best_t));
    }
    SUBCASE("random cohorts always satisfy TPR >= r at T_opt") {
        Rng rng(77);
        for (int trial = 0; trial < 50; ++trial) {
            LabeledUnitSet units;
            const int n = 30;
            int pos = 0;
            for (int i = 0; i < n; ++i) {
                units.labels.push_back(rng.uniform01() < 0.3 ? 1 : 0);
                pos += units.labels.back();
                units.scores.push_back(static_cast<float>(rng.uniform01()));
            }
            if (pos == 0) continue;
            const double r = 0.9;
            const double t = calibrate_threshold(units, r);
            int tp = 0;
            for (std::size_t i = 0; i < units.scores.size(); ++i)
                if (units.labels[i] && units.scores[i] >= t) ++tp;
            CHECK(static_cast<double>(tp) / pos >= r);
        }
    }
    SUBCASE("no positive units is DegenerateLabels") {
        LabeledUnitSet units;
        units.scores = {0.1f, 0.5f};
        units.labels = {0, 0};
        CHECK_THROWS_AS(calibrate_threshold(units, 0.95), DegenerateLabels);
    }
}

TEST_CASE("detect_candidates: isolated unit, exact square, 3x3 dedup") {
    AnomalyMap m = make_map(8, 8);
    SUBCASE("isolated hot unit yields nothing") {
        m.at(3, 3) = 1.0f;
        CHECK(detect_candidates(m, 0.5).empty());
    }
    SUBCASE("an exact 2x2 square yields one candidate") {
        m.at(2, 2) = m.at(2, 3) = m.at(3, 2) = m.at(3, 3) = 0.9f;
        auto c = detect_candidates(m, 0.5);
        REQUIRE(c.size() == 1);
        CHECK(c[0].i == 2);
        CHECK(c[0].j == 2);
        CHECK(c[0].mean_score == doctest::Approx(0.9));
    }
    SUBCASE("3x3 hot square matches the documented dedup rule by brute force") {
        Rng rng(10);
        for (int trial = 0; trial < 40; ++trial) {
            AnomalyMap map = make_map(6, 6);
            for (auto& s : map.scores) s = static_cast<float>(rng.uniform01());
            for (int i = 2; i < 5; ++i)
                for (int j = 1; j < 4; ++j) map.at(i, j) = static_cast<float>(0.6 + 0.4 * rng.uniform01());
            const double t = 0.55;
            auto got = detect_candidates(map, t);

            // Independent reimplementation of the rule.
            struct Sq {
                int i, j;
                double mean;
            };
            std::vector<Sq> squares;
            for (int i = 0; i + 1 < map.rows; ++i)
                for (int j = 0; j + 1 < map.cols; ++j)
                    if (map.at(i, j) >= t && map.at(i + 1, j) >= t && map.at(i, j + 1) >= t &&
                        map.at(i + 1, j + 1) >= t)
                        squares.push_back({i, j,
                                           0.25 * (map.at(i, j) + map.at(i + 1, j) +
                                                   map.at(i, j + 1) + map.at(i + 1, j + 1))});
            // Connected grouping via repeated expansion.
            std::vector<int> group(squares.size());
            for (std::size_t k = 0; k < squares.size(); ++k) group[k] = static_cast<int>(k);
            bool changed = true;
            const auto overlap = [&](const Sq& a, const Sq& b) {
                return std::abs(a.i - b.i) <= 1 && std::abs(a.j - b.j) <= 1;
            };
            while (changed) {
                changed = false;
                for (std::size_t a = 0; a < squares.size(); ++a)
                    for (std::size_t b = 0; b < squares.size(); ++b)
                        if (overlap(squares[a], squares[b]) && group[a] != group[b]) {
                            const int g = std::min(group[a], group[b]);
                            group[a] = group[b] = g;
                            changed = true;
                        }
            }
            std::vector<std::size_t> order(squares.size());
            for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (squares[a].mean != squares[b].mean) return squares[a].mean > squares[b].mean;
                if (squares[a].i != squares[b].i) return squares[a].i < squares[b].i;
                return squares[a].j < squares[b].j;
            });
            std::vector<std::size_t> kept;
            for (std::size_t idx : order) {
                bool clash = false;
                for (std::size_t other : kept)
                    if (group[idx] == group[other] && overlap(squares[idx], squares[other]))
                        clash = true;
                if (!clash) kept.push_back(idx);
            }
            std::set<std::pair<int, int>> expect;
            for (std::size_t idx : kept) expect.insert({squares[idx].i, squares[idx].j});
            std::set<std::pair<int, int>> actual;
            for (const auto& c : got) actual.insert({c.i, c.j});
            CHECK(actual == expect);
        }
    }
    SUBCASE("raising the threshold never increases the all-hot square count") {
        Rng rng(11);
        for (int trial = 0; trial < 30; ++trial) {
            AnomalyMap map = make_map(7, 7);
            for (auto& s : map.scores) s = static_cast<float>(rng.uniform01());
            int prev = 100;
            for (double t : {0.2, 0.4, 0.6, 0.8}) {
                int squares = 0;
                for (int i = 0; i + 1 < map.rows; ++i)
                    for (int j = 0; j + 1 < map.cols; ++j)
                        if (map.at(i, j) >= t && map.at(i + 1, j) >= t && map.at(i, j + 1) >= t &&
                            map.at(i + 1, j + 1) >= t)
                            ++squares;
                CHECK(squares <= prev);
                prev = squares;
            }
        }
    }
}

TEST_CASE("label_units: gland scoping and the lesion fraction rule") {
    auto [study, lesions] = generate_phantom(fixtures::tiny_phantom_spec(64, 1));
    Heatmap hm = uniform_heatmap(study.t2.dims, 0.5f);
    AnomalyMap map = compute_anomaly_map(hm, study.t2.dims[0] / 2);
    LabeledUnitSet units = label_units(map, study, 0.5);
    CHECK(!units.scores.empty());
    CHECK(units.scores.size() < static_cast<std::size_t>(map.rows) * map.cols);

    // Recompute one unit's label directly.
    const int z = study.t2.dims[0] / 2;
    std::size_t k = 0;
    for (int i = 0; i < map.rows; ++i)
        for (int j = 0; j < map.cols; ++j) {
            int gland = 0, lesion = 0;
            for (int y = 8 * i; y < 8 * (i + 1); ++y)
                for (int x = 8 * j; x < 8 * (j + 1); ++x) {
                    gland += study.gland_mask.at(z, y, x) > 0.5f;
                    lesion += study.lesion_mask.at(z, y, x) > 0.5f;
                }
            if (gland == 0) continue;
            CHECK(units.labels[k] == (lesion >= 32 ? 1 : 0));
            ++k;
        }
    CHECK(k == units.labels.size());
}

// ----------------------------------------------------------------- radiomics

namespace {

Roi square_roi(const std::vector<float>& pixels, int side, double sy = 1.0, double sx = 1.0) {
    Roi roi;
    roi.height = side;
    roi.width = side;
    roi.mask.assign(static_cast<std::size_t>(side) * side, 1);
    for (int s = 0; s < 3; ++s) roi.crops[static_cast<std::size_t>(s)] = pixels;
    roi.spacing_y = sy;
    roi.spacing_x = sx;
    roi.center_of_mass = {side / 2.0, side / 2.0};
    return roi;
}

int feature_index(const std::string& name) {
    const auto& names = radiomics_feature_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    throw std::runtime_error("unknown feature: " + name);
}

} // namespace

TEST_CASE("radiomics: family sizes total 104") {
    const auto sizes = radiomics_family_sizes();
    CHECK(sizes == std::array<int, 7>{19, 10, 24, 16, 16, 5, 14});
    int total = 0;
    for (int s : sizes) total += s;
    CHECK(total == 104);
    CHECK(radiomics_feature_names().size() == 104);
    CHECK(kRadiomicsFeatureCount == 104);
}

TEST_CASE("radiomics: constant ROI degenerates cleanly") {
    std::vector<float> px(36, 4.5f);
    Roi roi = square_roi(px, 6);
    RadiomicsConfig cfg;
    auto f = extract_radiomics(roi, 0, cfg);
    REQUIRE(f.size() == 104);
    CHECK(f[static_cast<std::size_t>(feature_index("firstorder_Variance"))] == doctest::Approx(0.0));
    CHECK(f[static_cast<std::size_t>(feature_index("firstorder_Entropy"))] == doctest::Approx(0.0));
    CHECK(f[static_cast<std::size_t>(feature_index("firstorder_Uniformity"))] == doctest::Approx(1.0));
    CHECK(f[static_cast<std::size_t>(feature_index("glcm_Contrast"))] == doctest::Approx(0.0));
    CHECK(f[static_cast<std::size_t>(feature_index("ngtdm_Contrast"))] == doctest::Approx(0.0));
    CHECK(f[static_cast<std::size_t>(feature_index("ngtdm_Busyness"))] == doctest::Approx(0.0));
    CHECK(f[static_cast<std::size_t>(feature_index("ngtdm_Strength"))] == doctest::Approx(0.0));
    for (float v : f) CHECK(std::isfinite(v));
}

TEST_CASE("radiomics: 4x4 checkerboard matches hand-built GLCM and GLRLM") {
    std::vector<float> px(16);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) px[static_cast<std::size_t>(y * 4 + x)] = (y + x) % 2 ? 1.0f : 0.0f;
    Roi roi = square_roi(px, 4);
    RadiomicsConfig cfg;
    cfg.gray_levels = 2;
    auto f = extract_radiomics(roi, 0, cfg);

    // Direction-averaged symmetric GLCM of the checkerboard is uniform 1/4
    // (horizontal/vertical pairs all unequal, diagonal pairs all equal).
    CHECK(f[static_cast<std::size_t>(feature_index("glcm_Contrast"))] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(f[static_cast<std::size_t>(feature_index("glcm_Id"))] == doctest::Approx(0.75).epsilon(1e-6));
    CHECK(f[static_cast<std::size_t>(feature_index("glcm_JointEnergy"))] == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(f[static_cast<std::size_t>(feature_index("glcm_MaximumProbability"))] == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(f[static_cast<std::size_t>(feature_index("glcm_Correlation"))] == doctest::Approx(0.0).epsilon(1e-6));

    // Hand-built run-length matrix summed over the four directions:
    // R(1,1)=18, R(2,1)=18, R(1,2)=R(1,3)=R(2,2)=R(2,3)=2, R(1,4)=R(2,4)=1.
    const double nr = 46.0;
    const double sre =
        (18.0 + 18.0 + (2.0 + 2.0) / 4.0 + (2.0 + 2.0) / 9.0 + (1.0 + 1.0) / 16.0) / nr;
    const double lre =
        (18.0 + 18.0 + 4.0 * (2.0 + 2.0) + 9.0 * (2.0 + 2.0) + 16.0 * (1.0 + 1.0)) / nr;
    CHECK(f[static_cast<std::size_t>(feature_index("glrlm_ShortRunEmphasis"))] == doctest::Approx(sre).epsilon(1e-6));
    CHECK(f[static_cast<std::size_t>(feature_index("glrlm_LongRunEmphasis"))] == doctest::Approx(lre).epsilon(1e-6));
    CHECK(f[static_cast<std::size_t>(feature_index("glrlm_RunPercentage"))] == doctest::Approx(46.0 / 64.0).epsilon(1e-6));
}

TEST_CASE("radiomics: shift invariance of texture, rotation invariance of GLCM") {
    Rng rng(2025);
    std::vector<float> px(64);
    for (auto& v : px) v = static_cast<float>(static_cast<int>(rng.index(32)));
    Roi roi = square_roi(px, 8);
    RadiomicsConfig cfg;
    auto base = extract_radiomics(roi, 0, cfg);

    SUBCASE("adding a constant moves only first-order location features") {
        std::vector<float> shifted(px);
        for (auto& v : shifted) v += 7.0f;
        Roi roi2 = square_roi(shifted, 8);
        auto f2 = extract_radiomics(roi2, 0, cfg);
        const auto& names = radiomics_feature_names();
        const int glcm_begin = 29;
        for (std::size_t i = static_cast<std::size_t>(glcm_begin); i < f2.size(); ++i)
            CHECK(f2[i] == doctest::Approx(base[i]).epsilon(1e-6));
        CHECK(f2[static_cast<std::size_t>(feature_index("firstorder_Mean"))] ==
              doctest::Approx(base[static_cast<std::size_t>(feature_index("firstorder_Mean"))] + 7.0).epsilon(1e-6));
        CHECK(names[static_cast<std::size_t>(glcm_begin)] == "glcm_Autocorrelation");
    }
    SUBCASE("rotating the image by 90 degrees preserves averaged GLCM features") {
        std::vector<float> rot(64);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) rot[static_cast<std::size_t>(x * 8 + (7 - y))] = px[static_cast<std::size_t>(y * 8 + x)];
        Roi roi2 = square_roi(rot, 8);
        auto f2 = extract_radiomics(roi2, 0, cfg);
        for (int k = 0; k < 24; ++k) {
            const int idx = 29 + k;
            CHECK(f2[static_cast<std::size_t>(idx)] == doctest::Approx(base[static_cast<std::size_t>(idx)]).epsilon(1e-6));
        }
    }
    SUBCASE("all features finite on random masked ROIs") {
        for (int trial = 0; trial < 25; ++trial) {
            Roi r2 = square_roi(px, 8);
            int kept = 0;
            for (auto& m : r2.mask) {
                m = rng.uniform01() < 0.5 ? 1 : 0;
                kept += m;
            }
            if (kept < 2) continue;
            auto f2 = extract_radiomics(r2, 0, cfg);
            for (float v : f2) CHECK(std::isfinite(v));
        }
    }
    SUBCASE("a sub-2-pixel mask is DegenerateRoi") {
        Roi r2 = square_roi(px, 8);
        r2.mask.assign(64, 0);
        r2.mask[5] = 1;
        CHECK_THROWS_AS(extract_radiomics(r2, 0, cfg), DegenerateRoi);
    }
}

TEST_CASE("radiomics: shape features on a single pixel pair and a square") {
    SUBCASE("unit square mask") {
        std::vector<float> px(16, 1.0f);
        Roi roi = square_roi(px, 4);
        roi.mask.assign(16, 0);
        for (int y = 1; y <= 2; ++y)
            for (int x = 1; x <= 2; ++x) roi.mask[static_cast<std::size_t>(y * 4 + x)] = 1;
        roi.crops[0][static_cast<std::size_t>(1 * 4 + 1)] = 2.0f; // avoid a fully constant ROI
        RadiomicsConfig cfg;
        auto f = extract_radiomics(roi, 0, cfg);
        CHECK(f[static_cast<std::size_t>(feature_index("shape2D_PixelSurface"))] == doctest::Approx(4.0));
        // 2x2 marching-squares outline: an octagon of area 3.5, perimeter
        // 4 + 4*sqrt(0.5).
        CHECK(f[static_cast<std::size_t>(feature_index("shape2D_MeshSurface"))] == doctest::Approx(3.5).epsilon(1e-6));
        CHECK(f[static_cast<std::size_t>(feature_index("shape2D_Perimeter"))] ==
              doctest::Approx(4.0 + 4.0 * std::sqrt(0.5)).epsilon(1e-6));
        CHECK(f[static_cast<std::size_t>(feature_index("shape2D_Elongation"))] == doctest::Approx(1.0).epsilon(1e-6));
    }
}

// ------------------------------------------------------------------- stage 2

TEST_CASE("stage2: anomaly feature block, mean and population std") {
    AnomalyMap map = make_map(6, 6, 0.2f);
    SUBCASE("uniform block gives (p x 9, p, 0)") {
        Candidate c;
        c.slice = 0;
        c.i = 2;
        c.j = 2;
        auto f = anomaly_features(map, c);
        for (int k = 0; k < 9; ++k) CHECK(f[static_cast<std::size_t>(k)] == doctest::Approx(0.2).epsilon(1e-7));
        CHECK(f[9] == doctest::Approx(0.2).epsilon(1e-7));
        CHECK(f[10] == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("hand-arranged block around the anchor") {
        // Anchor at (2,2) with the highest score in the candidate square.
        const double vals[9] = {0.1, 0.2, 0.3, 0.4, 0.9, 0.5, 0.6, 0.7, 0.8};
        int k = 0;
        for (int i = 1; i <= 3; ++i)
            for (int j = 1; j <= 3; ++j) map.at(i, j) = static_cast<float>(vals[k++]);
        Candidate c;
        c.i = 2;
        c.j = 2;
        auto f = anomaly_features(map, c);
        double mean = 0;
        for (double v : vals) mean += v;
        mean /= 9.0;
        double var = 0;
        for (double v : vals) var += (v - mean) * (v - mean);
        CHECK(f[4] == doctest::Approx(0.9).epsilon(1e-7)); // anchor at center
        CHECK(f[9] == doctest::Approx(mean).epsilon(1e-7));
        CHECK(f[10] == doctest::Approx(std::sqrt(var / 9.0)).epsilon(1e-7));
    }
    SUBCASE("border candidates fill missing neighbors with zero") {
        AnomalyMap m2 = make_map(4, 4, 0.0f);
        m2.at(0, 0) = 0.9f;
        m2.at(0, 1) = 0.8f;
        m2.at(1, 0) = 0.7f;
        m2.at(1, 1) = 0.6f;
        Candidate c;
        c.i = 0;
        c.j = 0;
        auto f = anomaly_features(m2, c);
        // Anchor (0,0): the 3x3 block centered there hangs over the border.
        CHECK(f[0] == doctest::Approx(0.0));
        CHECK(f[1] == doctest::Approx(0.0));
        CHECK(f[3] == doctest::Approx(0.0));
        CHECK(f[4] == doctest::Approx(0.9).epsilon(1e-7));
        CHECK(f[5] == doctest::Approx(0.8).epsilon(1e-7));
        CHECK(f[7] == doctest::Approx(0.7).epsilon(1e-7));
        CHECK(f[8] == doctest::Approx(0.6).epsilon(1e-7));
    }
}

TEST_CASE("stage2: refine_heatmap rescale rules") {
    auto [study, lesions] = generate_phantom(fixtures::tiny_phantom_spec(31, 1));
    Heatmap hm = uniform_heatmap(study.t2.dims, 0.0f);
    // One hot component on slice 4 covering the candidate block.
    for (int y = 16; y < 32; ++y)
        for (int x = 16; x < 32; ++x) hm.prob.at(4, y, x) = 0.6f;
    hm.prob.at(4, 20, 20) = 0.8f;

    CandidateRecord rec;
    rec.candidate.slice = 4;
    rec.candidate.i = 2;
    rec.candidate.j = 2;

    SUBCASE("p2 equal to the region max leaves the region unchanged") {
        rec.stage2_prob = 0.8;
        RefinedHeatmap out = refine_heatmap(hm, study, {rec}, 0.05);
        CHECK(out.heatmap.prob.data == hm.prob.data);
    }
    SUBCASE("p2 = 0 zeroes the region, untouched voxels stay put") {
        rec.stage2_prob = 0.0;
        Heatmap hm2 = hm;
        hm2.prob.at(0, 40, 40) = 0.3f; // far away, no candidate
        RefinedHeatmap out = refine_heatmap(hm2, study, {rec}, 0.05);
        for (int y = 16; y < 32; ++y)
            for (int x = 16; x < 32; ++x) CHECK(out.heatmap.prob.at(4, y, x) == 0.0f);
        CHECK(out.heatmap.prob.at(0, 40, 40) == 0.3f);
        CHECK(out.candidates[0].stage1_region_max == doctest::Approx(0.8));
    }
    SUBCASE("rescaling never exceeds one") {
        rec.stage2_prob = 1.0;
        RefinedHeatmap out = refine_heatmap(hm, study, {rec}, 0.05);
        for (float v : out.heatmap.prob.data) CHECK(v <= 1.0f);
        // Peak rescaled from 0.8 to 1.0.
        CHECK(out.heatmap.prob.at(4, 20, 20) == doctest::Approx(1.0));
        CHECK(out.heatmap.prob.at(4, 16, 16) == doctest::Approx(0.6 / 0.8).epsilon(1e-6));
    }
}

TEST_CASE("stage2: candidate labels against lesion slices") {
    auto [study, lesions] = generate_phantom(fixtures::tiny_phantom_spec(31, 1));
    REQUIRE(lesions.size() == 1);
    // Use the slice with the largest lesion cross-section and its centroid.
    int z = -1;
    std::int64_t best_area = 0;
    for (int zz = 0; zz < study.t2.dims[0]; ++zz) {
        std::int64_t area = 0;
        for (int y = 0; y < 48; ++y)
            for (int x = 0; x < 48; ++x) area += study.lesion_mask.at(zz, y, x) > 0.5f;
        if (area > best_area) {
            best_area = area;
            z = zz;
        }
    }
    REQUIRE(z >= 0);
    double cy = 0, cx = 0;
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x)
            if (study.lesion_mask.at(z, y, x) > 0.5f) {
                cy += y;
                cx += x;
            }
    cy /= static_cast<double>(best_area);
    cx /= static_cast<double>(best_area);
    Candidate hit;
    hit.slice = z;
    hit.i = std::clamp(static_cast<int>(cy - 8.0) / 8, 0, 4);
    hit.j = std::clamp(static_cast<int>(cx - 8.0) / 8, 0, 4);
    Candidate miss;
    miss.slice = z;
    miss.i = hit.i >= 2 ? 0 : 4;
    miss.j = hit.j >= 2 ? 0 : 4;
    CHECK(candidate_label(study, hit, 0.05) == 1);
    CHECK(candidate_label(study, miss, 0.1) == 0);

    SUBCASE("clean studies label every candidate negative") {
        auto [clean, none] = generate_phantom(fixtures::tiny_phantom_spec(32, 0));
        CHECK(candidate_label(clean, hit, 0.1) == 0);
    }
}

// ------------------------------------------------------------------- metrics

TEST_CASE("metrics: detections via flood fill") {
    Volume v({3, 8, 8}, {1, 1, 1}, 0.0f);
    SUBCASE("all-zero heatmap") { CHECK(extract_detections(v).empty()); }
    SUBCASE("one solid blob") {
        for (int z = 0; z < 2; ++z)
            for (int y = 2; y < 5; ++y)
                for (int x = 2; x < 5; ++x) v.at(z, y, x) = 0.9f;
        auto dets = extract_detections(v, 0.05, 8);
        REQUIRE(dets.size() == 1);
        CHECK(dets[0].score == doctest::Approx(0.9));
        CHECK(dets[0].voxels.size() == 18);
    }
    SUBCASE("two blobs separated by a zero plane, checked against a flood-fill oracle") {
        Rng rng(3);
        for (int trial = 0; trial < 20; ++trial) {
            Volume u({4, 10, 10}, {1, 1, 1}, 0.0f);
            for (auto& x : u.data) x = rng.uniform01() < 0.3 ? 0.5f : 0.0f;
            for (int y = 0; y < 10; ++y)
                for (int x = 0; x < 10; ++x) u.at(2, y, x) = 0.0f; // separating plane

            auto dets = extract_detections(u, 0.05, 1);

            // Independent BFS oracle.
            std::set<std::int64_t> seen;
            int comps = 0;
            for (std::int64_t s = 0; s < u.voxel_count(); ++s) {
                if (u.data[static_cast<std::size_t>(s)] < 0.05f || seen.count(s)) continue;
                ++comps;
                std::vector<std::int64_t> q = {s};
                seen.insert(s);
                while (!q.empty()) {
                    const std::int64_t id = q.back();
                    q.pop_back();
                    const int z = static_cast<int>(id / 100), y = static_cast<int>((id / 10) % 10),
                              x = static_cast<int>(id % 10);
                    const int dz[6] = {-1, 1, 0, 0, 0, 0}, dy[6] = {0, 0, -1, 1, 0, 0},
                              dx[6] = {0, 0, 0, 0, -1, 1};
                    for (int k = 0; k < 6; ++k) {
                        const int nz = z + dz[k], ny = y + dy[k], nx = x + dx[k];
                        if (nz < 0 || nz >= 4 || ny < 0 || ny >= 10 || nx < 0 || nx >= 10) continue;
                        const std::int64_t nid = u.index(nz, ny, nx);
                        if (u.data[static_cast<std::size_t>(nid)] < 0.05f || seen.count(nid)) continue;
                        seen.insert(nid);
                        q.push_back(nid);
                    }
                }
            }
            CHECK(static_cast<int>(dets.size()) == comps);
        }
    }
}

TEST_CASE("metrics: voxel IoU") {
    std::vector<std::int64_t> a = {1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<std::int64_t> b = {5, 6, 7, 8, 9, 10, 11, 12};
    CHECK(iou(a, a) == doctest::Approx(1.0));
    std::vector<std::int64_t> c = {100, 101};
    CHECK(iou(a, c) == doctest::Approx(0.0));
    CHECK(iou(a, b) == doctest::Approx(4.0 / 12.0));
}

TEST_CASE("metrics: hand-ranked AP and the threshold-sweep oracle") {
    SUBCASE("TP(0.9), FP(0.8), TP(0.7) over two lesions gives 5/6") {
        std::vector<std::vector<Detection>> dets(1);
        std::vector<std::vector<std::vector<std::int64_t>>> gt(1);
        gt[0].push_back({0, 1, 2, 3});
        gt[0].push_back({100, 101, 102, 103});
        dets[0].push_back({{0, 1, 2, 3}, 0.9});
        dets[0].push_back({{500, 501, 502, 503}, 0.8});
        dets[0].push_back({{100, 101, 102, 103}, 0.7});
        const ApResult res = match_and_ap(dets, gt, 0.1);
        CHECK(res.ap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    }
    SUBCASE("one perfect detection") {
        std::vector<std::vector<Detection>> dets(1);
        std::vector<std::vector<std::vector<std::int64_t>>> gt(1);
        gt[0].push_back({7, 8, 9});
        dets[0].push_back({{7, 8, 9}, 1.0});
        CHECK(match_and_ap(dets, gt, 0.1).ap == doctest::Approx(1.0));
    }
    SUBCASE("random cohorts match the independent oracle within 1e-9") {
        Rng rng(909);
        for (int trial = 0; trial < 200; ++trial) {
            oracle::ApInstance inst;
            const int studies = 1 + static_cast<int>(rng.index(3));
            inst.detections.resize(static_cast<std::size_t>(studies));
            inst.gt.resize(static_cast<std::size_t>(studies));
            std::vector<std::vector<Detection>> dets(static_cast<std::size_t>(studies));
            bool any_gt = false;
            for (int s = 0; s < studies; ++s) {
                const int n_gt = static_cast<int>(rng.index(3));
                for (int g = 0; g < n_gt; ++g) {
                    const std::int64_t start = static_cast<std::int64_t>(rng.index(60));
                    std::vector<std::int64_t> vox;
                    for (std::int64_t k = 0; k < 6; ++k) vox.push_back(start + k);
                    inst.gt[static_cast<std::size_t>(s)].push_back(vox);
                    any_gt = true;
                }
                const int n_det = static_cast<int>(rng.index(5));
                for (int dd = 0; dd < n_det; ++dd) {
                    const std::int64_t start = static_cast<std::int64_t>(rng.index(70));
                    std::vector<std::int64_t> vox;
                    const std::int64_t len = 3 + static_cast<std::int64_t>(rng.index(6));
                    for (std::int64_t k = 0; k < len; ++k) vox.push_back(start + k);
                    const double score = rng.uniform01();
                    inst.detections[static_cast<std::size_t>(s)].push_back({score, vox});
                    dets[static_cast<std::size_t>(s)].push_back({vox, score});
                }
            }
            if (!any_gt) continue;
            const double got = match_and_ap(dets, inst.gt, 0.1).ap;
            const double expect = oracle::ap_oracle(inst, 0.1);
            CHECK(got == doctest::Approx(expect).epsilon(1e-9));
        }
    }
    SUBCASE("no ground truth anywhere is DegenerateGroundTruth") {
        std::vector<std::vector<Detection>> dets(2);
        std::vector<std::vector<std::vector<std::int64_t>>> gt(2);
        CHECK_THROWS_AS(match_and_ap(dets, gt, 0.1), DegenerateGroundTruth);
    }
}

TEST_CASE("metrics: AUROC rank statistic") {
    SUBCASE("perfect separation") {
        std::vector<double> s = {0.9, 0.8, 0.2, 0.1};
        std::vector<std::uint8_t> y = {1, 1, 0, 0};
        CHECK(auroc(s, y) == doctest::Approx(1.0));
    }
    SUBCASE("six cases with a tie match all-pairs counting") {
        std::vector<double> s = {0.9, 0.5, 0.5, 0.3, 0.8, 0.1};
        std::vector<std::uint8_t> y = {1, 1, 0, 0, 1, 0};
        CHECK(auroc(s, y) == doctest::Approx(oracle::auroc_oracle(s, y)).epsilon(1e-12));
        CHECK(auroc(s, y) == doctest::Approx((3.0 + 3.0 + 0.5 + 2.0) / 9.0).epsilon(1e-12));
    }
    SUBCASE("random scores sit near one half") {
        Rng rng(44);
        std::vector<double> s;
        std::vector<std::uint8_t> y;
        for (int i = 0; i < 4000; ++i) {
            s.push_back(rng.uniform01());
            y.push_back(i % 2 ? 1 : 0);
        }
        CHECK(auroc(s, y) == doctest::Approx(0.5).epsilon(0.05));
        CHECK(auroc(s, y) == doctest::Approx(oracle::auroc_oracle(s, y)).epsilon(1e-12));
    }
    SUBCASE("invariance under strictly increasing transforms") {
        Rng rng(45);
        std::vector<double> s;
        std::vector<std::uint8_t> y;
        for (int i = 0; i < 100; ++i) {
            s.push_back(rng.normal());
            y.push_back(rng.uniform01() < 0.4 ? 1 : 0);
        }
        std::vector<double> t;
        for (double v : s) t.push_back(std::exp(2.0 * v) + 3.0);
        bool pos = false, neg = false;
        for (auto l : y) (l ? pos : neg) = true;
        if (pos && neg) CHECK(auroc(s, y) == doctest::Approx(auroc(t, y)).epsilon(1e-12));
    }
    SUBCASE("single class throws") {
        std::vector<double> s = {0.1, 0.2};
        std::vector<std::uint8_t> y = {1, 1};
        CHECK_THROWS_AS(auroc(s, y), DegenerateLabels);
    }
}

TEST_CASE("metrics: picai score") {
    CHECK(picai_score(0.407, 0.807) == doctest::Approx(0.607));
    CHECK(picai_score(0.0, 0.0) == doctest::Approx(0.0));
    CHECK(picai_score(0.374, 0.822) == doctest::Approx(0.598));
}

// --------------------------------------------------------- config & container

TEST_CASE("config: parse, echo, unknown keys") {
    RunConfig def;
    const std::string text = serialize_run_config(def);
    RunConfig back = parse_run_config_text(text);
    CHECK(serialize_run_config(back) == text);

    CHECK_THROWS_AS(parse_run_config_text("nope.key = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config_text("seed = x\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config_text("seed = 1\nseed = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config_text("stage1.sweep_stride = 4\n"), ConfigError);
    RunConfig c = parse_run_config_text("gbdt.n_trees = 12 # comment\n\n");
    CHECK(c.gbdt.n_trees == 12);
}

TEST_CASE("pipeline: train, container roundtrip, self check") {
    auto studies = fixtures::tiny_cohort(3, 3, 700);
    RunConfig cfg = fixtures::tiny_run_config();
    TrainReport report;
    PipelineModel model = train_pipeline(studies, cfg, &report);
    CHECK(report.param_count == model.param_count);
    CHECK(report.t_opt == model.t_opt);
    CHECK(model.param_count < 1000000);

    const std::string path = "/tmp/radhop_test_pipeline.rhm";
    save_pipeline(model, path);
    PipelineModel back = load_pipeline(path);
    CHECK(back.param_count == model.param_count);
    CHECK(back.t_opt == model.t_opt);
    CHECK(back.has_stage2 == model.has_stage2);

    PredictionResult a = predict_study(model, studies[0]);
    PredictionResult b = predict_study(back, studies[0]);
    CHECK(a.final_heatmap.prob.data == b.final_heatmap.prob.data);
    CHECK(a.stage1_heatmap.prob.data == b.stage1_heatmap.prob.data);
    CHECK(a.candidates.size() == b.candidates.size());

    SUBCASE("stage1-only skips refinement") {
        PredictionResult s1 = predict_study(model, studies[0], true);
        CHECK(s1.candidates.empty());
        CHECK(s1.final_heatmap.prob.data == s1.stage1_heatmap.prob.data);
        CHECK(s1.final_heatmap.stride == cfg.heatmap_stride);
    }
    SUBCASE("corrupted magic and truncation") {
        std::ifstream f(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        f.close();
        std::string bad = bytes;
        bad[0] = 'X';
        const std::string bad_path = "/tmp/radhop_test_pipeline_bad.rhm";
        std::ofstream o(bad_path, std::ios::binary);
        o << bad;
        o.close();
        CHECK_THROWS_AS(load_pipeline(bad_path), FormatError);

        std::string cut = bytes.substr(0, bytes.size() * 2 / 3);
        std::ofstream o2(bad_path, std::ios::binary);
        o2 << cut;
        o2.close();
        CHECK_THROWS_AS(load_pipeline(bad_path), FormatError);
    }
    SUBCASE("stage-2 feature width matches the documented layout") {
        Stage2Layout layout;
        layout.radhop_len = 0;
        for (const auto& sel : model.stage1.dft) layout.radhop_len += static_cast<int>(sel.kept.size());
        CHECK(layout.total() == 11 + 3 * 104 + layout.radhop_len);
    }
}

TEST_CASE("pipeline: cohort evaluation plumbing") {
    const std::string dir = "/tmp/radhop_test_eval";
    fs::remove_all(dir);
    fs::create_directories(dir + "/cohort");
    fs::create_directories(dir + "/pred");

    std::vector<ManifestCase> cases;
    for (int i = 0; i < 3; ++i) {
        auto spec = fixtures::tiny_phantom_spec(800 + static_cast<std::uint64_t>(i), i == 0 ? 1 : 0);
        auto [study, gt] = generate_phantom(spec);
        const std::string id = "case_" + std::to_string(i);
        save_study(study, dir + "/cohort/" + id);
        fs::create_directories(dir + "/pred/" + id);
        // Prediction = the ground-truth mask at probability 1.
        Volume hm(study.t2.dims, study.t2.spacing, 0.0f);
        for (std::int64_t k = 0; k < hm.voxel_count(); ++k)
            if (study.lesion_mask.data[static_cast<std::size_t>(k)] > 0.5f) hm.data[static_cast<std::size_t>(k)] = 1.0f;
        save_volume(hm, dir + "/pred/" + id + "/heatmap.f32raw", Role::Heatmap);
        cases.push_back({id, i == 0 ? 1 : 0, i == 0 ? 1 : 0});
    }
    write_manifest(dir + "/cohort", cases);

    RunConfig cfg = fixtures::tiny_run_config();
    EvalReport rep = evaluate_cohort(dir + "/cohort", dir + "/pred", cfg);
    CHECK(rep.ap == doctest::Approx(1.0));
    CHECK(rep.auroc == doctest::Approx(1.0));
    CHECK(rep.score == doctest::Approx(1.0));

    SUBCASE("missing prediction lists the case") {
        fs::remove(dir + "/pred/case_2/heatmap.f32raw");
        CHECK_THROWS_WITH_AS(evaluate_cohort(dir + "/cohort", dir + "/pred", cfg),
                             doctest::Contains("case_2"), IoError);
    }
}

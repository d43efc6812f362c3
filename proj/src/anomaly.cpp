#include "radhop/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace radhop {

namespace {

// Grid coordinate of unit k's own prediction point.
inline int unit_grid_coord(int k) { return kUnitSize * k + Heatmap::kGridOffset; }

} // namespace

AnomalyMap compute_anomaly_map(const Heatmap& heatmap, int slice) {
    if (heatmap.stride != kUnitSize || heatmap.patch_size != 24)
        throw ConfigError("anomaly map requires stride-8 predictions from 24x24 patches");
    const Volume& v = heatmap.prob;
    if (slice < 0 || slice >= v.dims[0]) throw ConfigError("slice out of range");

    AnomalyMap map;
    map.slice = slice;
    map.rows = v.dims[1] / kUnitSize;
    map.cols = v.dims[2] / kUnitSize;
    map.scores.assign(static_cast<std::size_t>(map.rows) * map.cols, 0.0f);

    for (int i = 0; i < map.rows; ++i)
        for (int j = 0; j < map.cols; ++j) {
            double acc = 0.0;
            int cnt = 0;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    const int y = unit_grid_coord(i + di);
                    const int x = unit_grid_coord(j + dj);
                    if (y < 0 || y >= v.dims[1] || x < 0 || x >= v.dims[2]) continue;
                    acc += v.at(slice, y, x);
                    ++cnt;
                }
            map.at(i, j) = cnt ? static_cast<float>(acc / cnt) : 0.0f;
        }
    return map;
}

std::vector<AnomalyMap> compute_anomaly_maps(const Heatmap& heatmap) {
    std::vector<AnomalyMap> maps;
    maps.reserve(static_cast<std::size_t>(heatmap.prob.dims[0]));
    for (int z = 0; z < heatmap.prob.dims[0]; ++z) maps.push_back(compute_anomaly_map(heatmap, z));
    return maps;
}

VoxelRect unit_receptive_field(int i, int j, int slice_h, int slice_w) {
    // Union of the 3x3 averaged patches: each 24 wide, centers 8 apart.
    const int cy = unit_grid_coord(i), cx = unit_grid_coord(j);
    VoxelRect r;
    r.y0 = std::max(0, cy - kUnitSize - 12);
    r.x0 = std::max(0, cx - kUnitSize - 12);
    r.y1 = std::min(slice_h, cy + kUnitSize + 12);
    r.x1 = std::min(slice_w, cx + kUnitSize + 12);
    return r;
}

VoxelRect context_receptive_field(int i, int j, int slice_h, int slice_w) {
    VoxelRect a = unit_receptive_field(i - 1, j - 1, slice_h, slice_w);
    VoxelRect b = unit_receptive_field(i + 1, j + 1, slice_h, slice_w);
    return {std::max(0, a.y0), std::max(0, a.x0), std::min(slice_h, b.y1), std::min(slice_w, b.x1)};
}

LabeledUnitSet label_units(const AnomalyMap& map, const Study& study, double lesion_frac) {
    if (lesion_frac <= 0.0 || lesion_frac > 1.0) throw ConfigError("lesion_frac must be in (0,1]");
    LabeledUnitSet set;
    const int z = map.slice;
    for (int i = 0; i < map.rows; ++i)
        for (int j = 0; j < map.cols; ++j) {
            int gland = 0, lesion = 0;
            for (int y = kUnitSize * i; y < kUnitSize * (i + 1); ++y)
                for (int x = kUnitSize * j; x < kUnitSize * (j + 1); ++x) {
                    gland += study.gland_mask.at(z, y, x) > 0.5f ? 1 : 0;
                    lesion += study.lesion_mask.at(z, y, x) > 0.5f ? 1 : 0;
                }
            if (gland == 0) continue;
            set.scores.push_back(map.at(i, j));
            set.labels.push_back(lesion >= lesion_frac * kUnitSize * kUnitSize ? 1 : 0);
        }
    return set;
}

double calibrate_threshold(const LabeledUnitSet& units, double r) {
    if (r <= 0.0 || r > 1.0) throw ConfigError("tpr constraint r must be in (0,1]");
    if (units.scores.size() != units.labels.size()) throw ShapeError("scores/labels mismatch");
    std::int64_t n_pos = 0, n_neg = 0;
    for (auto l : units.labels) (l ? n_pos : n_neg)++;
    if (n_pos == 0) throw DegenerateLabels("calibrate_threshold: no positive units");

    // Sweep observed scores descending; TPR and FPR are monotone in T, so the
    // first feasible threshold minimizes FPR and is the highest such T.
    std::vector<std::size_t> order(units.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return units.scores[a] > units.scores[b];
    });

    double best_t = units.scores[order.back()];
    double best_fpr = 2.0;
    std::int64_t tp = 0, fp = 0;
    std::size_t k = 0;
    while (k < order.size()) {
        const double t = units.scores[order[k]];
        // Consume the whole tie group so counts reflect score >= t.
        while (k < order.size() && units.scores[order[k]] == t) {
            (units.labels[order[k]] ? tp : fp)++;
            ++k;
        }
        const double tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double fpr = n_neg ? static_cast<double>(fp) / static_cast<double>(n_neg) : 0.0;
        if (tpr >= r && fpr < best_fpr) {
            best_fpr = fpr;
            best_t = t;
            break; // later (smaller) thresholds cannot improve FPR
        }
    }
    return best_t;
}

namespace {

struct DisjointSet {
    std::vector<int> parent;
    explicit DisjointSet(int n) : parent(static_cast<std::size_t>(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int a) {
        while (parent[static_cast<std::size_t>(a)] != a) {
            parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
            a = parent[static_cast<std::size_t>(a)];
        }
        return a;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    }
};

inline bool squares_overlap(const Candidate& a, const Candidate& b) {
    return a.slice == b.slice && std::abs(a.i - b.i) <= 1 && std::abs(a.j - b.j) <= 1;
}

} // namespace

std::vector<Candidate> detect_candidates(const AnomalyMap& map, double threshold) {
    std::vector<Candidate> squares;
    for (int i = 0; i + 1 < map.rows; ++i)
        for (int j = 0; j + 1 < map.cols; ++j) {
            const float s00 = map.at(i, j), s01 = map.at(i, j + 1);
            const float s10 = map.at(i + 1, j), s11 = map.at(i + 1, j + 1);
            if (s00 >= threshold && s01 >= threshold && s10 >= threshold && s11 >= threshold) {
                Candidate c;
                c.slice = map.slice;
                c.i = i;
                c.j = j;
                c.mean_score = 0.25 * (static_cast<double>(s00) + s01 + s10 + s11);
                squares.push_back(c);
            }
        }
    if (squares.empty()) return squares;

    // Group squares that share units, then keep each group's best-mean square
    // plus any further non-overlapping squares.
    DisjointSet ds(static_cast<int>(squares.size()));
    for (std::size_t a = 0; a < squares.size(); ++a)
        for (std::size_t b = a + 1; b < squares.size(); ++b)
            if (squares_overlap(squares[a], squares[b]))
                ds.unite(static_cast<int>(a), static_cast<int>(b));

    std::vector<std::size_t> order(squares.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (squares[a].mean_score != squares[b].mean_score)
            return squares[a].mean_score > squares[b].mean_score;
        if (squares[a].i != squares[b].i) return squares[a].i < squares[b].i;
        return squares[a].j < squares[b].j;
    });

    std::vector<Candidate> out;
    std::vector<std::vector<std::size_t>> kept_by_group(squares.size());
    for (std::size_t idx : order) {
        const int g = ds.find(static_cast<int>(idx));
        bool clash = false;
        for (std::size_t other : kept_by_group[static_cast<std::size_t>(g)])
            if (squares_overlap(squares[idx], squares[other])) {
                clash = true;
                break;
            }
        if (clash) continue;
        kept_by_group[static_cast<std::size_t>(g)].push_back(idx);
        out.push_back(squares[idx]);
    }
    std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });
    return out;
}

} // namespace radhop

#pragma once

// Independent brute-force oracles for the test suites. These deliberately do
// not reuse the library's numerics: eigendecomposition is a hand-rolled
// Jacobi sweep, scores are recomputed by direct enumeration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace oracle {

struct EigenSym {
    std::vector<double> values;               // descending
    std::vector<std::vector<double>> vectors; // vectors[k] pairs with values[k]
};

// Cyclic Jacobi rotations on a symmetric matrix.
inline EigenSym jacobi_eigen_sym(std::vector<std::vector<double>> a) {
    const std::size_t n = a.size();
    std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        double scale = 0.0;
        for (std::size_t p = 0; p < n; ++p) scale += std::abs(a[p][p]);
        if (off <= 1e-30 * (1.0 + scale * scale)) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
    EigenSym res;
    for (std::size_t k : order) {
        res.values.push_back(a[k][k]);
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = v[i][k];
        res.vectors.push_back(std::move(col));
    }
    return res;
}

// Covariance eigendecomposition of the DC-removed samples; mirrors the Saab
// contract with an independent numeric route (full d x d Jacobi, nullspace
// eigenpair along the DC direction discarded).
struct SaabOracle {
    double dc_variance = 0.0;
    double total_variance = 0.0;
    std::vector<double> ac_eigenvalues;               // descending, d-1 entries
    std::vector<std::vector<double>> ac_eigenvectors; // matching
};

inline SaabOracle saab_oracle(const std::vector<std::vector<double>>& samples) {
    const std::size_t n = samples.size();
    const std::size_t d = samples[0].size();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    std::vector<std::vector<double>> ac(n, std::vector<double>(d));
    std::vector<double> dc(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (double x : samples[i]) sum += x;
        dc[i] = sum * inv_sqrt_d;
        for (std::size_t j = 0; j < d; ++j) ac[i][j] = samples[i][j] - sum / static_cast<double>(d);
    }

    SaabOracle res;
    double dc_mean = std::accumulate(dc.begin(), dc.end(), 0.0) / static_cast<double>(n);
    for (double x : dc) res.dc_variance += (x - dc_mean) * (x - dc_mean);
    res.dc_variance /= static_cast<double>(n);

    std::vector<double> mean(d, 0.0);
    for (const auto& row : ac)
        for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
    for (auto& v : mean) v /= static_cast<double>(n);
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (const auto& row : ac)
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < d; ++k)
                cov[j][k] += (row[j] - mean[j]) * (row[k] - mean[k]);
    for (auto& r : cov)
        for (auto& v : r) v /= static_cast<double>(n);

    double trace = 0.0;
    for (std::size_t j = 0; j < d; ++j) trace += cov[j][j];
    res.total_variance = res.dc_variance + trace;

    EigenSym eig = jacobi_eigen_sym(cov);
    // Drop the eigenpair whose vector is closest to the DC direction (the
    // covariance of the DC-removed samples is singular along it).
    std::size_t drop = d - 1;
    double best_align = -1.0;
    for (std::size_t k = 0; k < d; ++k) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += eig.vectors[k][j] * inv_sqrt_d;
        if (std::abs(dot) > best_align) {
            best_align = std::abs(dot);
            drop = k;
        }
    }
    for (std::size_t k = 0; k < d; ++k) {
        if (k == drop) continue;
        res.ac_eigenvalues.push_back(eig.values[k]);
        res.ac_eigenvectors.push_back(eig.vectors[k]);
    }
    return res;
}

// Exhaustive threshold scan with direct partitioning (no histogram).
inline double dft_score_oracle(const std::vector<float>& values,
                               const std::vector<std::uint8_t>& labels, int bins) {
    const auto entropy = [](std::int64_t pos, std::int64_t neg) {
        const std::int64_t n = pos + neg;
        if (n == 0 || pos == 0 || neg == 0) return 0.0;
        const double pp = static_cast<double>(pos) / n, pn = static_cast<double>(neg) / n;
        return -pp * std::log(pp) - pn * std::log(pn);
    };
    std::int64_t tp = 0, tn = 0;
    for (auto l : labels) (l ? tp : tn)++;
    double fmin = values[0], fmax = values[0];
    for (float v : values) {
        fmin = std::min<double>(fmin, v);
        fmax = std::max<double>(fmax, v);
    }
    if (!(fmax > fmin)) return entropy(tp, tn);
    double best = entropy(tp, tn);
    const std::int64_t n = static_cast<std::int64_t>(values.size());
    for (int b = 1; b < bins; ++b) {
        const double t = fmin + (fmax - fmin) * b / bins;
        std::int64_t lp = 0, ln = 0;
        for (std::size_t i = 0; i < values.size(); ++i)
            if (values[i] < t) (labels[i] ? lp : ln)++;
        const std::int64_t left = lp + ln, right = n - left;
        const double cost = (static_cast<double>(left) / n) * entropy(lp, ln) +
                            (static_cast<double>(right) / n) * entropy(tp - lp, tn - ln);
        best = std::min(best, cost);
    }
    return best;
}

// All-pairs rank statistic, ties half.
inline double auroc_oracle(const std::vector<double>& scores,
                           const std::vector<std::uint8_t>& labels) {
    double num = 0.0;
    std::int64_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (!labels[i] || labels[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) num += 1.0;
            else if (scores[i] == scores[j]) num += 0.5;
        }
    return num / static_cast<double>(pairs);
}

// Abstract detection instance for AP checks.
struct ApInstance {
    // per study: detections as (score, voxel set) and ground-truth voxel sets
    std::vector<std::vector<std::pair<double, std::vector<std::int64_t>>>> detections;
    std::vector<std::vector<std::vector<std::int64_t>>> gt;
};

inline double iou_oracle(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
    std::size_t i = 0, j = 0, inter = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) { ++inter; ++i; ++j; }
        else if (a[i] < b[j]) ++i;
        else ++j;
    }
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

// Threshold-sweep PR construction: determine each detection's TP/FP flag by
// greedy matching in rank order, then accumulate precision/recall at every
// distinct score threshold.
inline double ap_oracle(const ApInstance& inst, double iou_min) {
    struct Item {
        double score;
        std::size_t study, det;
        std::int64_t volume, first;
    };
    std::vector<Item> items;
    std::int64_t total_gt = 0;
    for (std::size_t s = 0; s < inst.detections.size(); ++s) {
        total_gt += static_cast<std::int64_t>(inst.gt[s].size());
        for (std::size_t k = 0; k < inst.detections[s].size(); ++k) {
            const auto& d = inst.detections[s][k];
            items.push_back({d.first, s, k, static_cast<std::int64_t>(d.second.size()),
                             d.second.empty() ? 0 : d.second.front()});
        }
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.volume != b.volume) return a.volume > b.volume;
        if (a.first != b.first) return a.first < b.first;
        return a.study < b.study;
    });

    std::vector<std::vector<bool>> used(inst.gt.size());
    for (std::size_t s = 0; s < inst.gt.size(); ++s) used[s].assign(inst.gt[s].size(), false);
    std::vector<bool> is_tp(items.size(), false);
    for (std::size_t r = 0; r < items.size(); ++r) {
        const Item& it = items[r];
        double best = 0.0;
        int pick = -1;
        for (std::size_t g = 0; g < inst.gt[it.study].size(); ++g) {
            if (used[it.study][g]) continue;
            const double v = iou_oracle(inst.detections[it.study][it.det].second, inst.gt[it.study][g]);
            if (v >= iou_min && v > best) {
                best = v;
                pick = static_cast<int>(g);
            }
        }
        if (pick >= 0) {
            used[it.study][static_cast<std::size_t>(pick)] = true;
            is_tp[r] = true;
        }
    }

    // Sweep distinct scores descending.
    double ap = 0.0, prev_recall = 0.0;
    std::size_t k = 0;
    std::int64_t tp = 0, seen = 0;
    while (k < items.size()) {
        const double t = items[k].score;
        while (k < items.size() && items[k].score == t) {
            ++seen;
            if (is_tp[k]) ++tp;
            ++k;
        }
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        const double recall = static_cast<double>(tp) / static_cast<double>(total_gt);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

} // namespace oracle

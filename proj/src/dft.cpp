#include "radhop/dft.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "radhop/parallel.hpp"

namespace radhop {

void DftConfig::validate() const {
    if (bins < 2) throw ConfigError("dft bins must be >= 2");
    if (keep_k < 1) throw ConfigError("dft keep_k must be >= 1");
}

namespace {

inline double two_class_entropy(std::int64_t pos, std::int64_t neg) {
    const std::int64_t n = pos + neg;
    if (n == 0 || pos == 0 || neg == 0) return 0.0;
    const double pp = static_cast<double>(pos) / n;
    const double pn = static_cast<double>(neg) / n;
    return -pp * std::log(pp) - pn * std::log(pn);
}

} // namespace

double dft_score(std::span<const float> values, std::span<const std::uint8_t> labels, int bins) {
    if (values.size() != labels.size()) throw ShapeError("values/labels length mismatch");
    if (values.size() < 2) throw InsufficientData("dft_score needs at least 2 samples");
    if (bins < 2) throw ConfigError("dft bins must be >= 2");

    std::int64_t total_pos = 0, total_neg = 0;
    for (auto l : labels) (l ? total_pos : total_neg)++;
    if (total_pos == 0 || total_neg == 0) throw DegenerateLabels("dft_score needs both classes");

    float f_min = values[0], f_max = values[0];
    for (float v : values) {
        f_min = std::min(f_min, v);
        f_max = std::max(f_max, v);
    }
    if (!(f_max > f_min)) return two_class_entropy(total_pos, total_neg);

    // Per-bin class counts; a sample lies left of threshold b iff bin < b.
    std::vector<std::int64_t> pos(static_cast<std::size_t>(bins), 0), neg(static_cast<std::size_t>(bins), 0);
    const double scale = static_cast<double>(bins) / (static_cast<double>(f_max) - f_min);
    for (std::size_t i = 0; i < values.size(); ++i) {
        int b = static_cast<int>((static_cast<double>(values[i]) - f_min) * scale);
        b = std::clamp(b, 0, bins - 1);
        (labels[i] ? pos : neg)[static_cast<std::size_t>(b)]++;
    }

    const std::int64_t n = total_pos + total_neg;
    double best = two_class_entropy(total_pos, total_neg);
    std::int64_t lp = 0, ln = 0;
    for (int b = 1; b < bins; ++b) {
        lp += pos[static_cast<std::size_t>(b - 1)];
        ln += neg[static_cast<std::size_t>(b - 1)];
        const std::int64_t left = lp + ln, right = n - left;
        const double cost = (static_cast<double>(left) / n) * two_class_entropy(lp, ln) +
                            (static_cast<double>(right) / n) *
                                two_class_entropy(total_pos - lp, total_neg - ln);
        best = std::min(best, cost);
    }
    return best;
}

DftSelection dft_select(const FeatureMatrix& x, std::span<const std::uint8_t> labels,
                        const DftConfig& config, int threads) {
    config.validate();
    if (x.rows != static_cast<std::int64_t>(labels.size()))
        throw ShapeError("feature matrix rows != labels length");
    if (x.cols < 1) throw ConfigError("dft_select needs at least one feature");

    DftSelection sel;
    sel.input_dim = x.cols;
    sel.scores.resize(static_cast<std::size_t>(x.cols));
    sel.f_min.resize(static_cast<std::size_t>(x.cols));
    sel.f_max.resize(static_cast<std::size_t>(x.cols));

    // Column-major copy so each feature scan is contiguous.
    std::vector<float> col(static_cast<std::size_t>(x.rows * x.cols));
    for (std::int64_t i = 0; i < x.rows; ++i)
        for (std::int64_t j = 0; j < x.cols; ++j)
            col[static_cast<std::size_t>(j * x.rows + i)] = x.row(i)[j];

    parallel_for(
        x.cols,
        [&](std::int64_t j) {
            std::span<const float> v{col.data() + j * x.rows, static_cast<std::size_t>(x.rows)};
            sel.scores[static_cast<std::size_t>(j)] = dft_score(v, labels, config.bins);
            auto [mn, mx] = std::minmax_element(v.begin(), v.end());
            sel.f_min[static_cast<std::size_t>(j)] = *mn;
            sel.f_max[static_cast<std::size_t>(j)] = *mx;
        },
        threads);

    std::vector<std::int32_t> order(static_cast<std::size_t>(x.cols));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        return sel.scores[static_cast<std::size_t>(a)] < sel.scores[static_cast<std::size_t>(b)];
    });
    const std::int64_t k = std::min<std::int64_t>(config.keep_k, x.cols);
    sel.kept.assign(order.begin(), order.begin() + k);
    return sel;
}

std::vector<float> DftSelection::apply(std::span<const float> features) const {
    if (static_cast<std::int64_t>(features.size()) != input_dim)
        throw ShapeError("feature vector length != selection input dim");
    std::vector<float> out;
    out.reserve(kept.size());
    for (auto idx : kept) out.push_back(features[static_cast<std::size_t>(idx)]);
    return out;
}

std::vector<float> fuse_sequences(std::span<const float> t2, std::span<const float> adc,
                                  std::span<const float> dwi,
                                  const std::array<const DftSelection*, 3>& selections) {
    const std::array<std::span<const float>, 3> in = {t2, adc, dwi};
    std::vector<float> fused;
    std::size_t total = 0;
    for (int s = 0; s < 3; ++s) {
        if (!selections[static_cast<std::size_t>(s)]) throw ConfigError("missing sequence selection");
        if (selections[static_cast<std::size_t>(s)]->kept.empty())
            throw ConfigError("empty sequence selection");
        if (in[static_cast<std::size_t>(s)].size() != selections[static_cast<std::size_t>(s)]->kept.size())
            throw ShapeError("selected vector length mismatch in fuse_sequences");
        total += in[static_cast<std::size_t>(s)].size();
    }
    fused.reserve(total);
    for (int s = 0; s < 3; ++s)
        fused.insert(fused.end(), in[static_cast<std::size_t>(s)].begin(), in[static_cast<std::size_t>(s)].end());
    return fused;
}

} // namespace radhop

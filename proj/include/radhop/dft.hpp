#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "radhop/matrix.hpp"

namespace radhop {

// Discriminant Feature Test: a feature's score is the minimum weighted
// two-sided entropy over B-1 uniform-bin split thresholds; lower is more
// discriminant.
struct DftConfig {
    int bins = 32;
    int keep_k = 1000;
    void validate() const;
};

struct DftSelection {
    std::vector<double> scores;    // per input feature
    std::vector<std::int32_t> kept; // ascending-entropy order, ties by index
    std::vector<float> f_min, f_max;
    std::int64_t input_dim = 0;

    std::vector<float> apply(std::span<const float> features) const;
};

// Minimum weighted entropy over interior bin boundaries. The interval
// [f_min, f_max] is cut at t_b = f_min + span*b/B; a sample goes left iff
// value < t_b. Entropies use natural log, so scores lie in [0, ln 2].
// A constant feature scores the entropy of the full label distribution.
double dft_score(std::span<const float> values, std::span<const std::uint8_t> labels, int bins);

DftSelection dft_select(const FeatureMatrix& x, std::span<const std::uint8_t> labels,
                        const DftConfig& config, int threads = 0);

// Fixed-order concatenation [T2 | ADC | DWI] of per-sequence selected vectors.
std::vector<float> fuse_sequences(std::span<const float> t2, std::span<const float> adc,
                                  std::span<const float> dwi,
                                  const std::array<const DftSelection*, 3>& selections);

} // namespace radhop

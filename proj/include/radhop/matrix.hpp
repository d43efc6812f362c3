#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "radhop/errors.hpp"

namespace radhop {

// Dense row-major sample matrix (N rows x D features).
struct FeatureMatrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<float> data;

    FeatureMatrix() = default;
    FeatureMatrix(std::int64_t r, std::int64_t c) : rows(r), cols(c), data(static_cast<std::size_t>(r * c), 0.0f) {}

    float* row(std::int64_t i) { return data.data() + i * cols; }
    const float* row(std::int64_t i) const { return data.data() + i * cols; }
    std::span<const float> row_span(std::int64_t i) const { return {row(i), static_cast<std::size_t>(cols)}; }
    void push_row(std::span<const float> r) {
        if (static_cast<std::int64_t>(r.size()) != cols) throw ShapeError("row length mismatch");
        data.insert(data.end(), r.begin(), r.end());
        ++rows;
    }
};

} // namespace radhop

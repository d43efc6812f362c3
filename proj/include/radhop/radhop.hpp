#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "radhop/saab.hpp"

namespace radhop {

// Two-Hop feature extractor: Hop-1 Saab on 3x3 neighborhoods, 2x2 max-pool,
// Hop-2 channel-wise Saab, plus one global PCA scalar per channel and hop.
// For a 24x24 patch the spatial chain is 24 -> 22 -> 11 -> 9.
struct RadHopConfig {
    int patch_size = 24; // even, >= 8
    int filter_size = 3;
    double energy_threshold = 0.002; // fraction of the root input variance
    bool include_dc = true;          // DC channels contribute global features
    int min_training_patches = 1000;
    int max_global_pca_samples = 2000;

    int hop1_out() const { return patch_size - (filter_size - 1); }
    int pooled() const { return hop1_out() / 2; }
    int hop2_out() const { return pooled() - (filter_size - 1); }
    void validate() const;
};

struct GlobalPca {
    int channel = 0; // position within the hop's retained-channel order
    std::vector<double> mean;
    std::vector<double> dir; // first principal direction, unit length
};

// Named index ranges of the output vector, in order:
// [hop1-local | hop2-local | hop1-global | hop2-global].
struct FeatureLayout {
    int hop1_channels = 0;
    int hop2_channels = 0; // retained children
    int hop1_map = 0;      // hop1_out^2
    int hop2_map = 0;      // hop2_out^2
    int hop1_global_count = 0;
    int hop2_global_count = 0;

    int hop1_local_begin() const { return 0; }
    int hop2_local_begin() const { return hop1_channels * hop1_map; }
    int hop1_global_begin() const { return hop2_local_begin() + hop2_channels * hop2_map; }
    int hop2_global_begin() const { return hop1_global_begin() + hop1_global_count; }
    int total() const { return hop2_global_begin() + hop2_global_count; }
};

struct RadHopModel {
    RadHopConfig config;
    SaabKernel hop1;
    CwSaabLayer hop2;
    // (parent index within hop1 retained channels, child index within kernel)
    std::vector<std::pair<int, int>> hop2_children;
    std::vector<GlobalPca> hop1_global;
    std::vector<GlobalPca> hop2_global;
    FeatureLayout layout;
};

// Training patches for one sequence, each patch_size^2 floats row-major.
struct PatchStack {
    int size = 0;
    std::vector<float> data;

    std::int64_t count() const {
        return size == 0 ? 0 : static_cast<std::int64_t>(data.size()) / (size * size);
    }
    const float* patch(std::int64_t i) const {
        return data.data() + i * static_cast<std::int64_t>(size) * size;
    }
    void append(std::span<const float> p) { data.insert(data.end(), p.begin(), p.end()); }
};

RadHopModel fit_radhop(const PatchStack& patches, const RadHopConfig& config);

// Feature vector for one patch_size^2 patch, laid out per model.layout.
std::vector<float> radhop_transform(const RadHopModel& model, std::span<const float> patch);

// Projection of one spatial map onto a channel's stored principal direction.
// hop is 1 or 2; channel indexes that hop's retained-channel order.
double global_feature(const RadHopModel& model, int hop, int channel,
                      std::span<const float> spatial_map);

// Inference-time parameter count: anchors and biases of retained channels
// plus global PCA means/directions.
std::int64_t count_parameters(const RadHopModel& model);

// Multiply-add count of one radhop_transform call.
std::int64_t estimate_transform_flops(const RadHopModel& model);

} // namespace radhop

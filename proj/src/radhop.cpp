#include "radhop/radhop.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace radhop {

void RadHopConfig::validate() const {
    if (filter_size != 3) throw ConfigError("filter_size must be 3");
    if (patch_size < 8 || patch_size % 2 != 0) throw ConfigError("patch_size must be even and >= 8");
    if (hop2_out() < 1) throw ConfigError("patch_size too small for two hops");
    if (energy_threshold < 0.0) throw ConfigError("energy_threshold must be >= 0");
    if (min_training_patches < 1) throw ConfigError("min_training_patches must be >= 1");
    if (max_global_pca_samples < 2) throw ConfigError("max_global_pca_samples must be >= 2");
}

namespace {

// Valid-convolution sweep of one kernel over a square map; emits one output
// map per retained anchor, channel-major.
void sweep_kernel(const SaabKernel& k, const float* map, int in_size, float* out,
                  std::vector<float>& window_buf) {
    const int F = k.filter_size;
    const int out_size = in_size - (F - 1);
    const int m = k.num_anchors();
    window_buf.resize(static_cast<std::size_t>(F) * F);
    std::vector<float> coeffs(static_cast<std::size_t>(m));
    for (int y = 0; y < out_size; ++y)
        for (int x = 0; x < out_size; ++x) {
            for (int fy = 0; fy < F; ++fy)
                for (int fx = 0; fx < F; ++fx)
                    window_buf[static_cast<std::size_t>(fy) * F + fx] =
                        map[(y + fy) * in_size + (x + fx)];
            apply_saab(k, window_buf, coeffs);
            for (int c = 0; c < m; ++c)
                out[(static_cast<std::int64_t>(c) * out_size + y) * out_size + x] = coeffs[static_cast<std::size_t>(c)];
        }
}

void max_pool_2x2(const float* in, int in_size, float* out) {
    const int out_size = in_size / 2;
    for (int y = 0; y < out_size; ++y)
        for (int x = 0; x < out_size; ++x) {
            float a = in[(2 * y) * in_size + 2 * x];
            float b = in[(2 * y) * in_size + 2 * x + 1];
            float c = in[(2 * y + 1) * in_size + 2 * x];
            float d = in[(2 * y + 1) * in_size + 2 * x + 1];
            out[y * out_size + x] = std::max(std::max(a, b), std::max(c, d));
        }
}

void gather_windows(const float* map, int in_size, int F, std::vector<float>& sink) {
    const int out_size = in_size - (F - 1);
    for (int y = 0; y < out_size; ++y)
        for (int x = 0; x < out_size; ++x)
            for (int fy = 0; fy < F; ++fy)
                for (int fx = 0; fx < F; ++fx)
                    sink.push_back(map[(y + fy) * in_size + (x + fx)]);
}

GlobalPca fit_global_pca(const std::vector<float>& maps, std::int64_t n, int dim, int channel) {
    Eigen::MatrixXd X(n, dim);
    for (std::int64_t i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) X(i, j) = maps[static_cast<std::size_t>(i) * dim + j];
    Eigen::VectorXd mean = X.colwise().mean();
    Eigen::MatrixXd C = X.rowwise() - mean.transpose();
    Eigen::MatrixXd cov = (C.transpose() * C) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw Error("global PCA eigendecomposition failed");
    Eigen::VectorXd dir = eig.eigenvectors().col(dim - 1); // largest eigenvalue
    // Deterministic sign: largest-magnitude component positive.
    int best = 0;
    double mag = -1.0;
    for (int i = 0; i < dim; ++i)
        if (std::abs(dir[i]) > mag + 1e-15) {
            mag = std::abs(dir[i]);
            best = i;
        }
    if (dir[best] < 0.0) dir = -dir;

    GlobalPca g;
    g.channel = channel;
    g.mean.assign(mean.data(), mean.data() + dim);
    g.dir.assign(dir.data(), dir.data() + dim);
    return g;
}

} // namespace

RadHopModel fit_radhop(const PatchStack& patches, const RadHopConfig& config) {
    config.validate();
    const std::int64_t n = patches.count();
    if (patches.size != config.patch_size) throw ShapeError("patch stack size != config patch_size");
    if (n < config.min_training_patches)
        throw InsufficientData("fit_radhop: need at least " +
                               std::to_string(config.min_training_patches) + " patches");

    const int S = config.patch_size;
    const int F = config.filter_size;
    const int h1 = config.hop1_out();
    const int hp = config.pooled();
    const int h2 = config.hop2_out();

    RadHopModel model;
    model.config = config;

    // Hop-1 fit on all 3x3 neighborhoods of the raw patches.
    {
        std::vector<float> windows;
        windows.reserve(static_cast<std::size_t>(n) * h1 * h1 * F * F);
        for (std::int64_t i = 0; i < n; ++i) gather_windows(patches.patch(i), S, F, windows);
        model.hop1 = fit_saab(windows.data(), static_cast<std::int64_t>(n) * h1 * h1, F,
                              config.energy_threshold);
    }
    const int k1 = model.hop1.num_anchors();

    // Hop-1 responses: pooled maps for every patch (feeds the Hop-2 fit) and
    // full-resolution maps for the global-PCA subset.
    const std::int64_t n_gpca = std::min<std::int64_t>(n, config.max_global_pca_samples);
    std::vector<float> pooled_maps(static_cast<std::size_t>(n) * k1 * hp * hp);
    std::vector<float> hop1_maps(static_cast<std::size_t>(n_gpca) * k1 * h1 * h1);
    {
        std::vector<float> maps(static_cast<std::size_t>(k1) * h1 * h1);
        std::vector<float> wbuf;
        for (std::int64_t i = 0; i < n; ++i) {
            sweep_kernel(model.hop1, patches.patch(i), S, maps.data(), wbuf);
            if (i < n_gpca)
                std::copy(maps.begin(), maps.end(),
                          hop1_maps.begin() + static_cast<std::size_t>(i) * k1 * h1 * h1);
            for (int c = 0; c < k1; ++c)
                max_pool_2x2(maps.data() + static_cast<std::size_t>(c) * h1 * h1, h1,
                             pooled_maps.data() +
                                 (static_cast<std::size_t>(i) * k1 + c) * hp * hp);
        }
    }

    // Hop-2: channel-wise Saab on the pooled maps, pruned by absolute energy.
    {
        std::vector<std::vector<float>> parent_windows(static_cast<std::size_t>(k1));
        for (int c = 0; c < k1; ++c)
            parent_windows[static_cast<std::size_t>(c)].reserve(static_cast<std::size_t>(n) * h2 * h2 * F * F);
        for (std::int64_t i = 0; i < n; ++i)
            for (int c = 0; c < k1; ++c)
                gather_windows(pooled_maps.data() + (static_cast<std::size_t>(i) * k1 + c) * hp * hp,
                               hp, F, parent_windows[static_cast<std::size_t>(c)]);
        std::vector<CwSamples> samples(static_cast<std::size_t>(k1));
        for (int c = 0; c < k1; ++c)
            samples[static_cast<std::size_t>(c)] = {parent_windows[static_cast<std::size_t>(c)].data(),
                                                    static_cast<std::int64_t>(n) * h2 * h2};
        model.hop2 =
            fit_cw_saab(samples, model.hop1.energies, F, config.energy_threshold);
    }

    // Retained hop-2 children in parent-major order.
    {
        int flat = 0;
        for (int p = 0; p < k1; ++p) {
            const int m = model.hop2.kernels[static_cast<std::size_t>(p)].num_anchors();
            for (int c = 0; c < m; ++c, ++flat)
                if (model.hop2.keep_mask[static_cast<std::size_t>(flat)])
                    model.hop2_children.emplace_back(p, c);
        }
    }
    const int k2 = static_cast<int>(model.hop2_children.size());

    // Global PCA fits. Channel 0 of each hop is the DC channel (and child 0
    // of each hop-2 kernel the DC child); excluded when include_dc is false.
    {
        std::vector<float> chan_maps(static_cast<std::size_t>(n_gpca) * h1 * h1);
        for (int c = 0; c < k1; ++c) {
            if (!config.include_dc && c == 0) continue;
            for (std::int64_t i = 0; i < n_gpca; ++i)
                std::copy(hop1_maps.begin() + (static_cast<std::size_t>(i) * k1 + c) * h1 * h1,
                          hop1_maps.begin() + (static_cast<std::size_t>(i) * k1 + c + 1) * h1 * h1,
                          chan_maps.begin() + static_cast<std::size_t>(i) * h1 * h1);
            model.hop1_global.push_back(fit_global_pca(chan_maps, n_gpca, h1 * h1, c));
        }
    }
    {
        // Hop-2 maps for the global subset, one retained child at a time.
        std::vector<float> child_maps(static_cast<std::size_t>(n_gpca) * h2 * h2);
        std::vector<float> wbuf(static_cast<std::size_t>(F) * F);
        for (int rc = 0; rc < k2; ++rc) {
            auto [p, c] = model.hop2_children[static_cast<std::size_t>(rc)];
            if (!config.include_dc && c == 0) continue;
            const SaabKernel& k = model.hop2.kernels[static_cast<std::size_t>(p)];
            const auto& anchor = k.anchors[static_cast<std::size_t>(c)];
            const double b = k.bias[static_cast<std::size_t>(c)];
            for (std::int64_t i = 0; i < n_gpca; ++i) {
                const float* pm = pooled_maps.data() + (static_cast<std::size_t>(i) * k1 + p) * hp * hp;
                for (int y = 0; y < h2; ++y)
                    for (int x = 0; x < h2; ++x) {
                        double acc = b;
                        for (int fy = 0; fy < F; ++fy)
                            for (int fx = 0; fx < F; ++fx)
                                acc += anchor[static_cast<std::size_t>(fy) * F + fx] *
                                       pm[(y + fy) * hp + (x + fx)];
                        child_maps[static_cast<std::size_t>(i) * h2 * h2 + y * h2 + x] =
                            static_cast<float>(acc);
                    }
            }
            model.hop2_global.push_back(fit_global_pca(child_maps, n_gpca, h2 * h2, rc));
        }
    }

    model.layout.hop1_channels = k1;
    model.layout.hop2_channels = k2;
    model.layout.hop1_map = h1 * h1;
    model.layout.hop2_map = h2 * h2;
    model.layout.hop1_global_count = static_cast<int>(model.hop1_global.size());
    model.layout.hop2_global_count = static_cast<int>(model.hop2_global.size());
    return model;
}

std::vector<float> radhop_transform(const RadHopModel& model, std::span<const float> patch) {
    const RadHopConfig& cfg = model.config;
    const int S = cfg.patch_size;
    if (static_cast<int>(patch.size()) != S * S) throw ShapeError("patch size != config patch_size");
    const int F = cfg.filter_size;
    const int h1 = cfg.hop1_out(), hp = cfg.pooled(), h2 = cfg.hop2_out();
    const int k1 = model.layout.hop1_channels;

    std::vector<float> out(static_cast<std::size_t>(model.layout.total()));
    float* hop1_local = out.data() + model.layout.hop1_local_begin();
    float* hop2_local = out.data() + model.layout.hop2_local_begin();
    float* hop1_glob = out.data() + model.layout.hop1_global_begin();
    float* hop2_glob = out.data() + model.layout.hop2_global_begin();

    std::vector<float> wbuf;
    sweep_kernel(model.hop1, patch.data(), S, hop1_local, wbuf);

    std::vector<float> pooled(static_cast<std::size_t>(k1) * hp * hp);
    for (int c = 0; c < k1; ++c)
        max_pool_2x2(hop1_local + static_cast<std::int64_t>(c) * h1 * h1, h1,
                     pooled.data() + static_cast<std::size_t>(c) * hp * hp);

    // Hop-2 child maps, retained children only.
    for (std::size_t rc = 0; rc < model.hop2_children.size(); ++rc) {
        auto [p, c] = model.hop2_children[rc];
        const SaabKernel& k = model.hop2.kernels[static_cast<std::size_t>(p)];
        const auto& anchor = k.anchors[static_cast<std::size_t>(c)];
        const double b = k.bias[static_cast<std::size_t>(c)];
        const float* pm = pooled.data() + static_cast<std::size_t>(p) * hp * hp;
        float* dst = hop2_local + static_cast<std::int64_t>(rc) * h2 * h2;
        for (int y = 0; y < h2; ++y)
            for (int x = 0; x < h2; ++x) {
                double acc = b;
                for (int fy = 0; fy < F; ++fy)
                    for (int fx = 0; fx < F; ++fx)
                        acc += anchor[static_cast<std::size_t>(fy) * F + fx] * pm[(y + fy) * hp + (x + fx)];
                dst[y * h2 + x] = static_cast<float>(acc);
            }
    }

    for (std::size_t g = 0; g < model.hop1_global.size(); ++g) {
        const GlobalPca& gp = model.hop1_global[g];
        const float* map = hop1_local + static_cast<std::int64_t>(gp.channel) * h1 * h1;
        double acc = 0.0;
        for (int i = 0; i < h1 * h1; ++i) acc += (map[i] - gp.mean[static_cast<std::size_t>(i)]) * gp.dir[static_cast<std::size_t>(i)];
        hop1_glob[g] = static_cast<float>(acc);
    }
    for (std::size_t g = 0; g < model.hop2_global.size(); ++g) {
        const GlobalPca& gp = model.hop2_global[g];
        const float* map = hop2_local + static_cast<std::int64_t>(gp.channel) * h2 * h2;
        double acc = 0.0;
        for (int i = 0; i < h2 * h2; ++i) acc += (map[i] - gp.mean[static_cast<std::size_t>(i)]) * gp.dir[static_cast<std::size_t>(i)];
        hop2_glob[g] = static_cast<float>(acc);
    }
    return out;
}

double global_feature(const RadHopModel& model, int hop, int channel,
                      std::span<const float> spatial_map) {
    const auto& globals = hop == 1 ? model.hop1_global : model.hop2_global;
    if (hop != 1 && hop != 2) throw ConfigError("hop must be 1 or 2");
    const int map_dim = hop == 1 ? model.layout.hop1_map : model.layout.hop2_map;
    if (static_cast<int>(spatial_map.size()) != map_dim)
        throw ShapeError("spatial map size mismatch");
    for (const auto& g : globals)
        if (g.channel == channel) {
            double acc = 0.0;
            for (int i = 0; i < map_dim; ++i)
                acc += (spatial_map[static_cast<std::size_t>(i)] - g.mean[static_cast<std::size_t>(i)]) * g.dir[static_cast<std::size_t>(i)];
            return acc;
        }
    throw ConfigError("no global PCA stored for this channel");
}

std::int64_t count_parameters(const RadHopModel& model) {
    std::int64_t n = 0;
    const int d1 = model.hop1.dim();
    n += static_cast<std::int64_t>(model.hop1.num_anchors()) * d1; // anchors
    n += model.hop1.num_anchors();                                 // biases
    for (const auto& [p, c] : model.hop2_children) {
        n += model.hop2.kernels[static_cast<std::size_t>(p)].dim();
        n += 1;
    }
    for (const auto& g : model.hop1_global) n += static_cast<std::int64_t>(g.mean.size() + g.dir.size());
    for (const auto& g : model.hop2_global) n += static_cast<std::int64_t>(g.mean.size() + g.dir.size());
    return n;
}

std::int64_t estimate_transform_flops(const RadHopModel& model) {
    const auto& L = model.layout;
    std::int64_t flops = 0;
    flops += 2LL * L.hop1_map * L.hop1_channels * model.hop1.dim(); // hop-1 sweep
    flops += static_cast<std::int64_t>(L.hop1_map) * L.hop1_channels; // pooling compares
    flops += 2LL * L.hop2_map * L.hop2_channels * 9;                  // hop-2 sweep
    flops += 2LL * L.hop1_map * L.hop1_global_count;
    flops += 2LL * L.hop2_map * L.hop2_global_count;
    return flops;
}

} // namespace radhop

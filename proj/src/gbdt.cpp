#include "radhop/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "radhop/parallel.hpp"
#include "radhop/rng.hpp"
#include "radhop/serialize.hpp"

namespace radhop {

void GbdtParams::validate() const {
    if (n_trees < 1) throw ConfigError("n_trees must be >= 1");
    if (max_depth < 1 || max_depth > 24) throw ConfigError("max_depth must be in [1,24]");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
    if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
    if (subsample <= 0.0 || subsample > 1.0) throw ConfigError("subsample must be in (0,1]");
    if (l2_leaf_reg < 0.0) throw ConfigError("l2_leaf_reg must be >= 0");
}

double Tree::leaf_value(const float* x) const {
    int n = 0;
    while (nodes[static_cast<std::size_t>(n)].feature >= 0) {
        const TreeNode& t = nodes[static_cast<std::size_t>(n)];
        n = x[t.feature] < t.threshold ? t.left : t.right;
    }
    return nodes[static_cast<std::size_t>(n)].value;
}

double GbdtModel::predict_margin(const float* x) const {
    double f = base_score;
    for (const Tree& t : trees) f += params.learning_rate * t.leaf_value(x);
    return f;
}

double GbdtModel::predict_proba(std::span<const float> x) const {
    if (static_cast<std::int64_t>(x.size()) != n_features)
        throw ShapeError("feature vector length != model n_features");
    return 1.0 / (1.0 + std::exp(-predict_margin(x.data())));
}

namespace {

struct SplitResult {
    double gain = 0.0;
    double threshold = 0.0;
    std::int32_t feature = -1;
};

struct NodeStats {
    double g = 0.0, h = 0.0;
    std::int64_t count = 0;
};

constexpr double kMinGain = 1e-12;

} // namespace

GbdtModel gbdt_train(const FeatureMatrix& x, std::span<const std::uint8_t> labels,
                     const GbdtParams& params, int threads) {
    params.validate();
    const std::int64_t n = x.rows, d = x.cols;
    if (d < 1) throw ConfigError("gbdt_train needs at least one feature");
    if (n != static_cast<std::int64_t>(labels.size())) throw ShapeError("rows != labels length");
    if (n < 2LL * params.min_samples_leaf)
        throw InsufficientData("gbdt_train needs at least 2*min_samples_leaf samples");
    std::int64_t n_pos = 0;
    for (auto l : labels) n_pos += l ? 1 : 0;
    if (n_pos == 0 || n_pos == n) throw DegenerateLabels("gbdt_train needs both classes");

    // Column-major feature copy plus per-feature sort order (value, then index).
    std::vector<float> col(static_cast<std::size_t>(n * d));
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < d; ++j) col[static_cast<std::size_t>(j * n + i)] = x.row(i)[j];
    std::vector<std::int32_t> order(static_cast<std::size_t>(n * d));
    parallel_for(
        d,
        [&](std::int64_t j) {
            std::int32_t* o = order.data() + j * n;
            std::iota(o, o + n, 0);
            const float* v = col.data() + j * n;
            std::stable_sort(o, o + n,
                             [&](std::int32_t a, std::int32_t b) { return v[a] < v[b]; });
        },
        threads);

    GbdtModel model;
    model.params = params;
    model.n_features = d;
    const double prior = static_cast<double>(n_pos) / static_cast<double>(n);
    model.base_score = std::log(prior / (1.0 - prior));

    std::vector<double> margin(static_cast<std::size_t>(n), model.base_score);
    std::vector<double> grad(static_cast<std::size_t>(n)), hess(static_cast<std::size_t>(n));
    std::vector<std::int32_t> node_of(static_cast<std::size_t>(n));
    std::vector<std::int32_t> bag_pool(static_cast<std::size_t>(n));
    const double lambda = params.l2_leaf_reg;

    for (int t = 0; t < params.n_trees; ++t) {
        // Row subsampling without replacement, deterministic per tree.
        std::fill(node_of.begin(), node_of.end(), -1);
        if (params.subsample < 1.0) {
            Rng rng(params.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(t + 1));
            std::iota(bag_pool.begin(), bag_pool.end(), 0);
            rng.shuffle(bag_pool);
            const std::int64_t m = std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                                                 std::floor(n * params.subsample)));
            for (std::int64_t i = 0; i < m; ++i) node_of[static_cast<std::size_t>(bag_pool[static_cast<std::size_t>(i)])] = 0;
        } else {
            std::fill(node_of.begin(), node_of.end(), 0);
        }

        NodeStats root;
        for (std::int64_t i = 0; i < n; ++i) {
            const double p = 1.0 / (1.0 + std::exp(-margin[static_cast<std::size_t>(i)]));
            grad[static_cast<std::size_t>(i)] = p - (labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
            hess[static_cast<std::size_t>(i)] = p * (1.0 - p);
            if (node_of[static_cast<std::size_t>(i)] == 0) {
                root.g += grad[static_cast<std::size_t>(i)];
                root.h += hess[static_cast<std::size_t>(i)];
                ++root.count;
            }
        }

        Tree tree;
        tree.nodes.push_back(TreeNode{});
        std::vector<NodeStats> stats{root};
        std::vector<std::int32_t> level{0};

        for (int depth = 0; depth < params.max_depth && !level.empty(); ++depth) {
            // Nodes still worth splitting at this level.
            std::vector<std::int32_t> splittable;
            for (auto nid : level)
                if (stats[static_cast<std::size_t>(nid)].count >= 2LL * params.min_samples_leaf)
                    splittable.push_back(nid);
            if (splittable.empty()) break;

            std::vector<std::int32_t> slot_of(tree.nodes.size(), -1);
            for (std::size_t s = 0; s < splittable.size(); ++s)
                slot_of[static_cast<std::size_t>(splittable[s])] = static_cast<std::int32_t>(s);
            const std::size_t n_slots = splittable.size();

            // Best split per (feature, slot); reduced over features afterwards
            // in feature order so results do not depend on thread count.
            std::vector<SplitResult> feature_best(static_cast<std::size_t>(d) * n_slots);
            parallel_for(
                d,
                [&](std::int64_t j) {
                    const float* v = col.data() + j * n;
                    const std::int32_t* o = order.data() + j * n;
                    std::vector<double> gl(n_slots, 0.0), hl(n_slots, 0.0);
                    std::vector<std::int64_t> cl(n_slots, 0);
                    std::vector<float> prev(n_slots, 0.0f);
                    SplitResult* best = feature_best.data() + static_cast<std::size_t>(j) * n_slots;
                    for (std::int64_t r = 0; r < n; ++r) {
                        const std::int32_t i = o[r];
                        const std::int32_t nid = node_of[static_cast<std::size_t>(i)];
                        if (nid < 0 || static_cast<std::size_t>(nid) >= slot_of.size()) continue;
                        const std::int32_t s = slot_of[static_cast<std::size_t>(nid)];
                        if (s < 0) continue;
                        const float val = v[i];
                        const NodeStats& ns = stats[static_cast<std::size_t>(nid)];
                        if (cl[static_cast<std::size_t>(s)] > 0 && val > prev[static_cast<std::size_t>(s)]) {
                            const std::int64_t cr = ns.count - cl[static_cast<std::size_t>(s)];
                            if (cl[static_cast<std::size_t>(s)] >= params.min_samples_leaf &&
                                cr >= params.min_samples_leaf) {
                                const double gr = ns.g - gl[static_cast<std::size_t>(s)];
                                const double hr = ns.h - hl[static_cast<std::size_t>(s)];
                                const double gain =
                                    0.5 * (gl[static_cast<std::size_t>(s)] * gl[static_cast<std::size_t>(s)] /
                                               (hl[static_cast<std::size_t>(s)] + lambda) +
                                           gr * gr / (hr + lambda) -
                                           ns.g * ns.g / (ns.h + lambda));
                                if (gain > best[s].gain) {
                                    best[s].gain = gain;
                                    best[s].threshold =
                                        (static_cast<double>(prev[static_cast<std::size_t>(s)]) + val) / 2.0;
                                    best[s].feature = static_cast<std::int32_t>(j);
                                }
                            }
                        }
                        gl[static_cast<std::size_t>(s)] += grad[static_cast<std::size_t>(i)];
                        hl[static_cast<std::size_t>(s)] += hess[static_cast<std::size_t>(i)];
                        cl[static_cast<std::size_t>(s)] += 1;
                        prev[static_cast<std::size_t>(s)] = val;
                    }
                },
                threads);

            std::vector<SplitResult> chosen(n_slots);
            for (std::int64_t j = 0; j < d; ++j)
                for (std::size_t s = 0; s < n_slots; ++s) {
                    const SplitResult& c = feature_best[static_cast<std::size_t>(j) * n_slots + s];
                    if (c.feature >= 0 && c.gain > chosen[s].gain) chosen[s] = c;
                }

            std::vector<std::int32_t> next_level;
            std::vector<std::int32_t> split_nid(n_slots, -1);
            for (std::size_t s = 0; s < n_slots; ++s) {
                if (chosen[s].feature < 0 || chosen[s].gain <= kMinGain) continue;
                const std::int32_t nid = splittable[s];
                TreeNode& nd = tree.nodes[static_cast<std::size_t>(nid)];
                nd.feature = chosen[s].feature;
                nd.threshold = chosen[s].threshold;
                nd.left = static_cast<std::int32_t>(tree.nodes.size());
                nd.right = nd.left + 1;
                tree.nodes.push_back(TreeNode{});
                tree.nodes.push_back(TreeNode{});
                stats.push_back(NodeStats{});
                stats.push_back(NodeStats{});
                next_level.push_back(nd.left);
                next_level.push_back(nd.right);
                split_nid[s] = nid;
            }
            if (next_level.empty()) break;

            for (std::int64_t i = 0; i < n; ++i) {
                const std::int32_t nid = node_of[static_cast<std::size_t>(i)];
                if (nid < 0 || static_cast<std::size_t>(nid) >= slot_of.size()) continue;
                const std::int32_t s = slot_of[static_cast<std::size_t>(nid)];
                if (s < 0 || split_nid[static_cast<std::size_t>(s)] < 0) continue;
                const TreeNode& nd = tree.nodes[static_cast<std::size_t>(nid)];
                const std::int32_t child =
                    x.row(i)[nd.feature] < nd.threshold ? nd.left : nd.right;
                node_of[static_cast<std::size_t>(i)] = child;
                NodeStats& cs = stats[static_cast<std::size_t>(child)];
                cs.g += grad[static_cast<std::size_t>(i)];
                cs.h += hess[static_cast<std::size_t>(i)];
                ++cs.count;
            }
            level = std::move(next_level);
        }

        for (std::size_t nid = 0; nid < tree.nodes.size(); ++nid)
            if (tree.nodes[nid].feature < 0)
                tree.nodes[nid].value = -stats[nid].g / (stats[nid].h + lambda);

        parallel_for(
            n,
            [&](std::int64_t i) {
                margin[static_cast<std::size_t>(i)] +=
                    params.learning_rate * tree.leaf_value(x.row(i));
            },
            threads);
        model.trees.push_back(std::move(tree));
    }
    return model;
}

std::vector<double> gbdt_cross_predict(const FeatureMatrix& x,
                                       std::span<const std::uint8_t> labels,
                                       const GbdtParams& params, int folds, int threads) {
    if (folds < 2) throw ConfigError("cross_predict needs folds >= 2");
    const std::int64_t n = x.rows;
    if (n != static_cast<std::int64_t>(labels.size())) throw ShapeError("rows != labels length");
    if (folds > n) throw ConfigError("more folds than samples");

    // Stratified fold assignment, deterministic in the params seed: shuffled
    // positives then shuffled negatives are dealt round-robin over one shared
    // fold counter, so each class spreads evenly and folds == n degenerates
    // to leave-one-out.
    std::vector<std::int32_t> pos, neg;
    for (std::int64_t i = 0; i < n; ++i)
        (labels[static_cast<std::size_t>(i)] ? pos : neg).push_back(static_cast<std::int32_t>(i));
    if (pos.empty() || neg.empty()) throw DegenerateLabels("cross_predict needs both classes");
    Rng rng(params.seed + 0xA24BAED4963EE407ULL);
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::vector<std::int32_t> fold_of(static_cast<std::size_t>(n));
    std::int64_t counter = 0;
    for (auto i : pos) fold_of[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(counter++ % folds);
    for (auto i : neg) fold_of[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(counter++ % folds);

    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (int f = 0; f < folds; ++f) {
        FeatureMatrix train_x;
        train_x.cols = x.cols;
        std::vector<std::uint8_t> train_y;
        std::vector<std::int32_t> test_rows;
        for (std::int64_t i = 0; i < n; ++i) {
            if (fold_of[static_cast<std::size_t>(i)] == f) {
                test_rows.push_back(static_cast<std::int32_t>(i));
            } else {
                train_x.push_row(x.row_span(i));
                train_y.push_back(labels[static_cast<std::size_t>(i)]);
            }
        }
        bool has_pos = false, has_neg = false;
        for (auto l : train_y) (l ? has_pos : has_neg) = true;
        if (!has_pos || !has_neg)
            throw DegenerateLabels("cross_predict: a class is absent in a training fold");
        GbdtModel m = gbdt_train(train_x, train_y, params, threads);
        for (auto i : test_rows) out[static_cast<std::size_t>(i)] = m.predict_proba(x.row_span(i));
    }
    return out;
}

static constexpr std::uint32_t kGbdtMagic = 0x42474852u; // "RHGB" little-endian
static constexpr std::uint32_t kGbdtVersion = 1;

void gbdt_write(const GbdtModel& model, std::ostream& os) {
    io::write_u32(os, kGbdtMagic);
    io::write_u32(os, kGbdtVersion);
    io::write_i32(os, model.params.n_trees);
    io::write_i32(os, model.params.max_depth);
    io::write_f64(os, model.params.learning_rate);
    io::write_i32(os, model.params.min_samples_leaf);
    io::write_f64(os, model.params.subsample);
    io::write_f64(os, model.params.l2_leaf_reg);
    io::write_u64(os, model.params.seed);
    io::write_i64(os, model.n_features);
    io::write_f64(os, model.base_score);
    io::write_u64(os, model.trees.size());
    for (const Tree& t : model.trees) {
        io::write_u64(os, t.nodes.size());
        for (const TreeNode& nd : t.nodes) {
            io::write_i32(os, nd.feature);
            io::write_f64(os, nd.threshold);
            io::write_i32(os, nd.left);
            io::write_i32(os, nd.right);
            io::write_f64(os, nd.value);
        }
    }
}

GbdtModel gbdt_read(std::istream& is) {
    if (io::read_u32(is) != kGbdtMagic) throw FormatError("not a gbdt model file");
    if (io::read_u32(is) != kGbdtVersion) throw FormatError("unsupported gbdt model version");
    GbdtModel m;
    m.params.n_trees = io::read_i32(is);
    m.params.max_depth = io::read_i32(is);
    m.params.learning_rate = io::read_f64(is);
    m.params.min_samples_leaf = io::read_i32(is);
    m.params.subsample = io::read_f64(is);
    m.params.l2_leaf_reg = io::read_f64(is);
    m.params.seed = io::read_u64(is);
    m.n_features = io::read_i64(is);
    m.base_score = io::read_f64(is);
    const std::uint64_t n_trees = io::read_len(is, 1u << 24);
    m.trees.resize(static_cast<std::size_t>(n_trees));
    for (auto& t : m.trees) {
        const std::uint64_t n_nodes = io::read_len(is, 1u << 26);
        t.nodes.resize(static_cast<std::size_t>(n_nodes));
        for (auto& nd : t.nodes) {
            nd.feature = io::read_i32(is);
            nd.threshold = io::read_f64(is);
            nd.left = io::read_i32(is);
            nd.right = io::read_i32(is);
            nd.value = io::read_f64(is);
        }
        for (const auto& nd : t.nodes) {
            if (nd.feature >= 0 &&
                (nd.feature >= m.n_features || nd.left < 0 || nd.right < 0 ||
                 static_cast<std::uint64_t>(nd.left) >= n_nodes ||
                 static_cast<std::uint64_t>(nd.right) >= n_nodes))
                throw FormatError("corrupt gbdt tree");
        }
    }
    return m;
}

void gbdt_save(const GbdtModel& model, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    gbdt_write(model, f);
    if (!f) throw IoError("write failed: " + path);
}

GbdtModel gbdt_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    return gbdt_read(f);
}

} // namespace radhop

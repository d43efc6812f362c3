#include "radhop/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace radhop {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Typed setters over string values; every key must parse cleanly.
struct KeyTable {
    std::map<std::string, std::function<void(const std::string&)>> setters;

    void add_i64(const std::string& key, std::int64_t* dst) {
        setters[key] = [key, dst](const std::string& v) {
            try {
                std::size_t used = 0;
                *dst = std::stoll(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
            } catch (const std::exception&) {
                throw ConfigError("config key '" + key + "': not an integer: " + v);
            }
        };
    }
    void add_int(const std::string& key, int* dst) {
        setters[key] = [key, dst](const std::string& v) {
            try {
                std::size_t used = 0;
                long long x = std::stoll(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
                *dst = static_cast<int>(x);
            } catch (const std::exception&) {
                throw ConfigError("config key '" + key + "': not an integer: " + v);
            }
        };
    }
    void add_u64(const std::string& key, std::uint64_t* dst) {
        setters[key] = [key, dst](const std::string& v) {
            try {
                std::size_t used = 0;
                *dst = std::stoull(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
            } catch (const std::exception&) {
                throw ConfigError("config key '" + key + "': not an unsigned integer: " + v);
            }
        };
    }
    void add_double(const std::string& key, double* dst) {
        setters[key] = [key, dst](const std::string& v) {
            try {
                std::size_t used = 0;
                *dst = std::stod(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
            } catch (const std::exception&) {
                throw ConfigError("config key '" + key + "': not a number: " + v);
            }
        };
    }
    void add_bool(const std::string& key, bool* dst) {
        setters[key] = [key, dst](const std::string& v) {
            if (v == "true" || v == "1") *dst = true;
            else if (v == "false" || v == "0") *dst = false;
            else throw ConfigError("config key '" + key + "': not a bool: " + v);
        };
    }

    void apply(const std::map<std::string, std::string>& kv) const {
        for (const auto& [key, value] : kv) {
            auto it = setters.find(key);
            if (it == setters.end()) throw ConfigError("unknown config key: " + key);
            it->second(value);
        }
    }
};

KeyTable run_config_table(RunConfig& c) {
    KeyTable t;
    t.add_u64("seed", &c.seed);
    t.add_int("threads", &c.threads);
    t.add_int("radhop.patch_size", &c.radhop.patch_size);
    t.add_double("radhop.energy_threshold", &c.radhop.energy_threshold);
    t.add_bool("radhop.include_dc", &c.radhop.include_dc);
    t.add_int("radhop.min_training_patches", &c.radhop.min_training_patches);
    t.add_int("radhop.max_global_pca_samples", &c.radhop.max_global_pca_samples);
    t.add_int("dft.bins", &c.dft.bins);
    t.add_int("dft.keep_k", &c.dft.keep_k);
    t.add_int("gbdt.n_trees", &c.gbdt.n_trees);
    t.add_int("gbdt.max_depth", &c.gbdt.max_depth);
    t.add_double("gbdt.learning_rate", &c.gbdt.learning_rate);
    t.add_int("gbdt.min_samples_leaf", &c.gbdt.min_samples_leaf);
    t.add_double("gbdt.subsample", &c.gbdt.subsample);
    t.add_double("gbdt.l2_leaf_reg", &c.gbdt.l2_leaf_reg);
    t.add_double("mining.lambda", &c.mining.lambda);
    t.add_int("mining.bins", &c.mining.bins);
    t.add_double("mining.neg_pos_ratio", &c.mining.neg_pos_ratio);
    t.add_i64("mining.total_negatives", &c.mining.total_negatives);
    t.add_int("mining.folds", &c.mining_folds);
    t.add_int("stage1.sweep_stride", &c.sweep_stride);
    t.add_int("stage1.heatmap_stride", &c.heatmap_stride);
    t.add_double("anomaly.tpr_constraint", &c.anomaly_tpr_constraint);
    t.add_double("anomaly.unit_lesion_frac", &c.anomaly_unit_lesion_frac);
    t.add_int("stage2.dft_bins", &c.stage2_dft.bins);
    t.add_int("stage2.keep_k", &c.stage2_dft.keep_k);
    t.add_double("stage2.iou_min", &c.stage2_iou_min);
    t.add_int("radiomics.gray_levels", &c.radiomics.gray_levels);
    t.add_double("eval.min_prob", &c.eval_min_prob);
    t.add_i64("eval.min_voxels", &c.eval_min_voxels);
    return t;
}

KeyTable phantom_spec_table(PhantomSpec& s) {
    KeyTable t;
    t.add_u64("seed", &s.seed);
    t.add_int("n_lesions", &s.n_lesions);
    t.add_double("gland_radius_mm", &s.gland_radius_mm);
    t.add_double("lesion_radius_mm", &s.lesion_radius_mm);
    t.add_double("texture_contrast", &s.texture_contrast);
    t.add_double("noise_sigma", &s.noise_sigma);
    t.add_int("depth", &s.dims[0]);
    t.add_int("height", &s.dims[1]);
    t.add_int("width", &s.dims[2]);
    t.add_double("spacing_z", &s.spacing[0]);
    t.add_double("spacing_y", &s.spacing[1]);
    t.add_double("spacing_x", &s.spacing[2]);
    return t;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

std::map<std::string, std::string> parse_flat_config(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (kv.count(key)) throw ConfigError("duplicate config key: " + key);
        kv[key] = value;
    }
    return kv;
}

void RunConfig::validate() const {
    radhop.validate();
    dft.validate();
    gbdt.validate();
    mining.validate();
    radiomics.validate();
    stage2_dft.validate();
    if (threads < 0) throw ConfigError("threads must be >= 0");
    if (mining_folds < 2) throw ConfigError("mining.folds must be >= 2");
    if (sweep_stride != kUnitSize)
        throw ConfigError("stage1.sweep_stride must be 8 to align with the anomaly units");
    if (heatmap_stride < 1) throw ConfigError("stage1.heatmap_stride must be >= 1");
    if (anomaly_tpr_constraint <= 0.0 || anomaly_tpr_constraint > 1.0)
        throw ConfigError("anomaly.tpr_constraint must be in (0,1]");
    if (anomaly_unit_lesion_frac <= 0.0 || anomaly_unit_lesion_frac > 1.0)
        throw ConfigError("anomaly.unit_lesion_frac must be in (0,1]");
    if (stage2_iou_min <= 0.0 || stage2_iou_min > 1.0)
        throw ConfigError("stage2.iou_min must be in (0,1]");
    if (eval_min_prob < 0.0 || eval_min_prob > 1.0)
        throw ConfigError("eval.min_prob must be in [0,1]");
    if (eval_min_voxels < 1) throw ConfigError("eval.min_voxels must be >= 1");
}

RunConfig parse_run_config_text(const std::string& text) {
    RunConfig c;
    run_config_table(c).apply(parse_flat_config(text));
    c.validate();
    return c;
}

RunConfig parse_run_config(const std::string& path) {
    return parse_run_config_text(read_file(path));
}

std::string serialize_run_config(const RunConfig& c) {
    std::ostringstream out;
    out.precision(17);
    out << "seed = " << c.seed << "\n";
    out << "threads = " << c.threads << "\n";
    out << "radhop.patch_size = " << c.radhop.patch_size << "\n";
    out << "radhop.energy_threshold = " << c.radhop.energy_threshold << "\n";
    out << "radhop.include_dc = " << (c.radhop.include_dc ? "true" : "false") << "\n";
    out << "radhop.min_training_patches = " << c.radhop.min_training_patches << "\n";
    out << "radhop.max_global_pca_samples = " << c.radhop.max_global_pca_samples << "\n";
    out << "dft.bins = " << c.dft.bins << "\n";
    out << "dft.keep_k = " << c.dft.keep_k << "\n";
    out << "gbdt.n_trees = " << c.gbdt.n_trees << "\n";
    out << "gbdt.max_depth = " << c.gbdt.max_depth << "\n";
    out << "gbdt.learning_rate = " << c.gbdt.learning_rate << "\n";
    out << "gbdt.min_samples_leaf = " << c.gbdt.min_samples_leaf << "\n";
    out << "gbdt.subsample = " << c.gbdt.subsample << "\n";
    out << "gbdt.l2_leaf_reg = " << c.gbdt.l2_leaf_reg << "\n";
    out << "mining.lambda = " << c.mining.lambda << "\n";
    out << "mining.bins = " << c.mining.bins << "\n";
    out << "mining.neg_pos_ratio = " << c.mining.neg_pos_ratio << "\n";
    out << "mining.total_negatives = " << c.mining.total_negatives << "\n";
    out << "mining.folds = " << c.mining_folds << "\n";
    out << "stage1.sweep_stride = " << c.sweep_stride << "\n";
    out << "stage1.heatmap_stride = " << c.heatmap_stride << "\n";
    out << "anomaly.tpr_constraint = " << c.anomaly_tpr_constraint << "\n";
    out << "anomaly.unit_lesion_frac = " << c.anomaly_unit_lesion_frac << "\n";
    out << "stage2.dft_bins = " << c.stage2_dft.bins << "\n";
    out << "stage2.keep_k = " << c.stage2_dft.keep_k << "\n";
    out << "stage2.iou_min = " << c.stage2_iou_min << "\n";
    out << "radiomics.gray_levels = " << c.radiomics.gray_levels << "\n";
    out << "eval.min_prob = " << c.eval_min_prob << "\n";
    out << "eval.min_voxels = " << c.eval_min_voxels << "\n";
    return out.str();
}

PhantomSpec parse_phantom_spec(const std::string& path) {
    PhantomSpec s;
    phantom_spec_table(s).apply(parse_flat_config(read_file(path)));
    s.validate();
    return s;
}

std::string serialize_phantom_spec(const PhantomSpec& s) {
    std::ostringstream out;
    out.precision(17);
    out << "seed = " << s.seed << "\n";
    out << "n_lesions = " << s.n_lesions << "\n";
    out << "gland_radius_mm = " << s.gland_radius_mm << "\n";
    out << "lesion_radius_mm = " << s.lesion_radius_mm << "\n";
    out << "texture_contrast = " << s.texture_contrast << "\n";
    out << "noise_sigma = " << s.noise_sigma << "\n";
    out << "depth = " << s.dims[0] << "\n";
    out << "height = " << s.dims[1] << "\n";
    out << "width = " << s.dims[2] << "\n";
    out << "spacing_z = " << s.spacing[0] << "\n";
    out << "spacing_y = " << s.spacing[1] << "\n";
    out << "spacing_x = " << s.spacing[2] << "\n";
    return out.str();
}

} // namespace radhop

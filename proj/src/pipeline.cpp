#include "radhop/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "radhop/parallel.hpp"
#include "radhop/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace radhop {

namespace {

Stage2Options stage2_options(const RunConfig& config, double t_opt) {
    Stage2Options opt;
    opt.t_opt = t_opt;
    opt.iou_min = config.stage2_iou_min;
    opt.radiomics = config.radiomics;
    opt.dft = config.stage2_dft;
    opt.gbdt = config.gbdt;
    opt.gbdt.seed = config.seed + 0x51ED2701D3B0A6B1ULL;
    opt.threads = config.threads;
    return opt;
}

} // namespace

PipelineModel train_pipeline(const std::vector<Study>& studies, const RunConfig& config,
                             TrainReport* report) {
    config.validate();
    PipelineModel model;
    model.config = config;

    Stage1TrainOptions s1;
    s1.seed = config.seed;
    s1.radhop = config.radhop;
    s1.dft = config.dft;
    s1.gbdt = config.gbdt;
    s1.gbdt.seed = config.seed;
    s1.mining = config.mining;
    s1.folds = config.mining_folds;
    s1.sweep_stride = config.sweep_stride;
    s1.threads = config.threads;

    Stage1TrainResult s1r = train_stage1(studies, s1);
    model.stage1 = std::move(s1r.artifacts);

    TrainReport rep;
    rep.n_studies = static_cast<std::int64_t>(studies.size());
    rep.n_positive_patches = s1r.n_positives;
    rep.n_step1_negatives = s1r.n_step1_negatives;
    rep.n_dense_negatives = s1r.n_dense_negatives;
    rep.mining_bin_counts = s1r.mining_bin_counts;
    if (s1r.single_study_warning)
        rep.warnings.push_back("single-study cohort: no held-out calibration is possible");

    // Anomaly calibration over the training sweeps.
    std::vector<Heatmap> heatmaps;
    heatmaps.reserve(studies.size());
    for (std::size_t s = 0; s < studies.size(); ++s)
        heatmaps.push_back(assemble_heatmap(studies[s], s1r.sweep_predictions[s],
                                            config.sweep_stride, config.radhop.patch_size));
    LabeledUnitSet units;
    for (std::size_t s = 0; s < studies.size(); ++s) {
        for (const auto& map : compute_anomaly_maps(heatmaps[s])) {
            LabeledUnitSet u = label_units(map, studies[s], config.anomaly_unit_lesion_frac);
            units.scores.insert(units.scores.end(), u.scores.begin(), u.scores.end());
            units.labels.insert(units.labels.end(), u.labels.begin(), u.labels.end());
        }
    }
    model.t_opt = calibrate_threshold(units, config.anomaly_tpr_constraint);
    rep.t_opt = model.t_opt;

    // Stage-2 dataset and classifier. A cohort can legitimately fail to
    // produce both TP and FP candidates; refinement is then disabled.
    try {
        Stage2Options s2 = stage2_options(config, model.t_opt);
        Stage2Dataset ds = build_stage2_dataset(studies, heatmaps, model.stage1, s2);
        rep.n_candidates = ds.x.rows;
        for (auto l : ds.labels) rep.n_tp_candidates += l ? 1 : 0;
        model.stage2 = train_stage2(ds, s2);
        model.has_stage2 = true;
    } catch (const DegenerateError& e) {
        model.has_stage2 = false;
        rep.warnings.push_back(std::string("stage-2 disabled: ") + e.what());
    }
    rep.stage2_trained = model.has_stage2;

    model.param_count = pipeline_param_count(model);
    rep.param_count = model.param_count;
    rep.transform_flops_per_patch = 3 * estimate_transform_flops(model.stage1.radhop[0]);
    if (report) *report = rep;
    return model;
}

PredictionResult predict_study(const PipelineModel& model, const Study& study,
                               bool stage1_only) {
    const RunConfig& config = model.config;
    PredictionResult res;

    if (stage1_only) {
        res.stage1_heatmap =
            predict_heatmap(study, model.stage1, config.heatmap_stride, config.threads);
        res.final_heatmap = res.stage1_heatmap;
        return res;
    }

    res.stage1_heatmap =
        predict_heatmap(study, model.stage1, config.sweep_stride, config.threads);
    res.anomaly = compute_anomaly_maps(res.stage1_heatmap);

    Stage2Options s2 = stage2_options(config, model.t_opt);
    for (const auto& map : res.anomaly)
        for (const auto& cand : detect_candidates(map, model.t_opt)) {
            CandidateRecord rec;
            rec.study = 0;
            rec.candidate = cand;
            rec.label = study.has_lesion_mask ? candidate_label(study, cand, s2.iou_min) : -1;
            res.candidates.push_back(rec);
        }

    if (model.has_stage2 && !res.candidates.empty()) {
        Stage2Layout layout;
        int radhop_len = 0;
        for (const auto& sel : model.stage1.dft) radhop_len += static_cast<int>(sel.kept.size());
        layout.radhop_len = radhop_len;

        parallel_for(
            static_cast<std::int64_t>(res.candidates.size()),
            [&](std::int64_t k) {
                CandidateRecord& rec = res.candidates[static_cast<std::size_t>(k)];
                std::vector<float> feats;
                feats.reserve(static_cast<std::size_t>(layout.total()));
                const auto anom =
                    anomaly_features(res.anomaly[static_cast<std::size_t>(rec.candidate.slice)], rec.candidate);
                for (double v : anom) feats.push_back(static_cast<float>(v));
                const Roi roi = candidate_roi(study, rec.candidate);
                for (int seq = 0; seq < 3; ++seq) {
                    const auto f = extract_radiomics(roi, seq, s2.radiomics);
                    feats.insert(feats.end(), f.begin(), f.end());
                }
                const auto rh = radhop_roi_feature(roi, study, model.stage1.radhop, model.stage1.dft);
                feats.insert(feats.end(), rh.begin(), rh.end());
                rec.stage2_prob = stage2_predict(model.stage2, feats);
            },
            config.threads);
        RefinedHeatmap refined =
            refine_heatmap(res.stage1_heatmap, study, res.candidates, config.eval_min_prob);
        res.final_heatmap = std::move(refined.heatmap);
        res.candidates = std::move(refined.candidates);
    } else {
        res.final_heatmap = res.stage1_heatmap;
    }
    return res;
}

namespace {

std::uint64_t gbdt_real_count(const GbdtModel& m) {
    std::uint64_t n = 1; // base score
    for (const auto& t : m.trees) n += t.nodes.size(); // one real per node
    return n;
}

} // namespace

std::uint64_t pipeline_param_count(const PipelineModel& model) {
    std::uint64_t n = 0;
    for (const auto& rh : model.stage1.radhop) n += static_cast<std::uint64_t>(count_parameters(rh));
    n += gbdt_real_count(model.stage1.classifier);
    n += 1; // t_opt
    if (model.has_stage2) n += gbdt_real_count(model.stage2.classifier);
    return n;
}

// ----------------------------------------------------------- container format

namespace {

constexpr std::uint32_t kModelMagic = 0x4D485250u; // "PRHM"
constexpr std::uint32_t kModelVersion = 1;

void write_f64v(std::ostream& os, const std::vector<double>& v) { io::write_f64_vec(os, v); }

void write_kernel(std::ostream& os, const SaabKernel& k) {
    io::write_i32(os, k.filter_size);
    write_f64v(os, k.mean);
    io::write_u64(os, k.anchors.size());
    for (const auto& a : k.anchors) write_f64v(os, a);
    write_f64v(os, k.bias);
    write_f64v(os, k.energies);
}

SaabKernel read_kernel(std::istream& is) {
    SaabKernel k;
    k.filter_size = io::read_i32(is);
    if (k.filter_size < 1 || k.filter_size > 64) throw FormatError("bad kernel filter size");
    k.mean = io::read_f64_vec(is);
    const std::uint64_t m = io::read_len(is, 1u << 16);
    k.anchors.resize(static_cast<std::size_t>(m));
    for (auto& a : k.anchors) a = io::read_f64_vec(is);
    k.bias = io::read_f64_vec(is);
    k.energies = io::read_f64_vec(is);
    if (k.bias.size() != m || k.energies.size() != m) throw FormatError("kernel arrays mismatch");
    return k;
}

void write_global_pca(std::ostream& os, const GlobalPca& g) {
    io::write_i32(os, g.channel);
    write_f64v(os, g.mean);
    write_f64v(os, g.dir);
}

GlobalPca read_global_pca(std::istream& is) {
    GlobalPca g;
    g.channel = io::read_i32(is);
    g.mean = io::read_f64_vec(is);
    g.dir = io::read_f64_vec(is);
    return g;
}

void write_radhop(std::ostream& os, const RadHopModel& m) {
    io::write_i32(os, m.config.patch_size);
    io::write_i32(os, m.config.filter_size);
    io::write_f64(os, m.config.energy_threshold);
    io::write_u8(os, m.config.include_dc ? 1 : 0);
    io::write_i32(os, m.config.min_training_patches);
    io::write_i32(os, m.config.max_global_pca_samples);
    write_kernel(os, m.hop1);
    io::write_i32(os, m.hop2.filter_size);
    io::write_u64(os, m.hop2.kernels.size());
    for (const auto& k : m.hop2.kernels) write_kernel(os, k);
    write_f64v(os, m.hop2.child_energy);
    io::write_u64(os, m.hop2.keep_mask.size());
    for (auto b : m.hop2.keep_mask) io::write_u8(os, b);
    io::write_i32_vec(os, m.hop2.parent_of_child);
    io::write_u64(os, m.hop2_children.size());
    for (const auto& [p, c] : m.hop2_children) {
        io::write_i32(os, p);
        io::write_i32(os, c);
    }
    io::write_u64(os, m.hop1_global.size());
    for (const auto& g : m.hop1_global) write_global_pca(os, g);
    io::write_u64(os, m.hop2_global.size());
    for (const auto& g : m.hop2_global) write_global_pca(os, g);
}

RadHopModel read_radhop(std::istream& is) {
    RadHopModel m;
    m.config.patch_size = io::read_i32(is);
    m.config.filter_size = io::read_i32(is);
    m.config.energy_threshold = io::read_f64(is);
    m.config.include_dc = io::read_u8(is) != 0;
    m.config.min_training_patches = io::read_i32(is);
    m.config.max_global_pca_samples = io::read_i32(is);
    m.config.validate();
    m.hop1 = read_kernel(is);
    m.hop2.filter_size = io::read_i32(is);
    const std::uint64_t nk = io::read_len(is, 1u << 16);
    m.hop2.kernels.resize(static_cast<std::size_t>(nk));
    for (auto& k : m.hop2.kernels) k = read_kernel(is);
    m.hop2.child_energy = io::read_f64_vec(is);
    const std::uint64_t nm = io::read_len(is, 1u << 20);
    m.hop2.keep_mask.resize(static_cast<std::size_t>(nm));
    for (auto& b : m.hop2.keep_mask) b = io::read_u8(is);
    m.hop2.parent_of_child = io::read_i32_vec(is);
    const std::uint64_t nc = io::read_len(is, 1u << 20);
    m.hop2_children.resize(static_cast<std::size_t>(nc));
    for (auto& [p, c] : m.hop2_children) {
        p = io::read_i32(is);
        c = io::read_i32(is);
    }
    std::uint64_t n1 = io::read_len(is, 1u << 16);
    m.hop1_global.resize(static_cast<std::size_t>(n1));
    for (auto& g : m.hop1_global) g = read_global_pca(is);
    std::uint64_t n2 = io::read_len(is, 1u << 20);
    m.hop2_global.resize(static_cast<std::size_t>(n2));
    for (auto& g : m.hop2_global) g = read_global_pca(is);

    m.layout.hop1_channels = m.hop1.num_anchors();
    m.layout.hop2_channels = static_cast<int>(m.hop2_children.size());
    m.layout.hop1_map = m.config.hop1_out() * m.config.hop1_out();
    m.layout.hop2_map = m.config.hop2_out() * m.config.hop2_out();
    m.layout.hop1_global_count = static_cast<int>(m.hop1_global.size());
    m.layout.hop2_global_count = static_cast<int>(m.hop2_global.size());
    return m;
}

void write_selection(std::ostream& os, const DftSelection& s) {
    io::write_i64(os, s.input_dim);
    io::write_i32_vec(os, s.kept);
}

DftSelection read_selection(std::istream& is) {
    DftSelection s;
    s.input_dim = io::read_i64(is);
    s.kept = io::read_i32_vec(is);
    for (auto k : s.kept)
        if (k < 0 || k >= s.input_dim) throw FormatError("selection index out of range");
    return s;
}

} // namespace

void save_pipeline(const PipelineModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    io::write_u32(os, kModelMagic);
    io::write_u32(os, kModelVersion);
    io::write_string(os, serialize_run_config(model.config));
    for (const auto& rh : model.stage1.radhop) write_radhop(os, rh);
    for (const auto& sel : model.stage1.dft) write_selection(os, sel);
    gbdt_write(model.stage1.classifier, os);
    io::write_f64(os, model.t_opt);
    io::write_u8(os, model.has_stage2 ? 1 : 0);
    if (model.has_stage2) {
        write_selection(os, model.stage2.selection);
        gbdt_write(model.stage2.classifier, os);
    }
    io::write_u64(os, model.param_count);
    if (!os) throw IoError("write failed: " + path);
}

PipelineModel load_pipeline(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    if (io::read_u32(is) != kModelMagic) throw FormatError("not a pipeline model file");
    if (io::read_u32(is) != kModelVersion) throw FormatError("unsupported model version");
    PipelineModel m;
    m.config = parse_run_config_text(io::read_string(is));
    for (auto& rh : m.stage1.radhop) rh = read_radhop(is);
    for (auto& sel : m.stage1.dft) sel = read_selection(is);
    m.stage1.classifier = gbdt_read(is);
    m.t_opt = io::read_f64(is);
    m.has_stage2 = io::read_u8(is) != 0;
    if (m.has_stage2) {
        m.stage2.selection = read_selection(is);
        m.stage2.classifier = gbdt_read(is);
    }
    m.param_count = io::read_u64(is);
    if (pipeline_param_count(m) != m.param_count)
        throw FormatError("model self-check failed: parameter recount mismatch");
    return m;
}

// ----------------------------------------------------------------- manifests

std::vector<ManifestCase> read_manifest(const std::string& cohort_dir) {
    const std::string path = (fs::path(cohort_dir) / "manifest.json").string();
    std::ifstream f(path);
    if (!f) throw IoError("missing manifest: " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw FormatError(std::string("bad manifest: ") + e.what());
    }
    std::vector<ManifestCase> cases;
    for (const auto& c : j.at("cases")) {
        ManifestCase mc;
        mc.id = c.at("id").get<std::string>();
        mc.label = c.at("label").get<int>();
        mc.n_lesions = c.value("n_lesions", 0);
        cases.push_back(std::move(mc));
    }
    return cases;
}

void write_manifest(const std::string& cohort_dir, const std::vector<ManifestCase>& cases) {
    json j;
    j["cases"] = json::array();
    for (const auto& c : cases)
        j["cases"].push_back({{"id", c.id}, {"label", c.label}, {"n_lesions", c.n_lesions}});
    std::ofstream f(fs::path(cohort_dir) / "manifest.json");
    if (!f) throw IoError("cannot write manifest in " + cohort_dir);
    f << j.dump(2) << "\n";
}

EvalReport evaluate_cohort(const std::string& cohort_dir, const std::string& pred_dir,
                           const RunConfig& config) {
    const auto cases = read_manifest(cohort_dir);
    if (cases.empty()) throw DegenerateGroundTruth("empty cohort manifest");

    std::vector<std::string> missing;
    for (const auto& c : cases) {
        const fs::path hp = fs::path(pred_dir) / c.id / "heatmap.f32raw";
        if (!fs::exists(hp)) missing.push_back(c.id);
    }
    if (!missing.empty()) {
        std::string msg = "missing predictions for cases:";
        for (const auto& id : missing) msg += " " + id;
        throw IoError(msg);
    }

    EvalReport rep;
    std::vector<std::vector<Detection>> det_per_study;
    std::vector<std::vector<std::vector<std::int64_t>>> gt_per_study;
    std::vector<double> case_scores;
    std::vector<std::uint8_t> case_labels;
    for (const auto& c : cases) {
        const Study study = load_study_dir((fs::path(cohort_dir) / c.id).string());
        const Volume heatmap =
            load_volume((fs::path(pred_dir) / c.id / "heatmap.f32raw").string());
        if (heatmap.dims != study.t2.dims)
            throw FormatError("heatmap dims mismatch for case " + c.id);

        auto dets = extract_detections(heatmap, config.eval_min_prob, config.eval_min_voxels);
        double case_score = 0.0;
        for (float v : heatmap.data) case_score = std::max(case_score, static_cast<double>(v));

        CaseResult cr;
        cr.id = c.id;
        cr.label = c.label;
        cr.case_score = case_score;
        cr.n_detections = static_cast<int>(dets.size());
        rep.cases.push_back(cr);

        det_per_study.push_back(std::move(dets));
        gt_per_study.push_back(lesion_voxel_sets(study.lesion_mask));
        case_scores.push_back(case_score);
        case_labels.push_back(c.label ? 1 : 0);
    }

    const ApResult ap = match_and_ap(det_per_study, gt_per_study, 0.1);
    rep.ap = ap.ap;
    rep.curve = ap.curve;
    rep.auroc = auroc(case_scores, case_labels);
    rep.score = picai_score(rep.ap, rep.auroc);
    return rep;
}

} // namespace radhop

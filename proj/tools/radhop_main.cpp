// Command-line surface for the two-stage detection pipeline: phantom cohort
// generation, training, prediction and evaluation.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "radhop/config.hpp"
#include "radhop/parallel.hpp"
#include "radhop/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace radhop;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << text;
}

RunConfig load_config(const std::string& path, int threads_flag) {
    RunConfig cfg = path.empty() ? RunConfig{} : parse_run_config(path);
    if (threads_flag > 0) cfg.threads = threads_flag;
    cfg.validate();
    set_default_threads(cfg.threads);
    return cfg;
}

std::vector<Study> load_cohort(const std::string& cohort_dir,
                               std::vector<ManifestCase>* cases_out = nullptr) {
    auto cases = read_manifest(cohort_dir);
    std::vector<Study> studies;
    studies.reserve(cases.size());
    for (const auto& c : cases)
        studies.push_back(load_study_dir((fs::path(cohort_dir) / c.id).string()));
    if (cases_out) *cases_out = std::move(cases);
    return studies;
}

int cmd_phantom(const std::string& spec_path, int count, const std::string& out) {
    PhantomSpec base = spec_path.empty() ? PhantomSpec{} : parse_phantom_spec(spec_path);
    fs::create_directories(out);

    std::vector<ManifestCase> cases;
    for (int i = 0; i < count; ++i) {
        PhantomSpec spec = base;
        spec.seed = base.seed + static_cast<std::uint64_t>(i);
        spec.n_lesions = (i % 2 == 0) ? base.n_lesions : 0; // alternate lesion/clean
        char name[32];
        std::snprintf(name, sizeof(name), "case_%04d", i);
        auto [study, lesions] = generate_phantom(spec);
        save_study(study, (fs::path(out) / name).string());
        cases.push_back({name, spec.n_lesions > 0 ? 1 : 0, static_cast<int>(lesions.size())});
    }
    write_manifest(out, cases);
    write_text((fs::path(out) / "phantom_spec.txt").string(), serialize_phantom_spec(base));
    std::cout << "wrote " << count << " studies to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& cohort,
              const std::string& out_model, int threads) {
    RunConfig cfg = load_config(config_path, threads);
    std::vector<ManifestCase> cases;
    std::vector<Study> studies = load_cohort(cohort, &cases);

    TrainReport report;
    PipelineModel model = train_pipeline(studies, cfg, &report);
    if (fs::path(out_model).has_parent_path())
        fs::create_directories(fs::path(out_model).parent_path());
    save_pipeline(model, out_model);

    json j;
    j["n_studies"] = report.n_studies;
    j["n_positive_patches"] = report.n_positive_patches;
    j["n_step1_negatives"] = report.n_step1_negatives;
    j["n_dense_negatives"] = report.n_dense_negatives;
    j["mining_bin_counts"] = report.mining_bin_counts;
    j["n_candidates"] = report.n_candidates;
    j["n_tp_candidates"] = report.n_tp_candidates;
    j["t_opt"] = report.t_opt;
    j["param_count"] = report.param_count;
    j["transform_flops_per_patch"] = report.transform_flops_per_patch;
    j["stage2_trained"] = report.stage2_trained;
    j["warnings"] = report.warnings;
    write_text(out_model + ".report.json", j.dump(2) + "\n");
    write_text(out_model + ".config.txt", serialize_run_config(cfg));

    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "model: " << out_model << "\n"
              << "t_opt: " << report.t_opt << "\n"
              << "parameters: " << report.param_count << "\n";
    return 0;
}

void save_anomaly_volume(const std::vector<AnomalyMap>& maps, const Volume& ref,
                         const std::string& path) {
    if (maps.empty()) return;
    Volume v({static_cast<int>(maps.size()), maps[0].rows, maps[0].cols},
             {ref.spacing[0], ref.spacing[1] * kUnitSize, ref.spacing[2] * kUnitSize});
    for (std::size_t z = 0; z < maps.size(); ++z)
        std::copy(maps[z].scores.begin(), maps[z].scores.end(),
                  v.data.begin() + static_cast<std::int64_t>(z) * maps[z].rows * maps[z].cols);
    save_volume(v, path, Role::Anomaly);
}

void write_candidates_csv(const std::vector<CandidateRecord>& candidates,
                          const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << "slice,unit_i,unit_j,mean_anomaly,stage1_region_max,stage2_prob,label\n";
    f.precision(9);
    for (const auto& rec : candidates) {
        f << rec.candidate.slice << "," << rec.candidate.i << "," << rec.candidate.j << ","
          << rec.candidate.mean_score << "," << rec.stage1_region_max << ",";
        if (rec.stage2_prob >= 0.0) f << rec.stage2_prob;
        f << ",";
        if (rec.label >= 0) f << rec.label;
        f << "\n";
    }
}

int cmd_predict(const std::string& model_path, const std::string& study_dir,
                const std::string& out, bool stage1_only, int threads) {
    PipelineModel model = load_pipeline(model_path);
    if (threads > 0) model.config.threads = threads;
    set_default_threads(model.config.threads);
    Study study = load_study_dir(study_dir);
    fs::create_directories(out);

    PredictionResult res = predict_study(model, study, stage1_only);
    save_volume(res.final_heatmap.prob, (fs::path(out) / "heatmap.f32raw").string(),
                Role::Heatmap);
    save_volume(res.stage1_heatmap.prob, (fs::path(out) / "heatmap_stage1.f32raw").string(),
                Role::Heatmap);
    if (!stage1_only) {
        save_anomaly_volume(res.anomaly, study.t2, (fs::path(out) / "anomaly.f32raw").string());
        write_candidates_csv(res.candidates, (fs::path(out) / "candidates.csv").string());
    }
    write_text((fs::path(out) / "config.txt").string(), serialize_run_config(model.config));
    std::cout << "predicted " << study_dir << " -> " << out << "\n";
    return 0;
}

int cmd_evaluate(const std::string& pred_dir, const std::string& cohort,
                 const std::string& report_dir, const std::string& config_path, int threads) {
    RunConfig cfg = load_config(config_path, threads);
    EvalReport rep = evaluate_cohort(cohort, pred_dir, cfg);
    fs::create_directories(report_dir);

    {
        std::ofstream f(fs::path(report_dir) / "report.csv");
        f.precision(9);
        f << "metric,value\nAP," << rep.ap << "\nAUROC," << rep.auroc << "\nscore," << rep.score
          << "\n";
    }
    {
        std::ofstream f(fs::path(report_dir) / "cases.csv");
        f.precision(9);
        f << "id,label,case_score,n_detections\n";
        for (const auto& c : rep.cases)
            f << c.id << "," << c.label << "," << c.case_score << "," << c.n_detections << "\n";
    }
    {
        std::ofstream f(fs::path(report_dir) / "pr_curve.csv");
        f.precision(9);
        f << "score,precision,recall\n";
        for (const auto& p : rep.curve)
            f << p.score << "," << p.precision << "," << p.recall << "\n";
    }
    {
        std::ofstream f(fs::path(report_dir) / "report.txt");
        f.precision(6);
        f << "cases:  " << rep.cases.size() << "\n"
          << "AP:     " << rep.ap << "\n"
          << "AUROC:  " << rep.auroc << "\n"
          << "score:  " << rep.score << "\n";
    }
    write_text((fs::path(report_dir) / "config.txt").string(), serialize_run_config(cfg));
    std::cout << "AP " << rep.ap << "  AUROC " << rep.auroc << "  score " << rep.score << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage Saab/RadHop prostate lesion detection pipeline"};
    app.require_subcommand(1);

    std::string spec_path, out_dir, config_path, cohort_dir, model_path, study_dir, pred_dir,
        report_dir;
    int count = 0;
    int threads = 0;
    bool stage1_only = false;

    auto* phantom = app.add_subcommand("phantom", "Generate a synthetic study cohort");
    phantom->add_option("--spec", spec_path, "Phantom spec file (key = value)");
    phantom->add_option("--count", count, "Number of studies")->required();
    phantom->add_option("--out", out_dir, "Output cohort directory")->required();

    auto* train = app.add_subcommand("train", "Train the full pipeline on a cohort");
    train->add_option("--config", config_path, "Run config file (key = value)");
    train->add_option("--cohort", cohort_dir, "Cohort directory with manifest.json")->required();
    train->add_option("--out-model", model_path, "Output model container path")->required();
    train->add_option("--threads", threads, "Worker threads (0 = all cores)");

    auto* predict = app.add_subcommand("predict", "Predict heatmaps for one study");
    predict->add_option("--model", model_path, "Model container path")->required();
    predict->add_option("--study", study_dir, "Study directory")->required();
    predict->add_option("--out", out_dir, "Output directory")->required();
    predict->add_flag("--stage1-only", stage1_only, "Skip anomaly map and stage-2 refinement");
    predict->add_option("--threads", threads, "Worker threads (0 = all cores)");

    auto* evaluate = app.add_subcommand("evaluate", "Score predictions against a cohort");
    evaluate->add_option("--pred-dir", pred_dir, "Directory of per-case prediction folders")
        ->required();
    evaluate->add_option("--cohort", cohort_dir, "Cohort directory with ground truth")->required();
    evaluate->add_option("--report", report_dir, "Report output directory")->required();
    evaluate->add_option("--config", config_path, "Run config file");
    evaluate->add_option("--threads", threads, "Worker threads (0 = all cores)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (phantom->parsed()) return cmd_phantom(spec_path, count, out_dir);
        if (train->parsed()) return cmd_train(config_path, cohort_dir, model_path, threads);
        if (predict->parsed())
            return cmd_predict(model_path, study_dir, out_dir, stage1_only, threads);
        if (evaluate->parsed())
            return cmd_evaluate(pred_dir, cohort_dir, report_dir, config_path, threads);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const DegenerateError& e) {
        std::cerr << "degenerate input: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "radhop/dft.hpp"
#include "radhop/gbdt.hpp"
#include "radhop/phantom.hpp"
#include "radhop/radhop.hpp"
#include "radhop/radiomics.hpp"
#include "radhop/stage1.hpp"

namespace radhop {

// All pipeline knobs, loadable from a flat `key = value` text file.
// Unknown keys are rejected; the effective config (defaults applied) is
// echoed back by every CLI command.
struct RunConfig {
    std::uint64_t seed = 7;
    int threads = 0; // 0 = all cores

    RadHopConfig radhop;
    DftConfig dft;
    GbdtParams gbdt;
    MiningConfig mining;
    int mining_folds = 5;
    int sweep_stride = 8;
    int heatmap_stride = 4;

    double anomaly_tpr_constraint = 0.95;
    double anomaly_unit_lesion_frac = 0.5;

    DftConfig stage2_dft{32, 500};
    double stage2_iou_min = 0.1;
    RadiomicsConfig radiomics;

    double eval_min_prob = 0.05;
    std::int64_t eval_min_voxels = 8;

    void validate() const;
};

RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text);
std::string serialize_run_config(const RunConfig& config);

PhantomSpec parse_phantom_spec(const std::string& path);
std::string serialize_phantom_spec(const PhantomSpec& spec);

// Shared flat key=value reader ('#' comments, blank lines allowed).
std::map<std::string, std::string> parse_flat_config(const std::string& text);

} // namespace radhop

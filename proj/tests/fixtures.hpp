#pragma once

// Shared desk-scale fixtures: small phantom cohorts and a reduced-size run
// configuration that keeps unit tests fast while exercising the real
// 24x24 patch geometry.

#include <vector>

#include "radhop/config.hpp"
#include "radhop/phantom.hpp"

namespace fixtures {

inline radhop::PhantomSpec tiny_phantom_spec(std::uint64_t seed, int n_lesions) {
    radhop::PhantomSpec spec;
    spec.seed = seed;
    spec.n_lesions = n_lesions;
    spec.dims = {12, 48, 48};
    spec.spacing = {2.0, 1.0, 1.0};
    spec.gland_radius_mm = 20.0;
    spec.lesion_radius_mm = 5.5;
    spec.texture_contrast = 0.6;
    spec.noise_sigma = 0.05;
    return spec;
}

inline std::vector<radhop::Study> tiny_cohort(int n_lesion_studies, int n_clean_studies,
                                              std::uint64_t seed = 100) {
    std::vector<radhop::Study> studies;
    for (int i = 0; i < n_lesion_studies + n_clean_studies; ++i) {
        auto spec = tiny_phantom_spec(seed + static_cast<std::uint64_t>(i),
                                      i < n_lesion_studies ? 1 : 0);
        studies.push_back(radhop::generate_phantom(spec).first);
    }
    return studies;
}

inline radhop::RunConfig tiny_run_config() {
    radhop::RunConfig c;
    c.seed = 11;
    c.threads = 0;
    c.radhop.min_training_patches = 40;
    c.radhop.max_global_pca_samples = 200;
    c.dft.keep_k = 60;
    c.gbdt.n_trees = 25;
    c.gbdt.max_depth = 3;
    c.gbdt.min_samples_leaf = 5;
    c.mining_folds = 2;
    c.stage2_dft.keep_k = 40;
    c.anomaly_unit_lesion_frac = 0.4;
    return c;
}

} // namespace fixtures

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "radhop/errors.hpp"

namespace radhop {

// Axis order is (z, y, x) = (depth, height, width) everywhere; voxel (z,y,x)
// sits at physical position (z*spacing[0], y*spacing[1], x*spacing[2]) mm.
struct Volume {
    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::vector<float> data;

    Volume() = default;
    Volume(std::array<int, 3> d, std::array<double, 3> s, float fill = 0.0f);

    std::int64_t voxel_count() const {
        return static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
    }
    std::int64_t index(int z, int y, int x) const {
        return (static_cast<std::int64_t>(z) * dims[1] + y) * dims[2] + x;
    }
    float at(int z, int y, int x) const { return data[static_cast<std::size_t>(index(z, y, x))]; }
    float& at(int z, int y, int x) { return data[static_cast<std::size_t>(index(z, y, x))]; }
    bool in_bounds(int z, int y, int x) const {
        return z >= 0 && z < dims[0] && y >= 0 && y < dims[1] && x >= 0 && x < dims[2];
    }
    bool same_grid(const Volume& o) const { return dims == o.dims && spacing == o.spacing; }

    void validate() const; // throws FormatError on broken invariants
};

enum class Role { T2, Adc, Dwi, Gland, Lesion, Heatmap, Anomaly };

std::string role_name(Role r);
Role parse_role(const std::string& s);

struct Study {
    Volume t2, adc, dwi;
    Volume gland_mask;  // binary 0/1
    Volume lesion_mask; // 0 = background, k = lesion id; all-zero when absent
    bool has_lesion_mask = false;
    std::string patient_id;

    const Volume& sequence(int s) const; // 0=T2, 1=ADC, 2=DWI
    void validate() const;
};

// Raw little-endian float32 voxels in `<name>.f32raw`, metadata in a JSON
// sidecar `<name>.meta.json` with keys dims, spacing_mm, role.
void save_volume(const Volume& v, const std::string& path_f32raw, Role role);
Volume load_volume(const std::string& path_f32raw, Role* role_out = nullptr);

// Loads the channels named by `volume_paths` (roles read from the sidecars)
// and resamples everything onto the T2 grid: trilinear for image channels,
// nearest neighbor for masks.
Study load_study(const std::vector<std::string>& volume_paths);
Study load_study_dir(const std::string& dir);
void save_study(const Study& s, const std::string& dir);

enum class Interp { Trilinear, Nearest };

// Resamples src onto ref's grid in physical (mm) coordinates. Samples that
// fall outside src clamp to the nearest edge voxel.
Volume resample_to_reference(const Volume& src, const Volume& ref,
                             Interp interp = Interp::Trilinear);

// Side length of one anomaly unit; patch labels are decided on the center
// block of this size.
inline constexpr int kUnitSize = 8;

enum class PatchLabel : std::uint8_t { Positive, Negative, Unlabeled };

struct Patch {
    std::array<int, 3> center{0, 0, 0}; // (z, y, x)
    int size = 0;
    std::array<std::vector<float>, 3> pixels; // T2, ADC, DWI crops, row-major S*S
    PatchLabel label = PatchLabel::Unlabeled;
};

// A size-S patch centered at c spans [c - S/2, c + S/2) per in-plane axis.
struct PatchWindow {
    int y0, x0, size;
};
PatchWindow patch_window(int cy, int cx, int size);

struct PatchExtractOptions {
    int size = 24;
    int stride = 8;                 // negative sampling grid
    double positive_overlap = 0.25; // dense positive tiling overlap
};

// In-plane prediction/sampling grid: coordinates 4 + k*stride restricted so a
// centered patch stays inside [0, dim). A stride-8 grid lands on the centers
// of the 8x8 anomaly units, and finer grids that divide 8 contain it.
std::vector<int> patch_grid_coords(int dim, int patch_size, int stride);

// Dense positive tiling over annotated lesion slices plus grid negatives over
// gland slices. A patch is positive iff its center 8x8 block intersects the
// lesion mask; all returned patches lie fully inside the volume.
std::vector<Patch> extract_patches(const Study& study, const PatchExtractOptions& opt);

// Crops one size x size window (top-left y0,x0) from slice z of each sequence.
Patch crop_patch(const Study& study, int z, int y0, int x0, int size);

} // namespace radhop

#include "radhop/volume.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "radhop/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace radhop {

Volume::Volume(std::array<int, 3> d, std::array<double, 3> s, float fill)
    : dims(d), spacing(s) {
    if (d[0] <= 0 || d[1] <= 0 || d[2] <= 0) throw FormatError("volume dims must be positive");
    if (s[0] <= 0 || s[1] <= 0 || s[2] <= 0) throw FormatError("volume spacing must be positive");
    data.assign(static_cast<std::size_t>(voxel_count()), fill);
}

void Volume::validate() const {
    if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) throw FormatError("volume dims must be positive");
    if (spacing[0] <= 0 || spacing[1] <= 0 || spacing[2] <= 0)
        throw FormatError("volume spacing must be positive");
    if (static_cast<std::int64_t>(data.size()) != voxel_count())
        throw FormatError("volume data length does not match dims");
}

std::string role_name(Role r) {
    switch (r) {
        case Role::T2: return "T2";
        case Role::Adc: return "ADC";
        case Role::Dwi: return "DWI";
        case Role::Gland: return "GLAND";
        case Role::Lesion: return "LESION";
        case Role::Heatmap: return "HEATMAP";
        case Role::Anomaly: return "ANOMALY";
    }
    throw ConfigError("unknown role");
}

Role parse_role(const std::string& s) {
    if (s == "T2") return Role::T2;
    if (s == "ADC") return Role::Adc;
    if (s == "DWI") return Role::Dwi;
    if (s == "GLAND") return Role::Gland;
    if (s == "LESION") return Role::Lesion;
    if (s == "HEATMAP") return Role::Heatmap;
    if (s == "ANOMALY") return Role::Anomaly;
    throw FormatError("unknown channel role: " + s);
}

const Volume& Study::sequence(int s) const {
    switch (s) {
        case 0: return t2;
        case 1: return adc;
        case 2: return dwi;
    }
    throw ConfigError("sequence index out of range");
}

void Study::validate() const {
    t2.validate();
    adc.validate();
    dwi.validate();
    gland_mask.validate();
    lesion_mask.validate();
    if (!adc.same_grid(t2) || !dwi.same_grid(t2) || !gland_mask.same_grid(t2) ||
        !lesion_mask.same_grid(t2))
        throw FormatError("study channels are not on a common grid");
    bool any_gland = std::any_of(gland_mask.data.begin(), gland_mask.data.end(),
                                 [](float v) { return v > 0.5f; });
    if (!any_gland) throw FormatError("gland mask is empty");
}

static std::string sidecar_path(const std::string& path_f32raw) {
    std::string p = path_f32raw;
    const std::string ext = ".f32raw";
    if (p.size() >= ext.size() && p.compare(p.size() - ext.size(), ext.size(), ext) == 0)
        p.resize(p.size() - ext.size());
    return p + ".meta.json";
}

void save_volume(const Volume& v, const std::string& path, Role role) {
    v.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    for (float x : v.data) io::write_f32(f, x);
    f.close();
    if (!f) throw IoError("write failed: " + path);

    json meta;
    meta["dims"] = {v.dims[0], v.dims[1], v.dims[2]};
    meta["spacing_mm"] = {v.spacing[0], v.spacing[1], v.spacing[2]};
    meta["role"] = role_name(role);
    std::ofstream m(sidecar_path(path));
    if (!m) throw IoError("cannot open for writing: " + sidecar_path(path));
    m << meta.dump(2) << "\n";
}

Volume load_volume(const std::string& path, Role* role_out) {
    std::ifstream m(sidecar_path(path));
    if (!m) throw IngestError("missing sidecar: " + sidecar_path(path));
    json meta;
    try {
        m >> meta;
    } catch (const std::exception& e) {
        throw FormatError("bad sidecar " + sidecar_path(path) + ": " + e.what());
    }
    if (!meta.contains("dims") || !meta.contains("spacing_mm") || !meta.contains("role"))
        throw FormatError("sidecar missing dims/spacing_mm/role: " + sidecar_path(path));

    Volume v;
    auto d = meta["dims"];
    auto s = meta["spacing_mm"];
    if (d.size() != 3 || s.size() != 3) throw FormatError("dims/spacing_mm must have 3 entries");
    for (int i = 0; i < 3; ++i) {
        v.dims[i] = d[i].get<int>();
        v.spacing[i] = s[i].get<double>();
    }
    if (v.dims[0] <= 0 || v.dims[1] <= 0 || v.dims[2] <= 0)
        throw FormatError("nonpositive dims in sidecar: " + sidecar_path(path));
    if (v.spacing[0] <= 0 || v.spacing[1] <= 0 || v.spacing[2] <= 0)
        throw FormatError("nonpositive spacing in sidecar: " + sidecar_path(path));
    if (role_out) *role_out = parse_role(meta["role"].get<std::string>());

    std::error_code ec;
    auto fsize = fs::file_size(path, ec);
    if (ec) throw IngestError("missing volume file: " + path);
    if (fsize != static_cast<std::uintmax_t>(v.voxel_count()) * 4)
        throw FormatError("file size does not match dims*4: " + path);

    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    v.data.resize(static_cast<std::size_t>(v.voxel_count()));
    for (auto& x : v.data) x = io::read_f32(f);
    return v;
}

static float sample_clamped(const Volume& v, int z, int y, int x) {
    z = std::clamp(z, 0, v.dims[0] - 1);
    y = std::clamp(y, 0, v.dims[1] - 1);
    x = std::clamp(x, 0, v.dims[2] - 1);
    return v.at(z, y, x);
}

Volume resample_to_reference(const Volume& src, const Volume& ref, Interp interp) {
    src.validate();
    ref.validate();
    if (src.same_grid(ref)) return src; // identity resample is bitwise exact
    Volume out;
    out.dims = ref.dims;
    out.spacing = ref.spacing;
    out.data.resize(static_cast<std::size_t>(out.voxel_count()));
    std::size_t n = 0;
    for (int z = 0; z < out.dims[0]; ++z) {
        const double pz = z * ref.spacing[0] / src.spacing[0];
        for (int y = 0; y < out.dims[1]; ++y) {
            const double py = y * ref.spacing[1] / src.spacing[1];
            for (int x = 0; x < out.dims[2]; ++x, ++n) {
                const double px = x * ref.spacing[2] / src.spacing[2];
                if (interp == Interp::Nearest) {
                    out.data[n] = sample_clamped(src, static_cast<int>(std::lround(pz)),
                                                 static_cast<int>(std::lround(py)),
                                                 static_cast<int>(std::lround(px)));
                    continue;
                }
                const int z0 = static_cast<int>(std::floor(pz));
                const int y0 = static_cast<int>(std::floor(py));
                const int x0 = static_cast<int>(std::floor(px));
                const double fz = pz - z0, fy = py - y0, fx = px - x0;
                double acc = 0.0;
                for (int dz = 0; dz <= 1; ++dz)
                    for (int dy = 0; dy <= 1; ++dy)
                        for (int dx = 0; dx <= 1; ++dx) {
                            const double w = (dz ? fz : 1.0 - fz) * (dy ? fy : 1.0 - fy) *
                                             (dx ? fx : 1.0 - fx);
                            if (w == 0.0) continue;
                            acc += w * sample_clamped(src, z0 + dz, y0 + dy, x0 + dx);
                        }
                out.data[n] = static_cast<float>(acc);
            }
        }
    }
    return out;
}

Study load_study(const std::vector<std::string>& volume_paths) {
    std::map<std::string, Volume> by_role;
    for (const auto& p : volume_paths) {
        Role role;
        Volume v = load_volume(p, &role);
        std::string name = role_name(role);
        if (by_role.count(name)) throw IngestError("duplicate channel role: " + name);
        by_role.emplace(name, std::move(v));
    }
    for (const char* required : {"T2", "ADC", "DWI", "GLAND"})
        if (!by_role.count(required))
            throw IngestError(std::string("missing channel: ") + required);

    Study s;
    s.t2 = std::move(by_role.at("T2"));
    s.adc = resample_to_reference(by_role.at("ADC"), s.t2, Interp::Trilinear);
    s.dwi = resample_to_reference(by_role.at("DWI"), s.t2, Interp::Trilinear);
    s.gland_mask = resample_to_reference(by_role.at("GLAND"), s.t2, Interp::Nearest);
    if (by_role.count("LESION")) {
        s.lesion_mask = resample_to_reference(by_role.at("LESION"), s.t2, Interp::Nearest);
        s.has_lesion_mask = true;
    } else {
        s.lesion_mask = Volume(s.t2.dims, s.t2.spacing, 0.0f);
        s.has_lesion_mask = false;
    }
    s.validate();
    return s;
}

Study load_study_dir(const std::string& dir) {
    std::vector<std::string> paths;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(dir, ec)) {
        if (e.path().extension() == ".f32raw") paths.push_back(e.path().string());
    }
    if (ec) throw IoError("cannot read directory: " + dir);
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw IngestError("no .f32raw volumes in " + dir);
    Study s = load_study(paths);
    s.patient_id = fs::path(dir).filename().string();
    return s;
}

void save_study(const Study& s, const std::string& dir) {
    fs::create_directories(dir);
    save_volume(s.t2, (fs::path(dir) / "t2.f32raw").string(), Role::T2);
    save_volume(s.adc, (fs::path(dir) / "adc.f32raw").string(), Role::Adc);
    save_volume(s.dwi, (fs::path(dir) / "dwi.f32raw").string(), Role::Dwi);
    save_volume(s.gland_mask, (fs::path(dir) / "gland.f32raw").string(), Role::Gland);
    if (s.has_lesion_mask)
        save_volume(s.lesion_mask, (fs::path(dir) / "lesion.f32raw").string(), Role::Lesion);
}

PatchWindow patch_window(int cy, int cx, int size) {
    return PatchWindow{cy - size / 2, cx - size / 2, size};
}

std::vector<int> patch_grid_coords(int dim, int patch_size, int stride) {
    if (stride < 1) throw ConfigError("stride must be >= 1");
    const int lo = patch_size / 2, hi = dim - patch_size / 2;
    std::vector<int> coords;
    for (int c = kUnitSize / 2; c <= hi; c += stride)
        if (c >= lo) coords.push_back(c);
    return coords;
}

Patch crop_patch(const Study& study, int z, int y0, int x0, int size) {
    Patch p;
    p.center = {z, y0 + size / 2, x0 + size / 2};
    p.size = size;
    for (int s = 0; s < 3; ++s) {
        const Volume& v = study.sequence(s);
        auto& px = p.pixels[static_cast<std::size_t>(s)];
        px.resize(static_cast<std::size_t>(size) * size);
        for (int y = 0; y < size; ++y) {
            const float* row = v.data.data() + v.index(z, y0 + y, x0);
            std::copy(row, row + size, px.data() + static_cast<std::size_t>(y) * size);
        }
    }
    return p;
}

// Center 8x8 block of a patch centered at (cy, cx).
static bool center_block_hits_lesion(const Study& st, int z, int cy, int cx) {
    const int h = kUnitSize / 2;
    for (int y = cy - h; y < cy + h; ++y)
        for (int x = cx - h; x < cx + h; ++x)
            if (st.lesion_mask.in_bounds(z, y, x) && st.lesion_mask.at(z, y, x) > 0.5f)
                return true;
    return false;
}

std::vector<Patch> extract_patches(const Study& study, const PatchExtractOptions& opt) {
    study.validate();
    const int H = study.t2.dims[1], W = study.t2.dims[2], D = study.t2.dims[0];
    const int S = opt.size;
    if (S > H || S > W) throw ConfigError("patch size exceeds slice dims");
    if (opt.stride < 1) throw ConfigError("stride must be >= 1");
    if (opt.positive_overlap < 0.0 || opt.positive_overlap >= 1.0)
        throw ConfigError("positive_overlap must be in [0,1)");

    const int lo_y = S / 2, hi_y = H - S / 2; // valid center range is [lo, hi]
    const int lo_x = S / 2, hi_x = W - S / 2;
    const int pos_stride = std::max(1, static_cast<int>(S * (1.0 - opt.positive_overlap)));

    std::vector<Patch> out;
    for (int z = 0; z < D; ++z) {
        bool gland_here = false, lesion_here = false;
        for (int y = 0; y < H && !(gland_here && lesion_here); ++y)
            for (int x = 0; x < W; ++x) {
                gland_here = gland_here || study.gland_mask.at(z, y, x) > 0.5f;
                lesion_here = lesion_here || study.lesion_mask.at(z, y, x) > 0.5f;
            }
        if (!gland_here) continue;

        std::set<std::pair<int, int>> tiling_centers;
        if (lesion_here) {
            // Tile the lesion bounding box with the overlap stride.
            int ymin = H, ymax = -1, xmin = W, xmax = -1;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    if (study.lesion_mask.at(z, y, x) > 0.5f) {
                        ymin = std::min(ymin, y); ymax = std::max(ymax, y);
                        xmin = std::min(xmin, x); xmax = std::max(xmax, x);
                    }
            for (int cy = ymin; cy <= ymax + pos_stride - 1; cy += pos_stride)
                for (int cx = xmin; cx <= xmax + pos_stride - 1; cx += pos_stride)
                    tiling_centers.emplace(std::clamp(cy, lo_y, hi_y), std::clamp(cx, lo_x, hi_x));
            for (auto [cy, cx] : tiling_centers) {
                if (!center_block_hits_lesion(study, z, cy, cx)) continue;
                PatchWindow w = patch_window(cy, cx, S);
                Patch p = crop_patch(study, z, w.y0, w.x0, S);
                p.label = PatchLabel::Positive;
                out.push_back(std::move(p));
            }
        }

        // Grid patches over the gland, labeled by the center-block rule.
        const std::vector<int> gys = patch_grid_coords(H, S, opt.stride);
        const std::vector<int> gxs = patch_grid_coords(W, S, opt.stride);
        for (int cy : gys)
            for (int cx : gxs) {
                if (study.gland_mask.at(z, cy, cx) <= 0.5f) continue;
                if (tiling_centers.count({cy, cx})) continue;
                PatchWindow w = patch_window(cy, cx, S);
                Patch p = crop_patch(study, z, w.y0, w.x0, S);
                p.label = center_block_hits_lesion(study, z, cy, cx) ? PatchLabel::Positive
                                                                     : PatchLabel::Negative;
                out.push_back(std::move(p));
            }
    }
    return out;
}

} // namespace radhop

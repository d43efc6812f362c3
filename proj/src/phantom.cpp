#include "radhop/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "radhop/rng.hpp"

namespace radhop {

void PhantomSpec::validate() const {
    if (n_lesions < 0) throw ConfigError("n_lesions must be >= 0");
    if (gland_radius_mm <= 0 || lesion_radius_mm <= 0)
        throw ConfigError("phantom radii must be positive");
    if (lesion_radius_mm >= gland_radius_mm)
        throw ConfigError("lesion_radius_mm must be smaller than gland_radius_mm");
    if (texture_contrast <= 0.0 || texture_contrast > 1.0)
        throw ConfigError("texture_contrast must be in (0,1]");
    if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
    if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) throw ConfigError("phantom dims must be positive");
    if (spacing[0] <= 0 || spacing[1] <= 0 || spacing[2] <= 0)
        throw ConfigError("phantom spacing must be positive");
}

double phantom_lesion_delta(double texture_contrast) { return 0.4 * texture_contrast; }

namespace {

struct Wave {
    std::array<double, 3> k{}; // rad/mm per axis
    double phase = 0.0;
    double amp = 0.0;
    double eval(double z, double y, double x) const {
        return amp * std::cos(k[0] * z + k[1] * y + k[2] * x + phase);
    }
};

Wave random_wave(Rng& rng, double period_lo_mm, double period_hi_mm, double amp) {
    Wave w;
    for (int a = 0; a < 3; ++a) {
        double period = rng.uniform(period_lo_mm, period_hi_mm);
        double sign = rng.uniform01() < 0.5 ? -1.0 : 1.0;
        w.k[a] = sign * 2.0 * 3.14159265358979323846 / period;
    }
    w.phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    w.amp = amp;
    return w;
}

inline bool inside_ellipsoid(const std::array<double, 3>& p, const std::array<double, 3>& c,
                             const std::array<double, 3>& semi) {
    double q = 0.0;
    for (int a = 0; a < 3; ++a) {
        double t = (p[a] - c[a]) / semi[a];
        q += t * t;
    }
    return q <= 1.0;
}

} // namespace

std::pair<Study, std::vector<PhantomLesion>> generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    const auto dims = spec.dims;
    const auto sp = spec.spacing;
    const std::array<double, 3> extent_mm = {dims[0] * sp[0], dims[1] * sp[1], dims[2] * sp[2]};

    // Gland: jittered ellipsoid around the volume center.
    std::array<double, 3> gland_c;
    for (int a = 0; a < 3; ++a) gland_c[a] = 0.5 * extent_mm[a] + rng.uniform(-2.0, 2.0);
    const std::array<double, 3> gland_semi = {0.6 * spec.gland_radius_mm, spec.gland_radius_mm,
                                              0.85 * spec.gland_radius_mm};

    // Lesion placement with bounded retries; lesions must fit fully inside
    // the gland and must not overlap each other. A failed arrangement is
    // restarted from scratch so an unlucky first placement cannot wedge the
    // later ones.
    std::vector<PhantomLesion> lesions;
    const double margin_mm = 1.0;
    bool all_placed = spec.n_lesions == 0;
    for (int restart = 0; restart < 40 && !all_placed; ++restart) {
        lesions.clear();
        all_placed = true;
        for (int k = 0; k < spec.n_lesions && all_placed; ++k) {
            bool placed = false;
            for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
                PhantomLesion les;
                les.label = k + 1;
                for (int a = 0; a < 3; ++a)
                    les.semi_axes_mm[a] = spec.lesion_radius_mm * rng.uniform(0.8, 1.1);
                const double r_max =
                    *std::max_element(les.semi_axes_mm.begin(), les.semi_axes_mm.end());
                // Centers restricted to the gland ellipsoid shrunk uniformly
                // by (r_max + margin)/min_semi, which guarantees containment.
                const double min_semi = *std::min_element(gland_semi.begin(), gland_semi.end());
                const double shrink = 1.0 - (r_max + margin_mm) / min_semi;
                if (shrink <= 0.0) continue;
                std::array<double, 3> c;
                double q = 0.0;
                for (int a = 0; a < 3; ++a) {
                    double u = rng.uniform(-1.0, 1.0);
                    c[a] = gland_c[a] + u * gland_semi[a] * shrink;
                    q += u * u;
                }
                if (q > 1.0) continue;
                bool overlaps = false;
                for (const auto& other : lesions) {
                    double d2 = 0.0;
                    for (int a = 0; a < 3; ++a) {
                        double d = c[a] - other.center_mm[a];
                        d2 += d * d;
                    }
                    double min_sep = r_max + *std::max_element(other.semi_axes_mm.begin(),
                                                               other.semi_axes_mm.end());
                    if (d2 < min_sep * min_sep) {
                        overlaps = true;
                        break;
                    }
                }
                if (overlaps) continue;
                les.center_mm = c;
                lesions.push_back(les);
                placed = true;
            }
            all_placed = all_placed && placed;
        }
    }
    if (!all_placed) throw PlacementError("could not place lesions inside gland");

    // Texture fields: three smooth waves per channel for the gland, one
    // higher-frequency wave per channel for lesions.
    std::array<std::array<Wave, 3>, 3> gland_tex;
    for (int ch = 0; ch < 3; ++ch)
        for (int w = 0; w < 3; ++w) gland_tex[ch][w] = random_wave(rng, 20.0, 60.0, 0.05);
    std::array<Wave, 3> lesion_tex;
    for (int ch = 0; ch < 3; ++ch)
        lesion_tex[ch] = random_wave(rng, 4.0, 8.0, 0.1 * spec.texture_contrast);

    const double delta = phantom_lesion_delta(spec.texture_contrast);
    const std::array<double, 3> outside = {0.20, 0.25, 0.20};
    const std::array<double, 3> gland_base = {0.60, 0.60, 0.40};
    const std::array<double, 3> lesion_sign = {-1.0, -1.0, +1.0}; // T2 hypo, ADC hypo, DWI hyper

    Study st;
    st.t2 = Volume(dims, sp);
    st.adc = Volume(dims, sp);
    st.dwi = Volume(dims, sp);
    st.gland_mask = Volume(dims, sp);
    st.lesion_mask = Volume(dims, sp);
    st.has_lesion_mask = true;

    Volume* chans[3] = {&st.t2, &st.adc, &st.dwi};

    std::size_t n = 0;
    for (int z = 0; z < dims[0]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[2]; ++x, ++n) {
                const std::array<double, 3> p = {z * sp[0], y * sp[1], x * sp[2]};
                const bool in_gland = inside_ellipsoid(p, gland_c, gland_semi);
                int lesion_label = 0;
                for (const auto& les : lesions)
                    if (inside_ellipsoid(p, les.center_mm, les.semi_axes_mm)) {
                        lesion_label = les.label;
                        break;
                    }
                st.gland_mask.data[n] = in_gland ? 1.0f : 0.0f;
                st.lesion_mask.data[n] = static_cast<float>(lesion_label);
                for (int ch = 0; ch < 3; ++ch) {
                    double v;
                    if (in_gland) {
                        v = gland_base[ch];
                        for (const auto& w : gland_tex[ch]) v += w.eval(p[0], p[1], p[2]);
                        if (lesion_label > 0) {
                            v += lesion_sign[ch] * delta;
                            v += lesion_tex[ch].eval(p[0], p[1], p[2]);
                        }
                    } else {
                        v = outside[ch];
                    }
                    chans[ch]->data[n] = static_cast<float>(v);
                }
            }

    // Noise last, channel by channel, in a fixed draw order.
    if (spec.noise_sigma > 0.0)
        for (int ch = 0; ch < 3; ++ch)
            for (auto& v : chans[ch]->data)
                v = static_cast<float>(v + spec.noise_sigma * rng.normal());

    for (auto& les : lesions) {
        les.voxel_count = 0;
        for (float v : st.lesion_mask.data)
            if (static_cast<int>(v) == les.label) ++les.voxel_count;
    }

    st.validate();
    return {std::move(st), std::move(lesions)};
}

} // namespace radhop

#include "radhop/radiomics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Dense>

namespace radhop {

std::int64_t Roi::mask_count() const {
    std::int64_t n = 0;
    for (auto m : mask) n += m ? 1 : 0;
    return n;
}

void Roi::validate() const {
    if (height <= 0 || width <= 0) throw ShapeError("roi dims must be positive");
    if (static_cast<std::int64_t>(mask.size()) != static_cast<std::int64_t>(height) * width)
        throw ShapeError("roi mask size mismatch");
    for (const auto& c : crops)
        if (c.size() != mask.size()) throw ShapeError("roi crop size mismatch");
    if (mask_count() < 2) throw DegenerateRoi("roi mask has fewer than 2 pixels");
}

void RadiomicsConfig::validate() const {
    if (gray_levels < 2) throw ConfigError("gray_levels must be >= 2");
}

std::array<int, 7> radiomics_family_sizes() { return {19, 10, 24, 16, 16, 5, 14}; }

namespace {

inline double log2_safe(double v) { return v > 0.0 ? std::log2(v) : 0.0; }

// ---------------------------------------------------------------- first order

// numpy-style linear-interpolated percentile over sorted values.
double percentile(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = q / 100.0 * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= n) return sorted[n - 1];
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

void first_order_features(const std::vector<double>& values, const std::vector<int>& levels,
                          int gray_levels, double pixel_area, std::vector<float>& out) {
    const double n = static_cast<double>(values.size());
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());

    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double m2 = 0, m3 = 0, m4 = 0, energy = 0, mad = 0;
    for (double v : values) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
        energy += v * v;
        mad += std::abs(d);
    }
    m2 /= n; m3 /= n; m4 /= n; mad /= n;

    const double p10 = percentile(sorted, 10.0), p90 = percentile(sorted, 90.0);
    const double p25 = percentile(sorted, 25.0), p75 = percentile(sorted, 75.0);
    double rsum = 0;
    std::int64_t rcount = 0;
    for (double v : values)
        if (v >= p10 && v <= p90) { rsum += v; ++rcount; }
    double rmad = 0;
    if (rcount > 0) {
        const double rmean = rsum / static_cast<double>(rcount);
        for (double v : values)
            if (v >= p10 && v <= p90) rmad += std::abs(v - rmean);
        rmad /= static_cast<double>(rcount);
    }

    std::vector<double> hist(static_cast<std::size_t>(gray_levels) + 1, 0.0);
    for (int l : levels) hist[static_cast<std::size_t>(l)] += 1.0;
    double entropy = 0, uniformity = 0;
    for (int l = 1; l <= gray_levels; ++l) {
        const double p = hist[static_cast<std::size_t>(l)] / n;
        entropy -= p * log2_safe(p);
        uniformity += p * p;
    }

    const double skew = m2 > 1e-24 ? m3 / std::pow(m2, 1.5) : 0.0;
    const double kurt = m2 > 1e-24 ? m4 / (m2 * m2) : 0.0;

    // Alphabetical within the family; see docs/radiomics_features.md.
    out.push_back(static_cast<float>(p10));                        // 10Percentile
    out.push_back(static_cast<float>(p90));                        // 90Percentile
    out.push_back(static_cast<float>(energy));                     // Energy
    out.push_back(static_cast<float>(entropy));                    // Entropy
    out.push_back(static_cast<float>(p75 - p25));                  // InterquartileRange
    out.push_back(static_cast<float>(kurt));                       // Kurtosis
    out.push_back(static_cast<float>(sorted.back()));              // Maximum
    out.push_back(static_cast<float>(mad));                        // MeanAbsoluteDeviation
    out.push_back(static_cast<float>(mean));                       // Mean
    out.push_back(static_cast<float>(percentile(sorted, 50.0)));   // Median
    out.push_back(static_cast<float>(sorted.front()));             // Minimum
    out.push_back(static_cast<float>(sorted.back() - sorted.front())); // Range
    out.push_back(static_cast<float>(rmad));                       // RobustMeanAbsoluteDeviation
    out.push_back(static_cast<float>(std::sqrt(energy / n)));      // RootMeanSquared
    out.push_back(static_cast<float>(skew));                       // Skewness
    out.push_back(static_cast<float>(std::sqrt(m2)));              // StandardDeviation
    out.push_back(static_cast<float>(pixel_area * energy));        // TotalEnergy
    out.push_back(static_cast<float>(uniformity));                 // Uniformity
    out.push_back(static_cast<float>(m2));                         // Variance
}

// ------------------------------------------------------------------- shape 2D

struct MeshResult {
    double area = 0.0;
    double perimeter = 0.0;
    double max_diameter = 0.0;
};

// Marching squares at iso level 0.5 on the padded mask. Segments are oriented
// with the inside on the left, so the signed shoelace sum handles holes.
MeshResult mesh_2d(const Roi& roi) {
    const auto m = [&](int y, int x) -> int {
        if (y < 0 || y >= roi.height || x < 0 || x >= roi.width) return 0;
        return roi.mask[static_cast<std::size_t>(y) * roi.width + x] ? 1 : 0;
    };
    struct Pt {
        double x, y;
    };
    const double sy = roi.spacing_y, sx = roi.spacing_x;
    std::vector<std::pair<Pt, Pt>> segments;
    for (int i = -1; i < roi.height; ++i)
        for (int j = -1; j < roi.width; ++j) {
            const int tl = m(i, j), tr = m(i, j + 1), br = m(i + 1, j + 1), bl = m(i + 1, j);
            const int c = tl | (tr << 1) | (br << 2) | (bl << 3);
            if (c == 0 || c == 15) continue;
            const double x = j, y = i;
            const Pt T{(x + 0.5) * sx, y * sy}, R{(x + 1.0) * sx, (y + 0.5) * sy};
            const Pt B{(x + 0.5) * sx, (y + 1.0) * sy}, L{x * sx, (y + 0.5) * sy};
            auto add = [&](Pt a, Pt b) { segments.emplace_back(a, b); };
            switch (c) {
                case 1: add(L, T); break;
                case 2: add(T, R); break;
                case 3: add(L, R); break;
                case 4: add(R, B); break;
                case 5: add(L, T); add(R, B); break;
                case 6: add(T, B); break;
                case 7: add(L, B); break;
                case 8: add(B, L); break;
                case 9: add(B, T); break;
                case 10: add(T, R); add(B, L); break;
                case 11: add(B, R); break;
                case 12: add(R, L); break;
                case 13: add(R, T); break;
                case 14: add(T, L); break;
                default: break;
            }
        }

    MeshResult res;
    double signed_area = 0.0;
    std::vector<Pt> vertices;
    for (const auto& [a, b] : segments) {
        signed_area += 0.5 * (a.x * b.y - b.x * a.y);
        res.perimeter += std::hypot(b.x - a.x, b.y - a.y);
        vertices.push_back(a);
        vertices.push_back(b);
    }
    res.area = std::abs(signed_area);
    for (std::size_t a = 0; a < vertices.size(); ++a)
        for (std::size_t b = a + 1; b < vertices.size(); ++b)
            res.max_diameter = std::max(
                res.max_diameter, std::hypot(vertices[a].x - vertices[b].x, vertices[a].y - vertices[b].y));
    return res;
}

void shape_2d_features(const Roi& roi, std::vector<float>& out) {
    const MeshResult mesh = mesh_2d(roi);
    const double pixel_area = roi.spacing_y * roi.spacing_x;
    const std::int64_t np = roi.mask_count();

    // Principal axes of the physical pixel-center coordinates.
    double my = 0, mx = 0;
    for (int y = 0; y < roi.height; ++y)
        for (int x = 0; x < roi.width; ++x)
            if (roi.mask[static_cast<std::size_t>(y) * roi.width + x]) {
                my += y * roi.spacing_y;
                mx += x * roi.spacing_x;
            }
    my /= static_cast<double>(np);
    mx /= static_cast<double>(np);
    double cyy = 0, cxx = 0, cyx = 0;
    for (int y = 0; y < roi.height; ++y)
        for (int x = 0; x < roi.width; ++x)
            if (roi.mask[static_cast<std::size_t>(y) * roi.width + x]) {
                const double dy = y * roi.spacing_y - my, dx = x * roi.spacing_x - mx;
                cyy += dy * dy;
                cxx += dx * dx;
                cyx += dy * dx;
            }
    cyy /= static_cast<double>(np);
    cxx /= static_cast<double>(np);
    cyx /= static_cast<double>(np);
    const double tr = cyy + cxx;
    const double det = cyy * cxx - cyx * cyx;
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    const double l1 = std::max(0.0, tr / 2.0 + disc);
    const double l2 = std::max(0.0, tr / 2.0 - disc);

    const double sphericity = mesh.perimeter > 0.0
                                  ? 2.0 * std::sqrt(3.14159265358979323846 * mesh.area) / mesh.perimeter
                                  : 0.0;

    out.push_back(static_cast<float>(l1 > 0.0 ? std::sqrt(l2 / l1) : 0.0)); // Elongation
    out.push_back(static_cast<float>(4.0 * std::sqrt(l1)));                 // MajorAxisLength
    out.push_back(static_cast<float>(mesh.max_diameter));                   // MaximumDiameter
    out.push_back(static_cast<float>(mesh.area));                           // MeshSurface
    out.push_back(static_cast<float>(4.0 * std::sqrt(l2)));                 // MinorAxisLength
    out.push_back(static_cast<float>(mesh.perimeter));                      // Perimeter
    out.push_back(static_cast<float>(mesh.area > 0.0 ? mesh.perimeter / mesh.area : 0.0)); // PerimeterSurfaceRatio
    out.push_back(static_cast<float>(static_cast<double>(np) * pixel_area)); // PixelSurface
    out.push_back(static_cast<float>(sphericity > 0.0 ? 1.0 / sphericity : 0.0)); // SphericalDisproportion
    out.push_back(static_cast<float>(sphericity));                          // Sphericity
}

// ---------------------------------------------------------------------- GLCM

constexpr std::array<std::array<int, 2>, 4> kDirections = {{{0, 1}, {1, 0}, {1, 1}, {1, -1}}};

void glcm_features(const std::vector<int>& img, const Roi& roi, int G, std::vector<float>& out) {
    const auto level = [&](int y, int x) -> int {
        if (y < 0 || y >= roi.height || x < 0 || x >= roi.width) return 0;
        return img[static_cast<std::size_t>(y) * roi.width + x];
    };

    // Symmetric co-occurrence matrices averaged over directions with pairs.
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(G + 1, G + 1);
    int used_dirs = 0;
    for (const auto& d : kDirections) {
        Eigen::MatrixXd c = Eigen::MatrixXd::Zero(G + 1, G + 1);
        double pairs = 0;
        for (int y = 0; y < roi.height; ++y)
            for (int x = 0; x < roi.width; ++x) {
                const int a = level(y, x);
                if (a == 0) continue;
                const int b = level(y + d[0], x + d[1]);
                if (b == 0) continue;
                c(a, b) += 1.0;
                c(b, a) += 1.0;
                pairs += 2.0;
            }
        if (pairs > 0) {
            p += c / pairs;
            ++used_dirs;
        }
    }
    if (used_dirs == 0) {
        for (int k = 0; k < 24; ++k) out.push_back(0.0f);
        return;
    }
    p /= static_cast<double>(used_dirs);

    Eigen::VectorXd px = p.rowwise().sum();
    std::vector<int> present;
    for (int i = 1; i <= G; ++i)
        if (px(i) > 0.0) present.push_back(i);
    const int ng = static_cast<int>(present.size());

    double mu = 0;
    for (int i = 1; i <= G; ++i) mu += i * px(i);
    double sigma2 = 0;
    for (int i = 1; i <= G; ++i) sigma2 += (i - mu) * (i - mu) * px(i);

    std::vector<double> pxy_sum(static_cast<std::size_t>(2 * G + 1), 0.0);
    std::vector<double> pxy_diff(static_cast<std::size_t>(G), 0.0);
    double autocorr = 0, prom = 0, shade = 0, tend = 0, contrast = 0, corr_num = 0;
    double joint_energy = 0, hxy = 0, hxy1 = 0, max_p = 0;
    for (int i = 1; i <= G; ++i)
        for (int j = 1; j <= G; ++j) {
            const double v = p(i, j);
            if (v <= 0.0) continue;
            autocorr += i * j * v;
            const double s = i + j - 2.0 * mu;
            prom += s * s * s * s * v;
            shade += s * s * s * v;
            tend += s * s * v;
            contrast += (i - j) * (i - j) * v;
            corr_num += (i - mu) * (j - mu) * v;
            joint_energy += v * v;
            hxy -= v * log2_safe(v);
            hxy1 -= v * log2_safe(px(i) * px(j));
            max_p = std::max(max_p, v);
            pxy_sum[static_cast<std::size_t>(i + j)] += v;
            pxy_diff[static_cast<std::size_t>(std::abs(i - j))] += v;
        }

    double hx = 0, hxy2 = 0;
    for (int i = 1; i <= G; ++i) {
        hx -= px(i) * log2_safe(px(i));
        for (int j = 1; j <= G; ++j) {
            const double q = px(i) * px(j);
            hxy2 -= q * log2_safe(q);
        }
    }

    double diff_avg = 0, diff_ent = 0, id = 0, idm = 0, idmn = 0, idn = 0, inv_var = 0;
    for (int k = 0; k < G; ++k) {
        const double v = pxy_diff[static_cast<std::size_t>(k)];
        if (v <= 0.0) continue;
        diff_avg += k * v;
        diff_ent -= v * log2_safe(v);
        id += v / (1.0 + k);
        idm += v / (1.0 + static_cast<double>(k) * k);
        idmn += v / (1.0 + static_cast<double>(k) * k / (static_cast<double>(G) * G));
        idn += v / (1.0 + static_cast<double>(k) / G);
        if (k >= 1) inv_var += v / (static_cast<double>(k) * k);
    }
    double diff_var = 0;
    for (int k = 0; k < G; ++k)
        diff_var += (k - diff_avg) * (k - diff_avg) * pxy_diff[static_cast<std::size_t>(k)];

    double sum_avg = 0, sum_ent = 0;
    for (int k = 2; k <= 2 * G; ++k) {
        const double v = pxy_sum[static_cast<std::size_t>(k)];
        if (v <= 0.0) continue;
        sum_avg += k * v;
        sum_ent -= v * log2_safe(v);
    }

    const double correlation = sigma2 > 1e-24 ? corr_num / sigma2 : 1.0;
    const double imc1 = hx > 0.0 ? (hxy - hxy1) / hx : 0.0;
    const double imc2 = hxy2 >= hxy ? std::sqrt(1.0 - std::exp(-2.0 * (hxy2 - hxy))) : 0.0;

    double mcc = 1.0;
    if (ng >= 2) {
        Eigen::MatrixXd q = Eigen::MatrixXd::Zero(ng, ng);
        for (int a = 0; a < ng; ++a)
            for (int b = 0; b < ng; ++b) {
                double acc = 0;
                for (int c = 0; c < ng; ++c)
                    acc += p(present[static_cast<std::size_t>(a)], present[static_cast<std::size_t>(c)]) *
                           p(present[static_cast<std::size_t>(b)], present[static_cast<std::size_t>(c)]) /
                           (px(present[static_cast<std::size_t>(a)]) * px(present[static_cast<std::size_t>(c)]));
                q(a, b) = acc;
            }
        Eigen::EigenSolver<Eigen::MatrixXd> eig(q, false);
        std::vector<double> ev;
        for (int i = 0; i < ng; ++i) ev.push_back(eig.eigenvalues()[i].real());
        std::sort(ev.begin(), ev.end(), std::greater<double>());
        mcc = std::sqrt(std::max(0.0, ev[1]));
    }

    out.push_back(static_cast<float>(autocorr));      // Autocorrelation
    out.push_back(static_cast<float>(prom));          // ClusterProminence
    out.push_back(static_cast<float>(shade));         // ClusterShade
    out.push_back(static_cast<float>(tend));          // ClusterTendency
    out.push_back(static_cast<float>(contrast));      // Contrast
    out.push_back(static_cast<float>(correlation));   // Correlation
    out.push_back(static_cast<float>(diff_avg));      // DifferenceAverage
    out.push_back(static_cast<float>(diff_ent));      // DifferenceEntropy
    out.push_back(static_cast<float>(diff_var));      // DifferenceVariance
    out.push_back(static_cast<float>(id));            // Id
    out.push_back(static_cast<float>(idm));           // Idm
    out.push_back(static_cast<float>(idmn));          // Idmn
    out.push_back(static_cast<float>(idn));           // Idn
    out.push_back(static_cast<float>(imc1));          // Imc1
    out.push_back(static_cast<float>(imc2));          // Imc2
    out.push_back(static_cast<float>(inv_var));       // InverseVariance
    out.push_back(static_cast<float>(mu));            // JointAverage
    out.push_back(static_cast<float>(joint_energy));  // JointEnergy
    out.push_back(static_cast<float>(hxy));           // JointEntropy
    out.push_back(static_cast<float>(mcc));           // MCC
    out.push_back(static_cast<float>(max_p));         // MaximumProbability
    out.push_back(static_cast<float>(sum_avg));       // SumAverage
    out.push_back(static_cast<float>(sum_ent));       // SumEntropy
    out.push_back(static_cast<float>(sigma2));        // SumSquares
}

// --------------------------------------------------------------------- GLRLM

void glrlm_features(const std::vector<int>& img, const Roi& roi, int G, std::int64_t np,
                    std::vector<float>& out) {
    const auto level = [&](int y, int x) -> int {
        if (y < 0 || y >= roi.height || x < 0 || x >= roi.width) return 0;
        return img[static_cast<std::size_t>(y) * roi.width + x];
    };

    // Run-length matrix summed over the four directions.
    const int max_len = std::max(roi.height, roi.width) + 1;
    std::vector<double> r(static_cast<std::size_t>(G + 1) * (max_len + 1), 0.0);
    auto R = [&](int i, int l) -> double& { return r[static_cast<std::size_t>(i) * (max_len + 1) + l]; };

    for (const auto& d : kDirections) {
        for (int y = 0; y < roi.height; ++y)
            for (int x = 0; x < roi.width; ++x) {
                const int v = level(y, x);
                if (v == 0) continue;
                if (level(y - d[0], x - d[1]) == v) continue; // not a run start
                int len = 1;
                int yy = y + d[0], xx = x + d[1];
                while (level(yy, xx) == v) {
                    ++len;
                    yy += d[0];
                    xx += d[1];
                }
                R(v, std::min(len, max_len)) += 1.0;
            }
    }

    double nr = 0;
    for (double v : r) nr += v;
    if (nr <= 0) {
        for (int k = 0; k < 16; ++k) out.push_back(0.0f);
        return;
    }

    double sre = 0, lre = 0, gln = 0, rln = 0, lgl = 0, hgl = 0;
    double srlgl = 0, srhgl = 0, lrlgl = 0, lrhgl = 0;
    double mu_i = 0, mu_l = 0, entropy = 0;
    std::vector<double> row_sum(static_cast<std::size_t>(G + 1), 0.0), col_sum(static_cast<std::size_t>(max_len + 1), 0.0);
    for (int i = 1; i <= G; ++i)
        for (int l = 1; l <= max_len; ++l) {
            const double v = R(i, l);
            if (v <= 0) continue;
            row_sum[static_cast<std::size_t>(i)] += v;
            col_sum[static_cast<std::size_t>(l)] += v;
            const double p = v / nr;
            const double i2 = static_cast<double>(i) * i, l2 = static_cast<double>(l) * l;
            sre += v / l2;
            lre += v * l2;
            lgl += v / i2;
            hgl += v * i2;
            srlgl += v / (i2 * l2);
            srhgl += v * i2 / l2;
            lrlgl += v * l2 / i2;
            lrhgl += v * i2 * l2;
            mu_i += p * i;
            mu_l += p * l;
            entropy -= p * log2_safe(p);
        }
    for (double v : row_sum) gln += v * v;
    for (double v : col_sum) rln += v * v;

    double glv = 0, rv = 0;
    for (int i = 1; i <= G; ++i)
        for (int l = 1; l <= max_len; ++l) {
            const double p = R(i, l) / nr;
            if (p <= 0) continue;
            glv += p * (i - mu_i) * (i - mu_i);
            rv += p * (l - mu_l) * (l - mu_l);
        }

    out.push_back(static_cast<float>(gln / nr));            // GrayLevelNonUniformity
    out.push_back(static_cast<float>(gln / (nr * nr)));     // GrayLevelNonUniformityNormalized
    out.push_back(static_cast<float>(glv));                 // GrayLevelVariance
    out.push_back(static_cast<float>(hgl / nr));            // HighGrayLevelRunEmphasis
    out.push_back(static_cast<float>(lre / nr));            // LongRunEmphasis
    out.push_back(static_cast<float>(lrhgl / nr));          // LongRunHighGrayLevelEmphasis
    out.push_back(static_cast<float>(lrlgl / nr));          // LongRunLowGrayLevelEmphasis
    out.push_back(static_cast<float>(lgl / nr));            // LowGrayLevelRunEmphasis
    out.push_back(static_cast<float>(entropy));             // RunEntropy
    out.push_back(static_cast<float>(rln / nr));            // RunLengthNonUniformity
    out.push_back(static_cast<float>(rln / (nr * nr)));     // RunLengthNonUniformityNormalized
    out.push_back(static_cast<float>(nr / (4.0 * static_cast<double>(np)))); // RunPercentage
    out.push_back(static_cast<float>(rv));                  // RunVariance
    out.push_back(static_cast<float>(sre / nr));            // ShortRunEmphasis
    out.push_back(static_cast<float>(srhgl / nr));          // ShortRunHighGrayLevelEmphasis
    out.push_back(static_cast<float>(srlgl / nr));          // ShortRunLowGrayLevelEmphasis
}

// --------------------------------------------------------------------- GLSZM

void glszm_features(const std::vector<int>& img, const Roi& roi, int G, std::int64_t np,
                    std::vector<float>& out) {
    // Zones: 8-connected components of equal gray level.
    std::vector<std::uint8_t> seen(img.size(), 0);
    std::map<std::pair<int, int>, double> zones; // (level, size) -> count
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < roi.height; ++y)
        for (int x = 0; x < roi.width; ++x) {
            const std::size_t id = static_cast<std::size_t>(y) * roi.width + x;
            if (seen[id] || img[id] == 0) continue;
            const int v = img[id];
            int size = 0;
            stack.clear();
            stack.emplace_back(y, x);
            seen[id] = 1;
            while (!stack.empty()) {
                auto [cy, cx] = stack.back();
                stack.pop_back();
                ++size;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dy == 0 && dx == 0) continue;
                        const int ny = cy + dy, nx = cx + dx;
                        if (ny < 0 || ny >= roi.height || nx < 0 || nx >= roi.width) continue;
                        const std::size_t nid = static_cast<std::size_t>(ny) * roi.width + nx;
                        if (seen[nid] || img[nid] != v) continue;
                        seen[nid] = 1;
                        stack.emplace_back(ny, nx);
                    }
            }
            zones[{v, size}] += 1.0;
        }

    double nz = 0;
    for (const auto& [key, c] : zones) nz += c;
    if (nz <= 0) {
        for (int k = 0; k < 16; ++k) out.push_back(0.0f);
        return;
    }

    std::map<int, double> by_level, by_size;
    double sae = 0, lae = 0, lgl = 0, hgl = 0, salgl = 0, sahgl = 0, lahgl = 0, lalgl = 0;
    double mu_i = 0, mu_s = 0, entropy = 0;
    for (const auto& [key, c] : zones) {
        const auto [i, s] = key;
        const double i2 = static_cast<double>(i) * i, s2 = static_cast<double>(s) * s;
        by_level[i] += c;
        by_size[s] += c;
        const double p = c / nz;
        sae += c / s2;
        lae += c * s2;
        lgl += c / i2;
        hgl += c * i2;
        salgl += c / (i2 * s2);
        sahgl += c * i2 / s2;
        lahgl += c * i2 * s2;
        lalgl += c * s2 / i2;
        mu_i += p * i;
        mu_s += p * s;
        entropy -= p * log2_safe(p);
    }
    double gln = 0, szn = 0;
    for (const auto& [i, c] : by_level) gln += c * c;
    for (const auto& [s, c] : by_size) szn += c * c;
    double glv = 0, zv = 0;
    for (const auto& [key, c] : zones) {
        const auto [i, s] = key;
        const double p = c / nz;
        glv += p * (i - mu_i) * (i - mu_i);
        zv += p * (s - mu_s) * (s - mu_s);
    }

    out.push_back(static_cast<float>(gln / nz));        // GrayLevelNonUniformity
    out.push_back(static_cast<float>(gln / (nz * nz))); // GrayLevelNonUniformityNormalized
    out.push_back(static_cast<float>(glv));             // GrayLevelVariance
    out.push_back(static_cast<float>(hgl / nz));        // HighGrayLevelZoneEmphasis
    out.push_back(static_cast<float>(lae / nz));        // LargeAreaEmphasis
    out.push_back(static_cast<float>(lahgl / nz));      // LargeAreaHighGrayLevelEmphasis
    out.push_back(static_cast<float>(lalgl / nz));      // LargeAreaLowGrayLevelEmphasis
    out.push_back(static_cast<float>(lgl / nz));        // LowGrayLevelZoneEmphasis
    out.push_back(static_cast<float>(szn / nz));        // SizeZoneNonUniformity
    out.push_back(static_cast<float>(szn / (nz * nz))); // SizeZoneNonUniformityNormalized
    out.push_back(static_cast<float>(sae / nz));        // SmallAreaEmphasis
    out.push_back(static_cast<float>(sahgl / nz));      // SmallAreaHighGrayLevelEmphasis
    out.push_back(static_cast<float>(salgl / nz));      // SmallAreaLowGrayLevelEmphasis
    out.push_back(static_cast<float>(entropy));         // ZoneEntropy
    out.push_back(static_cast<float>(nz / static_cast<double>(np))); // ZonePercentage
    out.push_back(static_cast<float>(zv));              // ZoneVariance
}

// --------------------------------------------------------------------- NGTDM

void ngtdm_features(const std::vector<int>& img, const Roi& roi, int G, std::vector<float>& out) {
    const auto level = [&](int y, int x) -> int {
        if (y < 0 || y >= roi.height || x < 0 || x >= roi.width) return 0;
        return img[static_cast<std::size_t>(y) * roi.width + x];
    };

    std::vector<double> s(static_cast<std::size_t>(G + 1), 0.0);
    std::vector<double> n(static_cast<std::size_t>(G + 1), 0.0);
    for (int y = 0; y < roi.height; ++y)
        for (int x = 0; x < roi.width; ++x) {
            const int v = level(y, x);
            if (v == 0) continue;
            double sum = 0;
            int cnt = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    const int u = level(y + dy, x + dx);
                    if (u == 0) continue;
                    sum += u;
                    ++cnt;
                }
            if (cnt == 0) continue;
            s[static_cast<std::size_t>(v)] += std::abs(v - sum / cnt);
            n[static_cast<std::size_t>(v)] += 1.0;
        }

    double nvp = 0, s_total = 0;
    int ngp = 0;
    for (int i = 1; i <= G; ++i) {
        nvp += n[static_cast<std::size_t>(i)];
        s_total += s[static_cast<std::size_t>(i)];
        if (n[static_cast<std::size_t>(i)] > 0) ++ngp;
    }
    if (nvp <= 0) {
        for (int k = 0; k < 5; ++k) out.push_back(0.0f);
        return;
    }

    std::vector<double> p(static_cast<std::size_t>(G + 1), 0.0);
    for (int i = 1; i <= G; ++i) p[static_cast<std::size_t>(i)] = n[static_cast<std::size_t>(i)] / nvp;

    double coars_den = 0;
    for (int i = 1; i <= G; ++i) coars_den += p[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(i)];
    const double coarseness = coars_den > 1e-24 ? 1.0 / coars_den : 1e6;

    double contrast = 0;
    if (ngp > 1) {
        double acc = 0;
        for (int i = 1; i <= G; ++i)
            for (int j = 1; j <= G; ++j)
                if (p[static_cast<std::size_t>(i)] > 0 && p[static_cast<std::size_t>(j)] > 0)
                    acc += p[static_cast<std::size_t>(i)] * p[static_cast<std::size_t>(j)] * (i - j) * (i - j);
        contrast = acc / (static_cast<double>(ngp) * (ngp - 1)) * (s_total / nvp);
    }

    double busy_den = 0, complexity = 0, strength_num = 0;
    for (int i = 1; i <= G; ++i) {
        if (p[static_cast<std::size_t>(i)] <= 0) continue;
        for (int j = 1; j <= G; ++j) {
            if (p[static_cast<std::size_t>(j)] <= 0) continue;
            busy_den += std::abs(i * p[static_cast<std::size_t>(i)] - j * p[static_cast<std::size_t>(j)]);
            complexity += std::abs(i - j) *
                          (p[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(i)] + p[static_cast<std::size_t>(j)] * s[static_cast<std::size_t>(j)]) /
                          (p[static_cast<std::size_t>(i)] + p[static_cast<std::size_t>(j)]);
            strength_num += (p[static_cast<std::size_t>(i)] + p[static_cast<std::size_t>(j)]) * (i - j) * (i - j);
        }
    }
    complexity /= nvp;
    const double busyness = busy_den > 1e-24 ? coars_den / busy_den : 0.0;
    const double strength = s_total > 1e-24 ? strength_num / s_total : 0.0;

    out.push_back(static_cast<float>(busyness));   // Busyness
    out.push_back(static_cast<float>(coarseness)); // Coarseness
    out.push_back(static_cast<float>(complexity)); // Complexity
    out.push_back(static_cast<float>(contrast));   // Contrast
    out.push_back(static_cast<float>(strength));   // Strength
}

// ---------------------------------------------------------------------- GLDM

void gldm_features(const std::vector<int>& img, const Roi& roi, int G, std::vector<float>& out) {
    const auto level = [&](int y, int x) -> int {
        if (y < 0 || y >= roi.height || x < 0 || x >= roi.width) return 0;
        return img[static_cast<std::size_t>(y) * roi.width + x];
    };

    // Dependence j = 1 + number of 8-neighbors with an equal level.
    const int max_dep = 10;
    std::vector<double> dmat(static_cast<std::size_t>(G + 1) * max_dep, 0.0);
    auto D = [&](int i, int j) -> double& { return dmat[static_cast<std::size_t>(i) * max_dep + j]; };
    double nz = 0;
    for (int y = 0; y < roi.height; ++y)
        for (int x = 0; x < roi.width; ++x) {
            const int v = level(y, x);
            if (v == 0) continue;
            int dep = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    if (level(y + dy, x + dx) == v) ++dep;
                }
            D(v, dep + 1) += 1.0;
            nz += 1.0;
        }
    if (nz <= 0) {
        for (int k = 0; k < 14; ++k) out.push_back(0.0f);
        return;
    }

    double sde = 0, lde = 0, gln = 0, dn = 0, lgl = 0, hgl = 0;
    double sdlgl = 0, sdhgl = 0, ldlgl = 0, ldhgl = 0;
    double mu_i = 0, mu_j = 0, entropy = 0;
    std::vector<double> row_sum(static_cast<std::size_t>(G + 1), 0.0), col_sum(static_cast<std::size_t>(max_dep), 0.0);
    for (int i = 1; i <= G; ++i)
        for (int j = 1; j < max_dep; ++j) {
            const double v = D(i, j);
            if (v <= 0) continue;
            row_sum[static_cast<std::size_t>(i)] += v;
            col_sum[static_cast<std::size_t>(j)] += v;
            const double p = v / nz;
            const double i2 = static_cast<double>(i) * i, j2 = static_cast<double>(j) * j;
            sde += v / j2;
            lde += v * j2;
            lgl += v / i2;
            hgl += v * i2;
            sdlgl += v / (i2 * j2);
            sdhgl += v * i2 / j2;
            ldlgl += v * j2 / i2;
            ldhgl += v * i2 * j2;
            mu_i += p * i;
            mu_j += p * j;
            entropy -= p * log2_safe(p);
        }
    for (double v : row_sum) gln += v * v;
    for (double v : col_sum) dn += v * v;
    double glv = 0, dv = 0;
    for (int i = 1; i <= G; ++i)
        for (int j = 1; j < max_dep; ++j) {
            const double p = D(i, j) / nz;
            if (p <= 0) continue;
            glv += p * (i - mu_i) * (i - mu_i);
            dv += p * (j - mu_j) * (j - mu_j);
        }

    out.push_back(static_cast<float>(entropy));         // DependenceEntropy
    out.push_back(static_cast<float>(dn / nz));         // DependenceNonUniformity
    out.push_back(static_cast<float>(dn / (nz * nz)));  // DependenceNonUniformityNormalized
    out.push_back(static_cast<float>(dv));              // DependenceVariance
    out.push_back(static_cast<float>(gln / nz));        // GrayLevelNonUniformity
    out.push_back(static_cast<float>(glv));             // GrayLevelVariance
    out.push_back(static_cast<float>(hgl / nz));        // HighGrayLevelEmphasis
    out.push_back(static_cast<float>(lde / nz));        // LargeDependenceEmphasis
    out.push_back(static_cast<float>(ldhgl / nz));      // LargeDependenceHighGrayLevelEmphasis
    out.push_back(static_cast<float>(ldlgl / nz));      // LargeDependenceLowGrayLevelEmphasis
    out.push_back(static_cast<float>(lgl / nz));        // LowGrayLevelEmphasis
    out.push_back(static_cast<float>(sde / nz));        // SmallDependenceEmphasis
    out.push_back(static_cast<float>(sdhgl / nz));      // SmallDependenceHighGrayLevelEmphasis
    out.push_back(static_cast<float>(sdlgl / nz));      // SmallDependenceLowGrayLevelEmphasis
}

const char* kFamilyPrefix[7] = {"firstorder", "shape2D", "glcm", "glrlm", "glszm", "ngtdm", "gldm"};

const char* kFeatureShortNames[kRadiomicsFeatureCount] = {
    // first order (19)
    "10Percentile", "90Percentile", "Energy", "Entropy", "InterquartileRange", "Kurtosis",
    "Maximum", "MeanAbsoluteDeviation", "Mean", "Median", "Minimum", "Range",
    "RobustMeanAbsoluteDeviation", "RootMeanSquared", "Skewness", "StandardDeviation",
    "TotalEnergy", "Uniformity", "Variance",
    // shape 2D (10)
    "Elongation", "MajorAxisLength", "MaximumDiameter", "MeshSurface", "MinorAxisLength",
    "Perimeter", "PerimeterSurfaceRatio", "PixelSurface", "SphericalDisproportion", "Sphericity",
    // GLCM (24)
    "Autocorrelation", "ClusterProminence", "ClusterShade", "ClusterTendency", "Contrast",
    "Correlation", "DifferenceAverage", "DifferenceEntropy", "DifferenceVariance", "Id", "Idm",
    "Idmn", "Idn", "Imc1", "Imc2", "InverseVariance", "JointAverage", "JointEnergy",
    "JointEntropy", "MCC", "MaximumProbability", "SumAverage", "SumEntropy", "SumSquares",
    // GLRLM (16)
    "GrayLevelNonUniformity", "GrayLevelNonUniformityNormalized", "GrayLevelVariance",
    "HighGrayLevelRunEmphasis", "LongRunEmphasis", "LongRunHighGrayLevelEmphasis",
    "LongRunLowGrayLevelEmphasis", "LowGrayLevelRunEmphasis", "RunEntropy",
    "RunLengthNonUniformity", "RunLengthNonUniformityNormalized", "RunPercentage", "RunVariance",
    "ShortRunEmphasis", "ShortRunHighGrayLevelEmphasis", "ShortRunLowGrayLevelEmphasis",
    // GLSZM (16)
    "GrayLevelNonUniformity", "GrayLevelNonUniformityNormalized", "GrayLevelVariance",
    "HighGrayLevelZoneEmphasis", "LargeAreaEmphasis", "LargeAreaHighGrayLevelEmphasis",
    "LargeAreaLowGrayLevelEmphasis", "LowGrayLevelZoneEmphasis", "SizeZoneNonUniformity",
    "SizeZoneNonUniformityNormalized", "SmallAreaEmphasis", "SmallAreaHighGrayLevelEmphasis",
    "SmallAreaLowGrayLevelEmphasis", "ZoneEntropy", "ZonePercentage", "ZoneVariance",
    // NGTDM (5)
    "Busyness", "Coarseness", "Complexity", "Contrast", "Strength",
    // GLDM (14)
    "DependenceEntropy", "DependenceNonUniformity", "DependenceNonUniformityNormalized",
    "DependenceVariance", "GrayLevelNonUniformity", "GrayLevelVariance", "HighGrayLevelEmphasis",
    "LargeDependenceEmphasis", "LargeDependenceHighGrayLevelEmphasis",
    "LargeDependenceLowGrayLevelEmphasis", "LowGrayLevelEmphasis", "SmallDependenceEmphasis",
    "SmallDependenceHighGrayLevelEmphasis", "SmallDependenceLowGrayLevelEmphasis"};

} // namespace

const std::vector<std::string>& radiomics_feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        const auto sizes = radiomics_family_sizes();
        int k = 0;
        for (int f = 0; f < 7; ++f)
            for (int i = 0; i < sizes[static_cast<std::size_t>(f)]; ++i, ++k)
                v.push_back(std::string(kFamilyPrefix[f]) + "_" + kFeatureShortNames[k]);
        return v;
    }();
    return names;
}

std::vector<float> extract_radiomics(const Roi& roi, int sequence, const RadiomicsConfig& config) {
    roi.validate();
    config.validate();
    if (sequence < 0 || sequence > 2) throw ConfigError("sequence must be 0, 1 or 2");
    const std::vector<float>& crop = roi.crops[static_cast<std::size_t>(sequence)];
    const int G = config.gray_levels;

    // Raw in-mask values plus the quantized level image (0 outside mask).
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(roi.mask_count()));
    float mn = 0, mx = 0;
    bool first = true;
    for (std::size_t i = 0; i < roi.mask.size(); ++i)
        if (roi.mask[i]) {
            const float v = crop[i];
            if (first) {
                mn = mx = v;
                first = false;
            }
            mn = std::min(mn, v);
            mx = std::max(mx, v);
            values.push_back(v);
        }
    std::vector<int> img(roi.mask.size(), 0);
    const double span = static_cast<double>(mx) - mn;
    for (std::size_t i = 0; i < roi.mask.size(); ++i)
        if (roi.mask[i]) {
            int l = span > 0.0
                        ? 1 + static_cast<int>((static_cast<double>(crop[i]) - mn) / span * G)
                        : 1;
            img[i] = std::clamp(l, 1, G);
        }
    std::vector<int> levels;
    levels.reserve(values.size());
    for (std::size_t i = 0; i < roi.mask.size(); ++i)
        if (roi.mask[i]) levels.push_back(img[i]);

    std::vector<float> out;
    out.reserve(kRadiomicsFeatureCount);
    first_order_features(values, levels, G, roi.spacing_y * roi.spacing_x, out);
    shape_2d_features(roi, out);
    glcm_features(img, roi, G, out);
    glrlm_features(img, roi, G, roi.mask_count(), out);
    glszm_features(img, roi, G, roi.mask_count(), out);
    ngtdm_features(img, roi, G, out);
    gldm_features(img, roi, G, out);

    if (static_cast<int>(out.size()) != kRadiomicsFeatureCount)
        throw Error("radiomics feature count mismatch");
    for (float& v : out)
        if (!std::isfinite(v)) v = 0.0f;
    return out;
}

std::vector<float> radhop_roi_feature(const Roi& roi, const Study& study,
                                      const std::array<RadHopModel, 3>& models,
                                      const std::array<DftSelection, 3>& selections,
                                      bool* shifted) {
    const int S = models[0].config.patch_size;
    const int H = study.t2.dims[1], W = study.t2.dims[2];
    if (S > H || S > W) throw ConfigError("patch size exceeds study dims");

    const int cy = static_cast<int>(std::lround(roi.center_of_mass[0]));
    const int cx = static_cast<int>(std::lround(roi.center_of_mass[1]));
    int y0 = cy - S / 2, x0 = cx - S / 2;
    const int y0c = std::clamp(y0, 0, H - S), x0c = std::clamp(x0, 0, W - S);
    if (shifted) *shifted = (y0c != y0) || (x0c != x0);

    Patch p = crop_patch(study, roi.slice, y0c, x0c, S);
    std::array<std::vector<float>, 3> selected;
    for (int s = 0; s < 3; ++s) {
        auto feat = radhop_transform(models[static_cast<std::size_t>(s)], p.pixels[static_cast<std::size_t>(s)]);
        selected[static_cast<std::size_t>(s)] = selections[static_cast<std::size_t>(s)].apply(feat);
    }
    return fuse_sequences(selected[0], selected[1], selected[2],
                          {&selections[0], &selections[1], &selections[2]});
}

} // namespace radhop

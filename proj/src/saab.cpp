#include "radhop/saab.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace radhop {

namespace {

// Largest-magnitude component made positive, ties broken by lowest index.
void fix_sign(Eigen::VectorXd& v) {
    int best = 0;
    double mag = -1.0;
    for (int i = 0; i < v.size(); ++i) {
        double a = std::abs(v[i]);
        if (a > mag + 1e-15) {
            mag = a;
            best = i;
        }
    }
    if (v[best] < 0.0) v = -v;
}

} // namespace

SaabKernel fit_saab(const float* samples, std::int64_t n, int filter_size,
                    double energy_threshold) {
    const int d = filter_size * filter_size;
    if (n < d) throw InsufficientData("fit_saab needs at least F*F samples");
    if (energy_threshold < 0.0) throw ConfigError("energy_threshold must be >= 0");

    Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(
        samples, n, d);
    Eigen::MatrixXd Xd = X.cast<double>();

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    // DC coefficients and AC residuals: x_AC = x - x_DC with x_DC constant
    // across components of one sample.
    Eigen::VectorXd dc = Xd.rowwise().sum() * inv_sqrt_d; // a0 . x per sample
    Eigen::VectorXd dc_component = dc * inv_sqrt_d;       // value repeated in x_DC
    Eigen::MatrixXd ac = Xd;
    ac.colwise() -= dc_component;

    const double dc_mean = dc.mean();
    const double dc_var = (dc.array() - dc_mean).square().sum() / static_cast<double>(n);

    Eigen::VectorXd ac_mean = ac.colwise().mean();
    Eigen::MatrixXd acc = ac.rowwise() - ac_mean.transpose();
    Eigen::MatrixXd cov = (acc.transpose() * acc) / static_cast<double>(n);
    const double total_var = dc_var + cov.trace();

    SaabKernel k;
    k.filter_size = filter_size;
    k.mean.assign(ac_mean.data(), ac_mean.data() + d);
    k.anchors.push_back(std::vector<double>(static_cast<std::size_t>(d), inv_sqrt_d));
    k.bias.push_back(0.0);

    if (total_var <= 1e-18) {
        k.energies.push_back(0.0);
        return k; // zero-variance input: DC-only kernel
    }
    k.energies.push_back(dc_var / total_var);

    // Eigendecompose inside the AC subspace: B spans the orthogonal
    // complement of a0 (Householder reflection mapping e0 -> a0).
    Eigen::VectorXd a0 = Eigen::VectorXd::Constant(d, inv_sqrt_d);
    Eigen::VectorXd v = a0;
    v[0] -= 1.0; // a0 - e0
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);
    double vn = v.squaredNorm();
    if (vn > 1e-30) H -= (2.0 / vn) * (v * v.transpose());
    Eigen::MatrixXd B = H.rightCols(d - 1); // d x (d-1), orthonormal, each col ⊥ a0

    Eigen::MatrixXd cov_ac = B.transpose() * cov * B;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_ac);
    if (eig.info() != Eigen::Success) throw Error("eigendecomposition failed");

    // Eigen returns ascending order; emit descending.
    for (int i = d - 2; i >= 0; --i) {
        double lambda = std::max(0.0, eig.eigenvalues()[i]);
        double frac = lambda / total_var;
        if (frac < energy_threshold) continue;
        Eigen::VectorXd anchor = B * eig.eigenvectors().col(i);
        fix_sign(anchor);
        k.anchors.emplace_back(anchor.data(), anchor.data() + d);
        k.bias.push_back(0.0);
        k.energies.push_back(frac);
    }
    return k;
}

SaabKernel fit_saab(const std::vector<std::vector<float>>& samples, int filter_size,
                    double energy_threshold) {
    const int d = filter_size * filter_size;
    std::vector<float> flat;
    flat.reserve(samples.size() * static_cast<std::size_t>(d));
    for (const auto& s : samples) {
        if (static_cast<int>(s.size()) != d) throw ShapeError("sample length != F*F");
        flat.insert(flat.end(), s.begin(), s.end());
    }
    return fit_saab(flat.data(), static_cast<std::int64_t>(samples.size()), filter_size,
                    energy_threshold);
}

void apply_saab(const SaabKernel& k, std::span<const float> x, std::span<float> out) {
    const int d = k.dim();
    if (static_cast<int>(x.size()) != d) throw ShapeError("neighborhood length != F*F");
    if (out.size() != k.anchors.size()) throw ShapeError("output length != retained anchors");
    for (std::size_t m = 0; m < k.anchors.size(); ++m) {
        const auto& a = k.anchors[m];
        double acc = k.bias[m];
        for (int i = 0; i < d; ++i) acc += a[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
        out[m] = static_cast<float>(acc);
    }
}

std::vector<float> apply_saab(const SaabKernel& k, std::span<const float> x) {
    std::vector<float> out(k.anchors.size());
    apply_saab(k, x, out);
    return out;
}

int CwSaabLayer::retained_children() const {
    int c = 0;
    for (auto m : keep_mask) c += m ? 1 : 0;
    return c;
}

CwSaabLayer fit_cw_saab(const std::vector<CwSamples>& per_parent,
                        const std::vector<double>& parent_energies, int filter_size,
                        double energy_threshold) {
    if (per_parent.empty()) throw ConfigError("fit_cw_saab: empty parent set");
    if (per_parent.size() != parent_energies.size())
        throw ShapeError("fit_cw_saab: parent energies length mismatch");

    CwSaabLayer layer;
    layer.filter_size = filter_size;
    for (std::size_t p = 0; p < per_parent.size(); ++p) {
        // Fit unpruned; pruning happens on absolute energy below.
        SaabKernel k = fit_saab(per_parent[p].data, per_parent[p].n, filter_size, 0.0);
        for (std::size_t c = 0; c < k.energies.size(); ++c) {
            double abs_e = parent_energies[p] * k.energies[c];
            layer.child_energy.push_back(abs_e);
            layer.keep_mask.push_back(abs_e >= energy_threshold ? 1 : 0);
            layer.parent_of_child.push_back(static_cast<int>(p));
        }
        layer.kernels.push_back(std::move(k));
    }
    return layer;
}

} // namespace radhop

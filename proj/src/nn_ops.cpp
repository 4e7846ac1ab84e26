#include "mas/nn_ops.hpp"

#include <cmath>
#include <stdexcept>

namespace mas {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// source coordinate for aligned corners: dst * (n_in - 1) / (n_out - 1)
struct Lerp {
    int i0, i1;
    double f;
};

Lerp lerp_coord(int dst, int n_in, int n_out) {
    if (n_in == 1 || n_out == 1) return {0, 0, 0.0};
    const double p = static_cast<double>(dst) * (n_in - 1) / (n_out - 1);
    int i0 = static_cast<int>(std::floor(p));
    if (i0 >= n_in - 1) i0 = n_in - 2;
    return {i0, i0 + 1, p - i0};
}

} // namespace

FeatureMap trilinear_upsample(const FeatureMap& x, int factor) {
    if (factor < 1) throw std::invalid_argument("trilinear_upsample: factor must be >= 1");
    if (factor == 1) return x;
    const Dims od{x.dims.nx * factor, x.dims.ny * factor, x.dims.nz * factor};
    FeatureMap out(x.channels, od);
#pragma omp parallel for
    for (int z = 0; z < od.nz; ++z) {
        const Lerp lz = lerp_coord(z, x.dims.nz, od.nz);
        for (int y = 0; y < od.ny; ++y) {
            const Lerp ly = lerp_coord(y, x.dims.ny, od.ny);
            for (int x_ = 0; x_ < od.nx; ++x_) {
                const Lerp lx = lerp_coord(x_, x.dims.nx, od.nx);
                const std::size_t oi = flat_index(od, x_, y, z);
                for (int c = 0; c < x.channels; ++c) {
                    const double* src = x.channel(c);
                    auto v = [&](int i, int j, int k) {
                        return src[flat_index(x.dims, i, j, k)];
                    };
                    if (lx.f == 0.0 && ly.f == 0.0 && lz.f == 0.0) {
                        out.channel(c)[oi] = v(lx.i0, ly.i0, lz.i0);
                        continue;
                    }
                    const double c00 = v(lx.i0, ly.i0, lz.i0) * (1 - lx.f) + v(lx.i1, ly.i0, lz.i0) * lx.f;
                    const double c10 = v(lx.i0, ly.i1, lz.i0) * (1 - lx.f) + v(lx.i1, ly.i1, lz.i0) * lx.f;
                    const double c01 = v(lx.i0, ly.i0, lz.i1) * (1 - lx.f) + v(lx.i1, ly.i0, lz.i1) * lx.f;
                    const double c11 = v(lx.i0, ly.i1, lz.i1) * (1 - lx.f) + v(lx.i1, ly.i1, lz.i1) * lx.f;
                    out.channel(c)[oi] =
                        (c00 * (1 - ly.f) + c10 * ly.f) * (1 - lz.f) +
                        (c01 * (1 - ly.f) + c11 * ly.f) * lz.f;
                }
            }
        }
    }
    return out;
}

namespace {

void check_gate_shapes(const FeatureMap& up_g, const FeatureMap& f, const GateParams& p) {
    if (!(up_g.dims == f.dims))
        throw std::invalid_argument("attention_coefficients: upsampled g dims do not match f");
    if (up_g.channels != p.c_g || f.channels != p.c_f)
        throw std::invalid_argument("attention_coefficients: channel counts do not match params");
    if (p.c_i < 1) throw std::invalid_argument("attention_coefficients: c_i must be >= 1");
}

} // namespace

FeatureMap attention_coefficients(const FeatureMap& g, const FeatureMap& f, const GateParams& p) {
    const FeatureMap up_g = trilinear_upsample(g, 2);
    check_gate_shapes(up_g, f, p);
    const std::size_t n = f.dims.voxels();
    FeatureMap alpha(1, f.dims);
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        double score = *p.b_c();
        for (int m = 0; m < p.c_i; ++m) {
            double z = p.b_g()[m] + p.b_f()[m];
            for (int c = 0; c < p.c_g; ++c) z += p.w_g()[m * p.c_g + c] * up_g.at(c, i);
            for (int c = 0; c < p.c_f; ++c) z += p.w_f()[m * p.c_f + c] * f.at(c, i);
            if (z > 0.0) score += p.w_c()[m] * z;
        }
        alpha.data[i] = sigmoid(score);
    }
    return alpha;
}

FeatureMap apply_gate(const FeatureMap& f, const FeatureMap& alpha) {
    if (alpha.channels != 1) throw std::invalid_argument("apply_gate: alpha must have 1 channel");
    if (!(alpha.dims == f.dims)) throw std::invalid_argument("apply_gate: dims mismatch");
    FeatureMap out(f.channels, f.dims);
    const std::size_t n = f.dims.voxels();
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(n); ++i)
        for (int c = 0; c < f.channels; ++c) out.at(c, i) = f.at(c, i) * alpha.data[i];
    return out;
}

std::vector<double> attention_param_grad(const FeatureMap& g, const FeatureMap& f,
                                         const GateParams& p, const FeatureMap& projection) {
    const FeatureMap up_g = trilinear_upsample(g, 2);
    check_gate_shapes(up_g, f, p);
    if (!(projection.dims == f.dims) || projection.channels != 1)
        throw std::invalid_argument("attention_param_grad: projection must be 1 channel on f's grid");

    GateParams grad(p.c_g, p.c_f, p.c_i);
    const std::size_t n = f.dims.voxels();
    std::vector<double> h(p.c_i); // pre-activation per voxel
    for (std::size_t i = 0; i < n; ++i) {
        double score = *p.b_c();
        for (int m = 0; m < p.c_i; ++m) {
            double z = p.b_g()[m] + p.b_f()[m];
            for (int c = 0; c < p.c_g; ++c) z += p.w_g()[m * p.c_g + c] * up_g.at(c, i);
            for (int c = 0; c < p.c_f; ++c) z += p.w_f()[m * p.c_f + c] * f.at(c, i);
            h[m] = z;
            if (z > 0.0) score += p.w_c()[m] * z;
        }
        const double a = sigmoid(score);
        const double dscore = projection.data[i] * a * (1.0 - a);
        *grad.b_c() += dscore;
        for (int m = 0; m < p.c_i; ++m) {
            if (h[m] > 0.0) grad.w_c()[m] += dscore * h[m];
            const double dz = h[m] > 0.0 ? dscore * p.w_c()[m] : 0.0;
            if (dz == 0.0) continue;
            grad.b_g()[m] += dz;
            grad.b_f()[m] += dz;
            for (int c = 0; c < p.c_g; ++c) grad.w_g()[m * p.c_g + c] += dz * up_g.at(c, i);
            for (int c = 0; c < p.c_f; ++c) grad.w_f()[m * p.c_f + c] += dz * f.at(c, i);
        }
    }
    return grad.values;
}

Volume feature_channel_volume(const FeatureMap& map, int channel, const Vec3& spacing) {
    if (channel < 0 || channel >= map.channels)
        throw std::invalid_argument("feature_channel_volume: channel out of range");
    Volume out(map.dims);
    out.spacing = spacing;
    std::copy(map.channel(channel), map.channel(channel) + map.dims.voxels(), out.data.begin());
    return out;
}

double grad_check(const std::function<double(std::span<const double>)>& value,
                  std::span<const double> analytic_grad, std::vector<double> probe, double step) {
    if (analytic_grad.size() != probe.size())
        throw std::invalid_argument("grad_check: gradient/probe size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + step;
        const double hi = value(probe);
        probe[i] = orig - step;
        const double lo = value(probe);
        probe[i] = orig;
        const double fd = (hi - lo) / (2.0 * step);
        const double denom = std::max({std::abs(fd), std::abs(analytic_grad[i]), 1e-6});
        worst = std::max(worst, std::abs(fd - analytic_grad[i]) / denom);
    }
    return worst;
}

} // namespace mas

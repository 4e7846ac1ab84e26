#include "mas/gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace mas {

std::vector<double> gaussian_kernel(double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("gaussian_kernel: sigma must be >= 0");
    if (sigma == 0.0) return {1.0};
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> w(2 * r + 1);
    double total = 0.0;
    for (int t = -r; t <= r; ++t) {
        w[t + r] = std::exp(-0.5 * (t * t) / (sigma * sigma));
        total += w[t + r];
    }
    for (double& v : w) v /= total;
    return w;
}

namespace {

// Per-position sum of in-bounds taps; exactly 1 where the kernel fits.
std::vector<double> border_norms(int n, int radius, const std::vector<double>& w) {
    std::vector<double> norm(n, 1.0);
    for (int i = 0; i < n; ++i) {
        if (i >= radius && i + radius < n) continue;
        double s = 0.0;
        for (int t = -radius; t <= radius; ++t) {
            const int j = i + t;
            if (j >= 0 && j < n) s += w[t + radius];
        }
        norm[i] = s;
    }
    return norm;
}

enum class Pass { forward, adjoint };

void axis_pass(std::vector<double>& data, const Dims& dims, int axis,
               const std::vector<double>& w, Pass pass) {
    const int n = axis == 0 ? dims.nx : (axis == 1 ? dims.ny : dims.nz);
    const int radius = static_cast<int>(w.size() / 2);
    if (radius == 0) return;
    const std::vector<double> norm = border_norms(n, radius, w);

    const std::size_t stride = axis == 0 ? 1
                               : axis == 1 ? static_cast<std::size_t>(dims.nx)
                                           : static_cast<std::size_t>(dims.nx) * dims.ny;
    // collapse the two non-axis dimensions into a flat list of line starts
    const int na = axis == 0 ? dims.ny : dims.nx;
    const int nb = axis == 2 ? dims.ny : dims.nz;
    const std::size_t stride_a = axis == 0 ? static_cast<std::size_t>(dims.nx) : 1;
    const std::size_t stride_b = axis == 2 ? static_cast<std::size_t>(dims.nx)
                                           : static_cast<std::size_t>(dims.nx) * dims.ny;

#pragma omp parallel for collapse(2)
    for (int b = 0; b < nb; ++b) {
        for (int a = 0; a < na; ++a) {
            std::vector<double> line(n);
            double* base = data.data() + stride_a * a + stride_b * b;
            for (int i = 0; i < n; ++i) line[i] = base[stride * i];
            if (pass == Pass::adjoint)
                for (int i = 0; i < n; ++i) line[i] /= norm[i];
            for (int i = 0; i < n; ++i) {
                const int lo = std::max(-radius, -i);
                const int hi = std::min(radius, n - 1 - i);
                double s = 0.0;
                for (int t = lo; t <= hi; ++t) s += w[t + radius] * line[i + t];
                if (pass == Pass::forward) s /= norm[i];
                base[stride * i] = s;
            }
        }
    }
}

} // namespace

void gaussian_smooth_inplace(std::vector<double>& data, const Dims& dims, double sigma) {
    if (sigma == 0.0) return;
    const std::vector<double> w = gaussian_kernel(sigma);
    axis_pass(data, dims, 0, w, Pass::forward);
    axis_pass(data, dims, 1, w, Pass::forward);
    axis_pass(data, dims, 2, w, Pass::forward);
}

void gaussian_smooth_adjoint_inplace(std::vector<double>& data, const Dims& dims, double sigma) {
    if (sigma == 0.0) return;
    const std::vector<double> w = gaussian_kernel(sigma);
    axis_pass(data, dims, 2, w, Pass::adjoint);
    axis_pass(data, dims, 1, w, Pass::adjoint);
    axis_pass(data, dims, 0, w, Pass::adjoint);
}

Volume gaussian_smooth(const Volume& vol, double sigma) {
    Volume out = vol;
    gaussian_smooth_inplace(out.data, out.dims, sigma);
    return out;
}

ProbVolume gaussian_smooth(const ProbVolume& vol, double sigma) {
    ProbVolume out = vol;
    if (sigma == 0.0) return out;
    for (int c = 0; c < out.channels; ++c) {
        std::vector<double> ch(out.channel(c), out.channel(c) + out.dims.voxels());
        gaussian_smooth_inplace(ch, out.dims, sigma);
        std::copy(ch.begin(), ch.end(), out.channel(c));
    }
    return out;
}

} // namespace mas

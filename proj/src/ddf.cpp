#include "mas/ddf.hpp"

#include <cmath>
#include <stdexcept>

namespace mas {

namespace {

struct AxisCell {
    int i0, i1;
    double f;
    double dscale; // 1 inside the grid, 0 where clamped
};

inline AxisCell axis_cell(double p, int n) {
    if (n == 1 || p <= 0.0) {
        // p == 0 stays differentiable from the right when the grid allows it
        if (p == 0.0 && n > 1) return {0, 1, 0.0, 1.0};
        return {0, 0, 0.0, 0.0};
    }
    if (p >= n - 1) return {n - 1, n - 1, 0.0, 0.0};
    const int i0 = static_cast<int>(std::floor(p));
    return {i0, i0 + 1, p - i0, 1.0};
}

inline void check_dims(const Dims& a, const Dims& b, const char* who) {
    if (!(a == b)) throw std::invalid_argument(std::string(who) + ": dims mismatch");
}

} // namespace

double sample_trilinear(const double* data, const Dims& dims, double px, double py, double pz) {
    const AxisCell cx = axis_cell(px, dims.nx);
    const AxisCell cy = axis_cell(py, dims.ny);
    const AxisCell cz = axis_cell(pz, dims.nz);
    if (cx.f == 0.0 && cy.f == 0.0 && cz.f == 0.0)
        return data[flat_index(dims, cx.i0, cy.i0, cz.i0)];

    auto v = [&](int x, int y, int z) { return data[flat_index(dims, x, y, z)]; };
    const double c00 = v(cx.i0, cy.i0, cz.i0) * (1 - cx.f) + v(cx.i1, cy.i0, cz.i0) * cx.f;
    const double c10 = v(cx.i0, cy.i1, cz.i0) * (1 - cx.f) + v(cx.i1, cy.i1, cz.i0) * cx.f;
    const double c01 = v(cx.i0, cy.i0, cz.i1) * (1 - cx.f) + v(cx.i1, cy.i0, cz.i1) * cx.f;
    const double c11 = v(cx.i0, cy.i1, cz.i1) * (1 - cx.f) + v(cx.i1, cy.i1, cz.i1) * cx.f;
    const double c0 = c00 * (1 - cy.f) + c10 * cy.f;
    const double c1 = c01 * (1 - cy.f) + c11 * cy.f;
    return c0 * (1 - cz.f) + c1 * cz.f;
}

SampleGrad sample_trilinear_grad(const double* data, const Dims& dims, double px, double py,
                                 double pz) {
    const AxisCell cx = axis_cell(px, dims.nx);
    const AxisCell cy = axis_cell(py, dims.ny);
    const AxisCell cz = axis_cell(pz, dims.nz);

    auto v = [&](int x, int y, int z) { return data[flat_index(dims, x, y, z)]; };
    const double v000 = v(cx.i0, cy.i0, cz.i0), v100 = v(cx.i1, cy.i0, cz.i0);
    const double v010 = v(cx.i0, cy.i1, cz.i0), v110 = v(cx.i1, cy.i1, cz.i0);
    const double v001 = v(cx.i0, cy.i0, cz.i1), v101 = v(cx.i1, cy.i0, cz.i1);
    const double v011 = v(cx.i0, cy.i1, cz.i1), v111 = v(cx.i1, cy.i1, cz.i1);

    const double wx0 = 1 - cx.f, wx1 = cx.f;
    const double wy0 = 1 - cy.f, wy1 = cy.f;
    const double wz0 = 1 - cz.f, wz1 = cz.f;

    SampleGrad g;
    const double c00 = v000 * wx0 + v100 * wx1;
    const double c10 = v010 * wx0 + v110 * wx1;
    const double c01 = v001 * wx0 + v101 * wx1;
    const double c11 = v011 * wx0 + v111 * wx1;
    g.value = (c00 * wy0 + c10 * wy1) * wz0 + (c01 * wy0 + c11 * wy1) * wz1;

    g.dx = cx.dscale * (((v100 - v000) * wy0 + (v110 - v010) * wy1) * wz0 +
                        ((v101 - v001) * wy0 + (v111 - v011) * wy1) * wz1);
    g.dy = cy.dscale * (((v010 - v000) * wx0 + (v110 - v100) * wx1) * wz0 +
                        ((v011 - v001) * wx0 + (v111 - v101) * wx1) * wz1);
    g.dz = cz.dscale * (((v001 - v000) * wx0 + (v101 - v100) * wx1) * wy0 +
                        ((v011 - v010) * wx0 + (v111 - v110) * wx1) * wy1);
    return g;
}

namespace {

void warp_channel(const double* src, double* dst, const Dims& dims, const DisplacementField& ddf) {
#pragma omp parallel for
    for (int z = 0; z < dims.nz; ++z) {
        for (int y = 0; y < dims.ny; ++y) {
            for (int x = 0; x < dims.nx; ++x) {
                const std::size_t i = flat_index(dims, x, y, z);
                dst[i] = sample_trilinear(src, dims, x + ddf.ux[i], y + ddf.uy[i], z + ddf.uz[i]);
            }
        }
    }
}

} // namespace

Volume warp_scalar(const Volume& vol, const DisplacementField& ddf) {
    check_dims(vol.dims, ddf.dims, "warp_scalar");
    Volume out = vol;
    warp_channel(vol.data.data(), out.data.data(), vol.dims, ddf);
    return out;
}

ProbVolume warp_scalar(const ProbVolume& vol, const DisplacementField& ddf) {
    check_dims(vol.dims, ddf.dims, "warp_scalar");
    ProbVolume out = vol;
    for (int c = 0; c < vol.channels; ++c)
        warp_channel(vol.channel(c), out.channel(c), vol.dims, ddf);
    return out;
}

LabelMap warp_label(const LabelMap& labels, const DisplacementField& ddf) {
    check_dims(labels.dims, ddf.dims, "warp_label");
    const ProbVolume warped = warp_scalar(one_hot(labels), ddf);
    return argmax_labels(warped, labels.label_set, labels.origin);
}

LabelMap warp_label_nearest(const LabelMap& labels, const DisplacementField& ddf) {
    check_dims(labels.dims, ddf.dims, "warp_label_nearest");
    LabelMap out = labels;
    const Dims d = labels.dims;
    auto nearest = [](double p, int n) {
        const int j = static_cast<int>(std::ceil(p - 0.5));
        return j < 0 ? 0 : (j > n - 1 ? n - 1 : j);
    };
#pragma omp parallel for
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const std::size_t i = flat_index(d, x, y, z);
                out.labels[i] = labels.at(nearest(x + ddf.ux[i], d.nx), nearest(y + ddf.uy[i], d.ny),
                                          nearest(z + ddf.uz[i], d.nz));
            }
    return out;
}

Volume composed_sample(const Volume& warped, const DisplacementField& back_ddf) {
    check_dims(warped.dims, back_ddf.dims, "composed_sample");
    return warp_scalar(warped, back_ddf);
}

Volume restore_roundtrip(const Volume& atlas_img, const DisplacementField& U,
                         const DisplacementField& V) {
    return composed_sample(warp_scalar(atlas_img, U), V);
}

void warp_vjp_position(const double* vol, const Dims& dims, const DisplacementField& ddf,
                       const double* gout, DisplacementField& gddf, double scale) {
    check_dims(dims, ddf.dims, "warp_vjp_position");
    check_dims(dims, gddf.dims, "warp_vjp_position");
#pragma omp parallel for
    for (int z = 0; z < dims.nz; ++z)
        for (int y = 0; y < dims.ny; ++y)
            for (int x = 0; x < dims.nx; ++x) {
                const std::size_t i = flat_index(dims, x, y, z);
                const double g = gout[i] * scale;
                if (g == 0.0) continue;
                const SampleGrad s =
                    sample_trilinear_grad(vol, dims, x + ddf.ux[i], y + ddf.uy[i], z + ddf.uz[i]);
                gddf.ux[i] += g * s.dx;
                gddf.uy[i] += g * s.dy;
                gddf.uz[i] += g * s.dz;
            }
}

void warp_vjp_volume(const Dims& dims, const DisplacementField& ddf, const double* gout,
                     double* gvol, double scale) {
    check_dims(dims, ddf.dims, "warp_vjp_volume");
    for (int z = 0; z < dims.nz; ++z)
        for (int y = 0; y < dims.ny; ++y)
            for (int x = 0; x < dims.nx; ++x) {
                const std::size_t i = flat_index(dims, x, y, z);
                const double g = gout[i] * scale;
                if (g == 0.0) continue;
                const AxisCell cx = axis_cell(x + ddf.ux[i], dims.nx);
                const AxisCell cy = axis_cell(y + ddf.uy[i], dims.ny);
                const AxisCell cz = axis_cell(z + ddf.uz[i], dims.nz);
                const double wx[2] = {1 - cx.f, cx.f};
                const double wy[2] = {1 - cy.f, cy.f};
                const double wz[2] = {1 - cz.f, cz.f};
                const int ix[2] = {cx.i0, cx.i1};
                const int iy[2] = {cy.i0, cy.i1};
                const int iz[2] = {cz.i0, cz.i1};
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b)
                        for (int c = 0; c < 2; ++c) {
                            const double w = wx[a] * wy[b] * wz[c];
                            if (w != 0.0)
                                gvol[flat_index(dims, ix[a], iy[b], iz[c])] += g * w;
                        }
            }
}

} // namespace mas

#include "mas/phantom.hpp"

#include "mas/registration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mas {

void PhantomConfig::validate() const {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0)
        throw std::invalid_argument("PhantomConfig: dims must be positive");
    if (noise_std < 0.0) throw std::invalid_argument("PhantomConfig: noise_std must be >= 0");
    for (const auto& s : shapes) {
        if (s.radii.x <= 0.0 || s.radii.y <= 0.0 || s.radii.z <= 0.0)
            throw std::invalid_argument("PhantomConfig: ellipsoid radii must be positive");
        if (s.center.x - s.radii.x < 0.0 || s.center.x + s.radii.x > dims.nx - 1 ||
            s.center.y - s.radii.y < 0.0 || s.center.y + s.radii.y > dims.ny - 1 ||
            s.center.z - s.radii.z < 0.0 || s.center.z + s.radii.z > dims.nz - 1)
            throw std::invalid_argument("PhantomConfig: shape out of bounds");
    }
    if (deformation.kind == PhantomDeformation::Kind::smooth_random) {
        if (deformation.amplitude < 0.0)
            throw std::invalid_argument("PhantomConfig: amplitude must be >= 0");
        if (deformation.control_spacing < 1)
            throw std::invalid_argument("PhantomConfig: control_spacing must be >= 1");
    }
}

PhantomConfig PhantomConfig::nested_default() {
    PhantomConfig c;
    c.dims = {48, 48, 48};
    // outer shell first, inner cavity overwrites: label 2 ends up as a shell
    c.shapes = {
        {2, {24.0, 24.0, 24.0}, {14.0, 12.0, 13.0}},
        {1, {24.0, 24.0, 24.0}, {8.0, 7.0, 8.0}},
    };
    c.modality_a = {{0, 0.1, 0.0}, {1, 1.0, 0.0}, {2, 0.55, 0.0}};
    c.modality_b = {{0, 0.9, 0.0}, {1, 0.2, 0.0}, {2, 0.65, 0.0}};
    c.noise_std = 0.02;
    return c;
}

LabelMap paint_shapes(const Dims& dims, const std::vector<Ellipsoid>& shapes) {
    LabelMap out(dims);
#pragma omp parallel for
    for (int z = 0; z < dims.nz; ++z)
        for (int y = 0; y < dims.ny; ++y)
            for (int x = 0; x < dims.nx; ++x) {
                std::int16_t l = 0;
                for (const auto& s : shapes) {
                    const double dx = (x - s.center.x) / s.radii.x;
                    const double dy = (y - s.center.y) / s.radii.y;
                    const double dz = (z - s.center.z) / s.radii.z;
                    if (dx * dx + dy * dy + dz * dz <= 1.0) l = s.label;
                }
                out.at(x, y, z) = l;
            }
    out.recompute_label_set();
    return out;
}

Volume render_intensities(const LabelMap& labels, const std::vector<LabelIntensity>& table,
                          double noise_std, std::uint64_t seed, std::uint64_t stream) {
    Volume out(labels.dims);
    out.spacing = labels.spacing;
    out.origin = labels.origin;
    const std::size_t n = labels.dims.voxels();
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        const std::int16_t l = labels.labels[i];
        double mean = 0.0, sd = 0.0;
        for (const auto& t : table)
            if (t.label == l) {
                mean = t.mean;
                sd = t.std;
                break;
            }
        double v = mean;
        if (sd > 0.0) v += sd * normal_draw(seed, 2 * stream, static_cast<std::uint64_t>(i));
        if (noise_std > 0.0)
            v += noise_std * normal_draw(seed, 2 * stream + 1, static_cast<std::uint64_t>(i));
        out.data[i] = v;
    }
    return out;
}

DisplacementField random_smooth_field(const Dims& dims, double amplitude, int control_spacing,
                                      std::uint64_t seed) {
    if (amplitude < 0.0) throw std::invalid_argument("random_smooth_field: amplitude must be >= 0");
    const ControlGrid grid = ControlGrid::for_dims(dims, control_spacing);
    std::vector<double> params(grid.param_count(), 0.0);
    if (amplitude > 0.0) {
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i] = amplitude * uniform_sym(hash_counter(seed, 11, i));
    }
    return expand_node_field(params, grid, dims);
}

PhantomPair generate_pair(const PhantomConfig& config) {
    config.validate();
    PhantomPair pair;
    pair.atlas_label = paint_shapes(config.dims, config.shapes);

    switch (config.deformation.kind) {
    case PhantomDeformation::Kind::translation:
        pair.gt_ddf = DisplacementField(config.dims);
        pair.gt_ddf.fill(config.deformation.translation);
        break;
    case PhantomDeformation::Kind::smooth_random:
        pair.gt_ddf = random_smooth_field(config.dims, config.deformation.amplitude,
                                          config.deformation.control_spacing, config.seed);
        break;
    }

    pair.target_label = warp_label_nearest(pair.atlas_label, pair.gt_ddf);
    pair.atlas_img = render_intensities(pair.atlas_label, config.modality_a, config.noise_std,
                                        config.seed, 1);
    pair.target_img = render_intensities(pair.target_label, config.modality_b, config.noise_std,
                                         config.seed, 2);
    return pair;
}

double ks_statistic(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_statistic: empty sample");
    std::vector<double> sa = a, sb = b;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    double worst = 0.0;
    std::size_t ia = 0, ib = 0;
    while (ia < sa.size() && ib < sb.size()) {
        const double v = std::min(sa[ia], sb[ib]);
        while (ia < sa.size() && sa[ia] <= v) ++ia;
        while (ib < sb.size() && sb[ib] <= v) ++ib;
        const double fa = static_cast<double>(ia) / sa.size();
        const double fb = static_cast<double>(ib) / sb.size();
        worst = std::max(worst, std::abs(fa - fb));
    }
    return worst;
}

} // namespace mas

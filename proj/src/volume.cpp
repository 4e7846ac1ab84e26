#include "mas/volume.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mas {

double normal_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    // Box-Muller on two counter-derived uniforms.
    const std::uint64_t b1 = hash_counter(seed, stream, 2 * counter);
    const std::uint64_t b2 = hash_counter(seed, stream, 2 * counter + 1);
    double u1 = uniform01(b1);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform01(b2);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

void Volume::validate() const {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0)
        throw std::invalid_argument("Volume: dims must be positive");
    if (spacing.x <= 0.0 || spacing.y <= 0.0 || spacing.z <= 0.0)
        throw std::invalid_argument("Volume: spacing must be positive");
    if (data.size() != dims.voxels())
        throw std::invalid_argument("Volume: data length does not match dims");
}

void LabelMap::recompute_label_set() {
    label_set.assign(labels.begin(), labels.end());
    std::sort(label_set.begin(), label_set.end());
    label_set.erase(std::unique(label_set.begin(), label_set.end()), label_set.end());
    if (label_set.empty() || label_set.front() != 0)
        label_set.insert(std::lower_bound(label_set.begin(), label_set.end(), std::int16_t{0}), 0);
}

void LabelMap::validate() const {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0)
        throw std::invalid_argument("LabelMap: dims must be positive");
    if (spacing.x <= 0.0 || spacing.y <= 0.0 || spacing.z <= 0.0)
        throw std::invalid_argument("LabelMap: spacing must be positive");
    if (labels.size() != dims.voxels())
        throw std::invalid_argument("LabelMap: label length does not match dims");
    if (label_set.empty() || !std::is_sorted(label_set.begin(), label_set.end()))
        throw std::invalid_argument("LabelMap: label_set must be sorted and non-empty");
    if (!std::binary_search(label_set.begin(), label_set.end(), std::int16_t{0}))
        throw std::invalid_argument("LabelMap: label_set must contain background 0");
    for (std::int16_t l : labels) {
        if (!std::binary_search(label_set.begin(), label_set.end(), l))
            throw std::invalid_argument("LabelMap: voxel label outside label_set");
    }
}

namespace {

int output_extent(int n_in, double s_in, double s_out) {
    if (n_in == 1) return 1;
    const double extent = static_cast<double>(n_in - 1) * s_in;
    return static_cast<int>(std::lround(extent / s_out)) + 1;
}

// round half down: 0.5 resolves to the lower source index
int nearest_low(double p, int n) {
    int j = static_cast<int>(std::ceil(p - 0.5));
    return std::clamp(j, 0, n - 1);
}

} // namespace

Volume resample_isotropic(const Volume& vol, double target_spacing) {
    if (target_spacing <= 0.0)
        throw std::invalid_argument("resample_isotropic: target spacing must be positive");
    vol.validate();

    Dims od{output_extent(vol.dims.nx, vol.spacing.x, target_spacing),
            output_extent(vol.dims.ny, vol.spacing.y, target_spacing),
            output_extent(vol.dims.nz, vol.spacing.z, target_spacing)};
    Volume out(od);
    out.spacing = {target_spacing, target_spacing, target_spacing};
    out.origin = vol.origin;

    const Dims id = vol.dims;
    const double rx = target_spacing / vol.spacing.x;
    const double ry = target_spacing / vol.spacing.y;
    const double rz = target_spacing / vol.spacing.z;

#pragma omp parallel for
    for (int z = 0; z < od.nz; ++z) {
        for (int y = 0; y < od.ny; ++y) {
            for (int x = 0; x < od.nx; ++x) {
                const double px = x * rx, py = y * ry, pz = z * rz;
                // per-axis cell + fraction, clamped to the valid grid
                auto cell = [](double p, int n, int& i0, int& i1, double& f) {
                    if (n == 1 || p <= 0.0) { i0 = i1 = 0; f = 0.0; return; }
                    if (p >= n - 1) { i0 = i1 = n - 1; f = 0.0; return; }
                    i0 = static_cast<int>(std::floor(p));
                    i1 = i0 + 1;
                    f = p - i0;
                };
                int x0, x1, y0, y1, z0, z1;
                double fx, fy, fz;
                cell(px, id.nx, x0, x1, fx);
                cell(py, id.ny, y0, y1, fy);
                cell(pz, id.nz, z0, z1, fz);
                if (fx == 0.0 && fy == 0.0 && fz == 0.0) {
                    out.at(x, y, z) = vol.at(x0, y0, z0);
                    continue;
                }
                const double c00 = vol.at(x0, y0, z0) * (1 - fx) + vol.at(x1, y0, z0) * fx;
                const double c10 = vol.at(x0, y1, z0) * (1 - fx) + vol.at(x1, y1, z0) * fx;
                const double c01 = vol.at(x0, y0, z1) * (1 - fx) + vol.at(x1, y0, z1) * fx;
                const double c11 = vol.at(x0, y1, z1) * (1 - fx) + vol.at(x1, y1, z1) * fx;
                const double c0 = c00 * (1 - fy) + c10 * fy;
                const double c1 = c01 * (1 - fy) + c11 * fy;
                out.at(x, y, z) = c0 * (1 - fz) + c1 * fz;
            }
        }
    }
    return out;
}

LabelMap resample_isotropic(const LabelMap& labels, double target_spacing) {
    if (target_spacing <= 0.0)
        throw std::invalid_argument("resample_isotropic: target spacing must be positive");
    labels.validate();

    Dims od{output_extent(labels.dims.nx, labels.spacing.x, target_spacing),
            output_extent(labels.dims.ny, labels.spacing.y, target_spacing),
            output_extent(labels.dims.nz, labels.spacing.z, target_spacing)};
    LabelMap out(od);
    out.spacing = {target_spacing, target_spacing, target_spacing};
    out.origin = labels.origin;
    out.label_set = labels.label_set;

    const double rx = target_spacing / labels.spacing.x;
    const double ry = target_spacing / labels.spacing.y;
    const double rz = target_spacing / labels.spacing.z;

#pragma omp parallel for
    for (int z = 0; z < od.nz; ++z) {
        for (int y = 0; y < od.ny; ++y) {
            for (int x = 0; x < od.nx; ++x) {
                const int sx = nearest_low(x * rx, labels.dims.nx);
                const int sy = nearest_low(y * ry, labels.dims.ny);
                const int sz = nearest_low(z * rz, labels.dims.nz);
                out.at(x, y, z) = labels.at(sx, sy, sz);
            }
        }
    }
    return out;
}

Volume zscore_normalize(const Volume& vol) {
    vol.validate();
    const std::size_t n = vol.data.size();
    const auto [mn, mx] = std::minmax_element(vol.data.begin(), vol.data.end());
    if (*mn == *mx) {
        Volume out = vol;
        std::fill(out.data.begin(), out.data.end(), 0.0);
        return out;
    }
    const double mean = pairwise_sum(vol.data) / static_cast<double>(n);

    std::vector<double> sq(n);
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        const double d = vol.data[i] - mean;
        sq[i] = d * d;
    }
    const double var = pairwise_sum(sq) / static_cast<double>(n);
    const double sd = std::sqrt(var);

    Volume out = vol;
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(n); ++i)
        out.data[i] = (vol.data[i] - mean) / sd;
    return out;
}

Vec3 foreground_centroid_mm(const LabelMap& map) {
    double sx = 0.0, sy = 0.0, sz = 0.0;
    std::size_t count = 0;
    for (int z = 0; z < map.dims.nz; ++z)
        for (int y = 0; y < map.dims.ny; ++y)
            for (int x = 0; x < map.dims.nx; ++x)
                if (map.at(x, y, z) != 0) {
                    sx += x;
                    sy += y;
                    sz += z;
                    ++count;
                }
    if (count == 0)
        throw empty_region_error("foreground_centroid_mm: no nonzero labels");
    const double n = static_cast<double>(count);
    return {map.origin.x + sx / n * map.spacing.x,
            map.origin.y + sy / n * map.spacing.y,
            map.origin.z + sz / n * map.spacing.z};
}

Vec3 center_align_translation(const LabelMap& atlas_label, const LabelMap& target_label) {
    const Vec3 ca = foreground_centroid_mm(atlas_label);
    const Vec3 ct = foreground_centroid_mm(target_label);
    return ct - ca;
}

ProbVolume one_hot(const LabelMap& labels) {
    const int k = static_cast<int>(labels.label_set.size());
    ProbVolume out(labels.dims, k);
    out.spacing = labels.spacing;
    const std::size_t n = labels.dims.voxels();
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        const std::int16_t l = labels.labels[i];
        for (int c = 0; c < k; ++c)
            if (labels.label_set[c] == l) {
                out.at(c, i) = 1.0;
                break;
            }
    }
    return out;
}

LabelMap argmax_labels(const ProbVolume& probs, const std::vector<std::int16_t>& label_set,
                       const Vec3& origin) {
    if (static_cast<int>(label_set.size()) != probs.channels)
        throw std::invalid_argument("argmax_labels: label_set size does not match channels");
    LabelMap out(probs.dims);
    out.spacing = probs.spacing;
    out.origin = origin;
    out.label_set = label_set;
    const std::size_t n = probs.dims.voxels();
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        int best = 0;
        double best_v = probs.at(0, i);
        for (int c = 1; c < probs.channels; ++c) {
            const double v = probs.at(c, i);
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        out.labels[i] = label_set[best];
    }
    return out;
}

} // namespace mas

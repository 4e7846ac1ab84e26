#include "mas/serial_ref.hpp"

#include "mas/gaussian.hpp"
#include "mas/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mas::serial {

Volume warp_scalar(const Volume& vol, const DisplacementField& ddf) {
    if (!(vol.dims == ddf.dims)) throw std::invalid_argument("serial::warp_scalar: dims mismatch");
    Volume out = vol;
    const Dims d = vol.dims;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const std::size_t i = flat_index(d, x, y, z);
                out.data[i] = sample_trilinear(vol.data.data(), d, x + ddf.ux[i], y + ddf.uy[i],
                                               z + ddf.uz[i]);
            }
    return out;
}

Volume gaussian_smooth(const Volume& vol, double sigma) {
    Volume out = vol;
    if (sigma == 0.0) return out;
    const std::vector<double> w = gaussian_kernel(sigma);
    const int radius = static_cast<int>(w.size() / 2);
    const Dims d = vol.dims;

    auto pass = [&](int axis) {
        const int n = axis == 0 ? d.nx : (axis == 1 ? d.ny : d.nz);
        std::vector<double> line(n);
        auto get = [&](int x, int y, int z) -> double& { return out.data[flat_index(d, x, y, z)]; };
        const int nu = axis == 0 ? d.ny : d.nx;
        const int nv = axis == 2 ? d.ny : d.nz;
        for (int v = 0; v < nv; ++v)
            for (int u = 0; u < nu; ++u) {
                for (int i = 0; i < n; ++i)
                    line[i] = axis == 0 ? get(i, u, v) : (axis == 1 ? get(u, i, v) : get(u, v, i));
                for (int i = 0; i < n; ++i) {
                    double s = 0.0, norm = 0.0;
                    for (int t = -radius; t <= radius; ++t) {
                        const int j = i + t;
                        if (j < 0 || j >= n) continue;
                        s += w[t + radius] * line[j];
                        norm += w[t + radius];
                    }
                    const double r = s / norm;
                    (axis == 0 ? get(i, u, v) : (axis == 1 ? get(u, i, v) : get(u, v, i))) = r;
                }
            }
    };
    pass(0);
    pass(1);
    pass(2);
    return out;
}

SimilarityMap ground_truth_similarity(const LabelMap& warped_atlas, const LabelMap& target,
                                      const PatchSpec& patch) {
    if (!(warped_atlas.dims == target.dims))
        throw std::invalid_argument("serial::ground_truth_similarity: dims mismatch");
    const Dims d = target.dims;
    SimilarityMap out;
    out.dims = d;
    out.spacing = target.spacing;
    out.data.assign(d.voxels(), 0.0);
    const int r = patch.radius;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                int agree = 0, count = 0;
                for (int k = z - r; k <= z + r; ++k)
                    for (int j = y - r; j <= y + r; ++j)
                        for (int i = x - r; i <= x + r; ++i) {
                            if (i < 0 || j < 0 || k < 0 || i >= d.nx || j >= d.ny || k >= d.nz)
                                continue;
                            ++count;
                            agree += warped_atlas.at(i, j, k) == target.at(i, j, k);
                        }
                out.at(x, y, z) = static_cast<double>(agree) / static_cast<double>(count);
            }
    return out;
}

LabelMap majority_vote(const std::vector<const LabelMap*>& labels) {
    if (labels.empty()) throw std::invalid_argument("serial::majority_vote: empty input");
    const LabelMap& ref = *labels.front();
    LabelMap out = ref;
    std::vector<std::int16_t> all;
    for (const LabelMap* m : labels) {
        if (!(m->dims == ref.dims))
            throw std::invalid_argument("serial::majority_vote: dims mismatch");
        all.insert(all.end(), m->label_set.begin(), m->label_set.end());
    }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    out.label_set = all;

    std::vector<int> votes(all.size());
    for (std::size_t i = 0; i < ref.labels.size(); ++i) {
        std::fill(votes.begin(), votes.end(), 0);
        for (const LabelMap* m : labels) {
            const auto it = std::lower_bound(all.begin(), all.end(), m->labels[i]);
            ++votes[static_cast<std::size_t>(it - all.begin())];
        }
        std::size_t best = 0;
        for (std::size_t c = 1; c < votes.size(); ++c)
            if (votes[c] > votes[best]) best = c;
        out.labels[i] = all[best];
    }
    return out;
}

namespace {

double min_cross_distance(const std::vector<std::array<int, 3>>& from,
                          const std::vector<std::array<int, 3>>& to, const Vec3& sp, bool want_max,
                          double& sum_out) {
    double worst = 0.0;
    sum_out = 0.0;
    for (const auto& f : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& t : to) {
            const double dx = (f[0] - t[0]) * sp.x;
            const double dy = (f[1] - t[1]) * sp.y;
            const double dz = (f[2] - t[2]) * sp.z;
            best = std::min(best, dx * dx + dy * dy + dz * dz);
        }
        const double dist = std::sqrt(best);
        sum_out += dist;
        worst = std::max(worst, dist);
    }
    return want_max ? worst : sum_out;
}

} // namespace

double asd_allpairs(const LabelMap& a, const LabelMap& b, std::int16_t label) {
    const auto sa = surface_voxels(a, label);
    const auto sb = surface_voxels(b, label);
    if (sa.empty() || sb.empty())
        throw empty_region_error("serial::asd_allpairs: empty mask");
    double sum_ab = 0.0, sum_ba = 0.0;
    min_cross_distance(sa, sb, a.spacing, false, sum_ab);
    min_cross_distance(sb, sa, a.spacing, false, sum_ba);
    return (sum_ab + sum_ba) / static_cast<double>(sa.size() + sb.size());
}

double hausdorff_allpairs(const LabelMap& a, const LabelMap& b, std::int16_t label) {
    const auto sa = surface_voxels(a, label);
    const auto sb = surface_voxels(b, label);
    if (sa.empty() || sb.empty())
        throw empty_region_error("serial::hausdorff_allpairs: empty mask");
    double dump = 0.0;
    const double ab = min_cross_distance(sa, sb, a.spacing, true, dump);
    const double ba = min_cross_distance(sb, sa, a.spacing, true, dump);
    return std::max(ab, ba);
}

} // namespace mas::serial

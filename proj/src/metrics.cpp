#include "mas/metrics.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mas {

namespace {

void check_dims(const LabelMap& a, const LabelMap& b, const char* who) {
    if (!(a.dims == b.dims)) throw std::invalid_argument(std::string(who) + ": dims mismatch");
}

std::size_t count_label(const LabelMap& m, std::int16_t label) {
    std::size_t n = 0;
    for (std::int16_t l : m.labels)
        if (l == label) ++n;
    return n;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// One pass of the exact squared-Euclidean distance transform: lower envelope
// of parabolas rooted at sample positions pos[i] (physical mm). Entries with
// f == inf carry no parabola.
void edt_1d(const std::vector<double>& f, const std::vector<double>& pos,
            std::vector<double>& out, std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        double s;
        while (true) {
            const int p = v[k];
            s = ((f[q] + pos[q] * pos[q]) - (f[p] + pos[p] * pos[p])) / (2 * pos[q] - 2 * pos[p]);
            if (s <= z[k])
                --k; // z[0] is -inf, so k never drops below 0 here
            else
                break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (k < 0) {
        std::fill(out.begin(), out.end(), kInf);
        return;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < pos[q]) ++k;
        const double d = pos[q] - pos[v[k]];
        out[q] = d * d + f[v[k]];
    }
}

// Exact squared distance (mm^2) from every voxel to the seed set.
std::vector<double> edt_sq(const Dims& dims, const Vec3& spacing,
                           const std::vector<std::array<int, 3>>& seeds) {
    std::vector<double> d(dims.voxels(), kInf);
    for (const auto& s : seeds) d[flat_index(dims, s[0], s[1], s[2])] = 0.0;

    auto pass = [&](int axis) {
        const int n = axis == 0 ? dims.nx : (axis == 1 ? dims.ny : dims.nz);
        const double sp = axis == 0 ? spacing.x : (axis == 1 ? spacing.y : spacing.z);
        std::vector<double> pos(n);
        for (int i = 0; i < n; ++i) pos[i] = i * sp;
        const std::size_t stride = axis == 0 ? 1
                                   : axis == 1 ? static_cast<std::size_t>(dims.nx)
                                               : static_cast<std::size_t>(dims.nx) * dims.ny;
        const int na = axis == 0 ? dims.ny : dims.nx;
        const int nb = axis == 2 ? dims.ny : dims.nz;
        const std::size_t stride_a = axis == 0 ? static_cast<std::size_t>(dims.nx) : 1;
        const std::size_t stride_b = axis == 2 ? static_cast<std::size_t>(dims.nx)
                                               : static_cast<std::size_t>(dims.nx) * dims.ny;
#pragma omp parallel for collapse(2)
        for (int b = 0; b < nb; ++b) {
            for (int a = 0; a < na; ++a) {
                std::vector<double> f(n), out(n), z(n + 1);
                std::vector<int> v(n);
                double* base = d.data() + stride_a * a + stride_b * b;
                for (int i = 0; i < n; ++i) f[i] = base[stride * i];
                edt_1d(f, pos, out, v, z);
                for (int i = 0; i < n; ++i) base[stride * i] = out[i];
            }
        }
    };
    pass(0);
    pass(1);
    pass(2);
    return d;
}

} // namespace

std::vector<std::array<int, 3>> surface_voxels(const LabelMap& m, std::int16_t label) {
    std::vector<std::array<int, 3>> out;
    auto is_fg = [&](int x, int y, int z) {
        if (x < 0 || y < 0 || z < 0 || x >= m.dims.nx || y >= m.dims.ny || z >= m.dims.nz)
            return false;
        return m.at(x, y, z) == label;
    };
    for (int z = 0; z < m.dims.nz; ++z)
        for (int y = 0; y < m.dims.ny; ++y)
            for (int x = 0; x < m.dims.nx; ++x) {
                if (m.at(x, y, z) != label) continue;
                if (!is_fg(x - 1, y, z) || !is_fg(x + 1, y, z) || !is_fg(x, y - 1, z) ||
                    !is_fg(x, y + 1, z) || !is_fg(x, y, z - 1) || !is_fg(x, y, z + 1))
                    out.push_back({x, y, z});
            }
    return out;
}

double dice_score(const LabelMap& a, const LabelMap& b, std::int16_t label) {
    check_dims(a, b, "dice_score");
    std::size_t na = 0, nb = 0, inter = 0;
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
        const bool ia = a.labels[i] == label;
        const bool ib = b.labels[i] == label;
        na += ia;
        nb += ib;
        inter += ia && ib;
    }
    if (na + nb == 0) return 100.0;
    return 100.0 * 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

namespace {

struct SurfacePair {
    std::vector<std::array<int, 3>> sa, sb;
    std::vector<double> dist_to_b_sq, dist_to_a_sq; // full-grid EDTs
};

SurfacePair surface_setup(const LabelMap& a, const LabelMap& b, std::int16_t label,
                          const char* who) {
    check_dims(a, b, who);
    SurfacePair p;
    p.sa = surface_voxels(a, label);
    p.sb = surface_voxels(b, label);
    if (p.sa.empty() || p.sb.empty())
        throw empty_region_error(std::string(who) + ": empty mask for label " +
                                 std::to_string(label));
    p.dist_to_b_sq = edt_sq(a.dims, a.spacing, p.sb);
    p.dist_to_a_sq = edt_sq(a.dims, a.spacing, p.sa);
    return p;
}

} // namespace

double asd(const LabelMap& a, const LabelMap& b, std::int16_t label) {
    const SurfacePair p = surface_setup(a, b, label, "asd");
    double acc = 0.0;
    for (const auto& s : p.sa) acc += std::sqrt(p.dist_to_b_sq[flat_index(a.dims, s[0], s[1], s[2])]);
    for (const auto& s : p.sb) acc += std::sqrt(p.dist_to_a_sq[flat_index(a.dims, s[0], s[1], s[2])]);
    return acc / static_cast<double>(p.sa.size() + p.sb.size());
}

double hausdorff(const LabelMap& a, const LabelMap& b, std::int16_t label) {
    const SurfacePair p = surface_setup(a, b, label, "hausdorff");
    double worst = 0.0;
    for (const auto& s : p.sa)
        worst = std::max(worst, p.dist_to_b_sq[flat_index(a.dims, s[0], s[1], s[2])]);
    for (const auto& s : p.sb)
        worst = std::max(worst, p.dist_to_a_sq[flat_index(a.dims, s[0], s[1], s[2])]);
    return std::sqrt(worst);
}

double volume_difference(const LabelMap& a, const LabelMap& b, std::int16_t label) {
    check_dims(a, b, "volume_difference");
    const double voxel_mm3 = a.spacing.x * a.spacing.y * a.spacing.z;
    const auto ca = count_label(a, label);
    const auto cb = count_label(b, label);
    const double diff = ca > cb ? static_cast<double>(ca - cb) : static_cast<double>(cb - ca);
    return diff * voxel_mm3 / 1000.0;
}

MetricReport evaluate_labels(const LabelMap& predicted, const LabelMap& gold) {
    MetricReport report;
    for (std::int16_t l : gold.label_set) {
        if (l == 0) continue;
        LabelMetrics m;
        m.label = l;
        m.dice = dice_score(predicted, gold, l);
        m.volume_diff = volume_difference(predicted, gold, l);
        try {
            m.asd = asd(predicted, gold, l);
            m.hausdorff = hausdorff(predicted, gold, l);
        } catch (const empty_region_error&) {
            m.asd = std::numeric_limits<double>::quiet_NaN();
            m.hausdorff = std::numeric_limits<double>::quiet_NaN();
        }
        report.rows.push_back(m);
    }
    return report;
}

std::string MetricReport::to_csv() const {
    std::ostringstream os;
    os << "label,ds_percent,asd_mm,hd_mm,vd_ml\n";
    for (const auto& r : rows)
        os << r.label << ',' << r.dice << ',' << r.asd << ',' << r.hausdorff << ','
           << r.volume_diff << '\n';
    return os.str();
}

std::string MetricReport::to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
        j.push_back({{"label", r.label},
                     {"ds_percent", r.dice},
                     {"asd_mm", r.asd},
                     {"hd_mm", r.hausdorff},
                     {"vd_ml", r.volume_diff}});
    }
    return j.dump(2) + "\n";
}

double MetricReport::mean_dice() const {
    if (rows.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& r : rows) acc += r.dice;
    return acc / static_cast<double>(rows.size());
}

} // namespace mas

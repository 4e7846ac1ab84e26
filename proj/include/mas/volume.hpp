#ifndef MAS_VOLUME_HPP
#define MAS_VOLUME_HPP

#include "mas/core.hpp"

#include <cstdint>
#include <vector>

namespace mas {

// Scalar 3D grid with physical spacing. Voxel data is promoted to double in
// memory regardless of on-disk storage type.
struct Volume {
    Dims dims;
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};
    std::vector<double> data;

    Volume() = default;
    Volume(Dims d, double fill = 0.0) : dims(d), data(d.voxels(), fill) {}

    double& at(int x, int y, int z) { return data[flat_index(dims, x, y, z)]; }
    double at(int x, int y, int z) const { return data[flat_index(dims, x, y, z)]; }

    void validate() const;
};

// Integer label grid over a sorted label set that always contains background 0.
struct LabelMap {
    Dims dims;
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};
    std::vector<std::int16_t> labels;
    std::vector<std::int16_t> label_set{0};

    LabelMap() = default;
    LabelMap(Dims d, std::int16_t fill = 0) : dims(d), labels(d.voxels(), fill) {}

    std::int16_t& at(int x, int y, int z) { return labels[flat_index(dims, x, y, z)]; }
    std::int16_t at(int x, int y, int z) const { return labels[flat_index(dims, x, y, z)]; }

    // Rebuild label_set from the voxel data (sorted, distinct, includes 0).
    void recompute_label_set();
    void validate() const;
};

// Per-label probability channels, channel-major storage. Channel order follows
// the sorted label set of the map it was derived from (channel 0 = background).
struct ProbVolume {
    Dims dims;
    Vec3 spacing{1.0, 1.0, 1.0};
    int channels = 0;
    std::vector<double> data;

    ProbVolume() = default;
    ProbVolume(Dims d, int c) : dims(d), channels(c), data(d.voxels() * static_cast<std::size_t>(c), 0.0) {}

    double* channel(int c) { return data.data() + static_cast<std::size_t>(c) * dims.voxels(); }
    const double* channel(int c) const { return data.data() + static_cast<std::size_t>(c) * dims.voxels(); }

    double& at(int c, std::size_t i) { return data[static_cast<std::size_t>(c) * dims.voxels() + i]; }
    double at(int c, std::size_t i) const { return data[static_cast<std::size_t>(c) * dims.voxels() + i]; }
};

// --- preprocessing ---

// Resample to an isotropic grid. Scalar volumes interpolate trilinearly,
// label maps take the nearest source voxel (half-way ties resolve toward the
// lower source index). Grid node convention: node i sits at origin + i*spacing,
// so physical extent (n-1)*spacing is preserved within one output voxel.
Volume resample_isotropic(const Volume& vol, double target_spacing);
LabelMap resample_isotropic(const LabelMap& labels, double target_spacing);

// Zero-mean / unit population variance. Constant inputs map to all zeros.
Volume zscore_normalize(const Volume& vol);

// Vector (mm) from the atlas foreground centroid to the target foreground
// centroid. Foreground = all nonzero labels.
Vec3 center_align_translation(const LabelMap& atlas_label, const LabelMap& target_label);

ProbVolume one_hot(const LabelMap& labels);

// Per-voxel argmax over channels; ties resolve to the lowest channel index,
// i.e. the lowest label value.
LabelMap argmax_labels(const ProbVolume& probs, const std::vector<std::int16_t>& label_set,
                       const Vec3& origin = {0.0, 0.0, 0.0});

Vec3 foreground_centroid_mm(const LabelMap& map);

} // namespace mas

#endif

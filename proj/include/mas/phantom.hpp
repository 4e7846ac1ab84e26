#ifndef MAS_PHANTOM_HPP
#define MAS_PHANTOM_HPP

#include "mas/ddf.hpp"
#include "mas/volume.hpp"

#include <cstdint>

namespace mas {

struct Ellipsoid {
    std::int16_t label = 1;
    Vec3 center; // voxel coordinates
    Vec3 radii;  // voxels
};

struct LabelIntensity {
    std::int16_t label = 0;
    double mean = 0.0;
    double std = 0.0;
};

// Deformation of the generated pair, expressed as the resampling field that
// produces the target from the atlas: target(x) = atlas(x + g(x)). A
// translation t therefore moves the anatomy by -t in voxel space.
struct PhantomDeformation {
    enum class Kind { translation, smooth_random } kind = Kind::translation;
    Vec3 translation;            // voxel units (field value)
    double amplitude = 0.0;      // smooth_random: max |component|
    int control_spacing = 8;     // smooth_random
};

struct PhantomConfig {
    Dims dims{48, 48, 48};
    std::vector<Ellipsoid> shapes; // painted in order; later shapes overwrite
    std::vector<LabelIntensity> modality_a;
    std::vector<LabelIntensity> modality_b;
    double noise_std = 0.0;
    PhantomDeformation deformation;
    std::uint64_t seed = 0;

    void validate() const;
    // a two-structure nested-ellipsoid anatomy with contrasting modalities
    static PhantomConfig nested_default();
};

struct PhantomPair {
    Volume atlas_img;
    LabelMap atlas_label;
    Volume target_img;
    LabelMap target_label;
    DisplacementField gt_ddf;
};

LabelMap paint_shapes(const Dims& dims, const std::vector<Ellipsoid>& shapes);

// Per-voxel intensities from a label -> (mean, std) table plus global noise;
// fully determined by (seed, stream).
Volume render_intensities(const LabelMap& labels, const std::vector<LabelIntensity>& table,
                          double noise_std, std::uint64_t seed, std::uint64_t stream);

// Control-grid uniform draws in [-amplitude, amplitude] per component,
// trilinearly expanded; the dense field interpolates the nodes exactly.
DisplacementField random_smooth_field(const Dims& dims, double amplitude, int control_spacing,
                                      std::uint64_t seed);

// Atlas from the shape list; target label is the atlas label resampled
// through gt_ddf (nearest neighbor), so the pair matches exactly under that
// field by construction.
PhantomPair generate_pair(const PhantomConfig& config);

// Two-sample Kolmogorov-Smirnov statistic over raw voxel intensities.
double ks_statistic(const std::vector<double>& a, const std::vector<double>& b);

} // namespace mas

#endif

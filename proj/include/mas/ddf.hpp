#ifndef MAS_DDF_HPP
#define MAS_DDF_HPP

#include "mas/volume.hpp"

#include <array>

namespace mas {

// Dense per-voxel displacement field, components in voxel units. A warp reads
// output(x) = input(x + u(x)); spacing is kept only for mm conversions.
struct DisplacementField {
    Dims dims;
    Vec3 spacing{1.0, 1.0, 1.0};
    std::vector<double> ux, uy, uz;

    DisplacementField() = default;
    explicit DisplacementField(Dims d)
        : dims(d), ux(d.voxels(), 0.0), uy(d.voxels(), 0.0), uz(d.voxels(), 0.0) {}

    void fill(const Vec3& v) {
        std::fill(ux.begin(), ux.end(), v.x);
        std::fill(uy.begin(), uy.end(), v.y);
        std::fill(uz.begin(), uz.end(), v.z);
    }
};

// Trilinear sample of a scalar grid at a continuous voxel coordinate.
// Out-of-domain positions clamp to the nearest edge voxel. Integer positions
// take an exact single-voxel path, so zero displacement reproduces input bits.
double sample_trilinear(const double* data, const Dims& dims, double px, double py, double pz);

// Value plus the derivative w.r.t. the sampling position. At cell boundaries
// the derivative takes the right-continuous branch; in clamped regions it is 0.
struct SampleGrad {
    double value;
    double dx, dy, dz;
};
SampleGrad sample_trilinear_grad(const double* data, const Dims& dims, double px, double py, double pz);

Volume warp_scalar(const Volume& vol, const DisplacementField& ddf);
ProbVolume warp_scalar(const ProbVolume& vol, const DisplacementField& ddf);

// One-hot -> trilinear warp -> per-voxel argmax (ties to the lowest label).
LabelMap warp_label(const LabelMap& labels, const DisplacementField& ddf);

// Nearest-neighbor label warp (half-way samples round to the lower index).
LabelMap warp_label_nearest(const LabelMap& labels, const DisplacementField& ddf);

// output(x) = warped(x + back_ddf(x)); same kernel as warp_scalar, named for
// the second leg of a forward/backward composition.
Volume composed_sample(const Volume& warped, const DisplacementField& back_ddf);

// warp by U then by V; ideally restores the original when V inverts U.
Volume restore_roundtrip(const Volume& atlas_img, const DisplacementField& U,
                         const DisplacementField& V);

// --- adjoints used by the registration losses ---

// Accumulates gout(x) * d sample(vol, x+ddf(x)) / d ddf_c(x) into gddf.
void warp_vjp_position(const double* vol, const Dims& dims, const DisplacementField& ddf,
                       const double* gout, DisplacementField& gddf, double scale = 1.0);

// Adjoint w.r.t. the sampled volume: scatters gout(x) through the trilinear
// weights at x + ddf(x). Serial on purpose: the scatter order fixes the
// floating-point result independent of thread count.
void warp_vjp_volume(const Dims& dims, const DisplacementField& ddf, const double* gout,
                     double* gvol, double scale = 1.0);

} // namespace mas

#endif

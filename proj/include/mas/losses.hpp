#ifndef MAS_LOSSES_HPP
#define MAS_LOSSES_HPP

#include "mas/ddf.hpp"
#include "mas/volume.hpp"

namespace mas {

// Gaussian sigmas (voxels) for the multi-scale Dice. Must contain the native
// scale 0.
struct ScaleSet {
    std::vector<double> sigmas{0.0, 1.0, 2.0, 4.0};
    void validate() const;
};

struct LossBreakdown {
    double dice_term = 0.0; // dimensionless, in [-2, 0]
    double cons_term = 0.0; // per-voxel mean residual, so the weighted total
                            // stays commensurate with the Dice term
    double lambda = 0.0;
    double total = 0.0; // dice_term + lambda * cons_term
};

// Mean over foreground channels of 2*sum(pq) / (sum(p^2) + sum(q^2) + eps).
// Channel 0 is background and excluded; a background-only pair scores 1.
double soft_dice(const ProbVolume& p, const ProbVolume& q, double eps = 1e-7);

double multi_scale_dice(const ProbVolume& a, const ProbVolume& b, const ScaleSet& scales);
double multi_scale_dice(const LabelMap& a, const LabelMap& b, const ScaleSet& scales);

// -Ds(L_t, warped_atlas) - Ds(L_a, warped_target); minimum -2.
double dice_loss(const LabelMap& target_label, const ProbVolume& warped_atlas,
                 const LabelMap& atlas_label, const ProbVolume& warped_target,
                 const ScaleSet& scales);

struct ConsistencyResult {
    double sum = 0.0;       // sum over voxels of both L1 residual images
    double mean = 0.0;      // sum / voxel count
};

// Round-trip residual: warp I_a by U then V and compare with I_a, and the
// mirrored term for I_t.
ConsistencyResult consistency_loss(const Volume& I_a, const Volume& I_t,
                                   const DisplacementField& U, const DisplacementField& V);

LossBreakdown total_loss(double dice_term, double cons_term, double lambda);

// Joint evaluation of the registration loss and its gradients w.r.t. the two
// dense displacement fields. Fixed quantities (one-hot labels and their
// smoothed versions) are precomputed once.
class RegLossEvaluator {
public:
    RegLossEvaluator(const Volume& atlas_img, const LabelMap& atlas_label,
                     const Volume& target_img, const LabelMap& target_label, ScaleSet scales,
                     double lambda);

    LossBreakdown evaluate(const DisplacementField& U, const DisplacementField& V) const;

    // gU/gV are overwritten with dTotal/dU and dTotal/dV.
    LossBreakdown evaluate_with_grad(const DisplacementField& U, const DisplacementField& V,
                                     DisplacementField& gU, DisplacementField& gV) const;

    const Dims& dims() const { return dims_; }
    double lambda() const { return lambda_; }
    const ScaleSet& scales() const { return scales_; }
    int foreground_channels() const { return fg_channels_; }

private:
    LossBreakdown run(const DisplacementField& U, const DisplacementField& V,
                      DisplacementField* gU, DisplacementField* gV) const;

    Dims dims_;
    ScaleSet scales_;
    double lambda_;
    int fg_channels_;
    const Volume* atlas_img_;
    const Volume* target_img_;
    // foreground one-hot channels of atlas and target labels
    std::vector<std::vector<double>> fg_atlas_, fg_target_;
    // per scale, per foreground channel, smoothed fixed sides
    std::vector<std::vector<std::vector<double>>> smooth_target_, smooth_atlas_;
};

// Derivative of |r| with a linear region of half-width 1e-6 around zero.
inline double l1_derivative(double r) {
    constexpr double kWidth = 1e-6;
    if (r > kWidth) return 1.0;
    if (r < -kWidth) return -1.0;
    return r / kWidth;
}

} // namespace mas

#endif

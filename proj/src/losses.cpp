#include "mas/losses.hpp"

#include "mas/gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace mas {

namespace {

// Per-slice partial sums combined pairwise: the result is independent of how
// threads split the slices.
template <typename F>
double slice_sum(const Dims& dims, F&& per_voxel) {
    std::vector<double> partial(dims.nz, 0.0);
#pragma omp parallel for
    for (int z = 0; z < dims.nz; ++z) {
        double s = 0.0;
        std::size_t i = flat_index(dims, 0, 0, z);
        const std::size_t slice = static_cast<std::size_t>(dims.nx) * dims.ny;
        for (std::size_t k = 0; k < slice; ++k, ++i) s += per_voxel(i);
        partial[z] = s;
    }
    return pairwise_sum(partial);
}

struct DiceSums {
    double cross, pp, qq;
};

DiceSums dice_sums(const Dims& dims, const double* p, const double* q) {
    std::vector<double> pc(dims.nz, 0.0), pp(dims.nz, 0.0), pq(dims.nz, 0.0);
#pragma omp parallel for
    for (int z = 0; z < dims.nz; ++z) {
        double sc = 0.0, sp = 0.0, sq = 0.0;
        std::size_t i = flat_index(dims, 0, 0, z);
        const std::size_t slice = static_cast<std::size_t>(dims.nx) * dims.ny;
        for (std::size_t k = 0; k < slice; ++k, ++i) {
            sc += p[i] * q[i];
            sp += p[i] * p[i];
            sq += q[i] * q[i];
        }
        pc[z] = sc;
        pp[z] = sp;
        pq[z] = sq;
    }
    return {pairwise_sum(pc), pairwise_sum(pp), pairwise_sum(pq)};
}

constexpr double kDiceEps = 1e-7;

} // namespace

void ScaleSet::validate() const {
    if (sigmas.empty()) throw std::invalid_argument("ScaleSet: must not be empty");
    bool has_zero = false;
    for (double s : sigmas) {
        if (s < 0.0) throw std::invalid_argument("ScaleSet: sigmas must be >= 0");
        if (s == 0.0) has_zero = true;
    }
    if (!has_zero) throw std::invalid_argument("ScaleSet: must include the native scale 0");
}

double soft_dice(const ProbVolume& p, const ProbVolume& q, double eps) {
    if (p.channels != q.channels || !(p.dims == q.dims))
        throw std::invalid_argument("soft_dice: channel/dims mismatch");
    if (p.channels <= 1) return 1.0; // background-only label set
    double acc = 0.0;
    for (int c = 1; c < p.channels; ++c) {
        const DiceSums s = dice_sums(p.dims, p.channel(c), q.channel(c));
        acc += 2.0 * s.cross / (s.pp + s.qq + eps);
    }
    return acc / (p.channels - 1);
}

double multi_scale_dice(const ProbVolume& a, const ProbVolume& b, const ScaleSet& scales) {
    scales.validate();
    if (a.channels != b.channels || !(a.dims == b.dims))
        throw std::invalid_argument("multi_scale_dice: dims mismatch");
    double acc = 0.0;
    for (double sigma : scales.sigmas)
        acc += soft_dice(gaussian_smooth(a, sigma), gaussian_smooth(b, sigma));
    return acc / static_cast<double>(scales.sigmas.size());
}

double multi_scale_dice(const LabelMap& a, const LabelMap& b, const ScaleSet& scales) {
    if (!(a.dims == b.dims)) throw std::invalid_argument("multi_scale_dice: dims mismatch");
    if (a.label_set != b.label_set)
        throw std::invalid_argument("multi_scale_dice: label_set mismatch");
    return multi_scale_dice(one_hot(a), one_hot(b), scales);
}

double dice_loss(const LabelMap& target_label, const ProbVolume& warped_atlas,
                 const LabelMap& atlas_label, const ProbVolume& warped_target,
                 const ScaleSet& scales) {
    return -multi_scale_dice(one_hot(target_label), warped_atlas, scales) -
           multi_scale_dice(one_hot(atlas_label), warped_target, scales);
}

ConsistencyResult consistency_loss(const Volume& I_a, const Volume& I_t,
                                   const DisplacementField& U, const DisplacementField& V) {
    if (!(I_a.dims == I_t.dims) || !(I_a.dims == U.dims) || !(I_a.dims == V.dims))
        throw std::invalid_argument("consistency_loss: dims mismatch");
    const Volume restored_a = restore_roundtrip(I_a, U, V);
    const Volume restored_t = restore_roundtrip(I_t, V, U);
    const double sum = slice_sum(I_a.dims,
                                 [&](std::size_t i) {
                                     return std::abs(restored_a.data[i] - I_a.data[i]) +
                                            std::abs(restored_t.data[i] - I_t.data[i]);
                                 });
    return {sum, sum / static_cast<double>(I_a.dims.voxels())};
}

LossBreakdown total_loss(double dice_term, double cons_term, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be >= 0");
    LossBreakdown b;
    b.dice_term = dice_term;
    b.cons_term = cons_term;
    b.lambda = lambda;
    b.total = dice_term + lambda * cons_term;
    return b;
}

RegLossEvaluator::RegLossEvaluator(const Volume& atlas_img, const LabelMap& atlas_label,
                                   const Volume& target_img, const LabelMap& target_label,
                                   ScaleSet scales, double lambda)
    : dims_(atlas_img.dims), scales_(std::move(scales)), lambda_(lambda), atlas_img_(&atlas_img),
      target_img_(&target_img) {
    scales_.validate();
    if (lambda_ < 0.0) throw std::invalid_argument("RegLossEvaluator: lambda must be >= 0");
    if (!(atlas_img.dims == atlas_label.dims) || !(atlas_img.dims == target_img.dims) ||
        !(atlas_img.dims == target_label.dims))
        throw std::invalid_argument("RegLossEvaluator: dims mismatch");
    if (atlas_label.label_set != target_label.label_set)
        throw std::invalid_argument("RegLossEvaluator: label_set mismatch");

    const ProbVolume oh_a = one_hot(atlas_label);
    const ProbVolume oh_t = one_hot(target_label);
    fg_channels_ = oh_a.channels - 1;
    const std::size_t n = dims_.voxels();

    fg_atlas_.resize(fg_channels_);
    fg_target_.resize(fg_channels_);
    for (int c = 0; c < fg_channels_; ++c) {
        fg_atlas_[c].assign(oh_a.channel(c + 1), oh_a.channel(c + 1) + n);
        fg_target_[c].assign(oh_t.channel(c + 1), oh_t.channel(c + 1) + n);
    }

    const std::size_t ns = scales_.sigmas.size();
    smooth_target_.resize(ns);
    smooth_atlas_.resize(ns);
    for (std::size_t s = 0; s < ns; ++s) {
        smooth_target_[s].resize(fg_channels_);
        smooth_atlas_[s].resize(fg_channels_);
        for (int c = 0; c < fg_channels_; ++c) {
            smooth_target_[s][c] = fg_target_[c];
            gaussian_smooth_inplace(smooth_target_[s][c], dims_, scales_.sigmas[s]);
            smooth_atlas_[s][c] = fg_atlas_[c];
            gaussian_smooth_inplace(smooth_atlas_[s][c], dims_, scales_.sigmas[s]);
        }
    }
}

LossBreakdown RegLossEvaluator::evaluate(const DisplacementField& U,
                                         const DisplacementField& V) const {
    return run(U, V, nullptr, nullptr);
}

LossBreakdown RegLossEvaluator::evaluate_with_grad(const DisplacementField& U,
                                                   const DisplacementField& V,
                                                   DisplacementField& gU,
                                                   DisplacementField& gV) const {
    gU = DisplacementField(dims_);
    gV = DisplacementField(dims_);
    return run(U, V, &gU, &gV);
}

LossBreakdown RegLossEvaluator::run(const DisplacementField& U, const DisplacementField& V,
                                    DisplacementField* gU, DisplacementField* gV) const {
    if (!(U.dims == dims_) || !(V.dims == dims_))
        throw std::invalid_argument("RegLossEvaluator: field dims mismatch");
    const std::size_t n = dims_.voxels();
    const std::size_t ns = scales_.sigmas.size();
    const double scale_norm = 1.0 / static_cast<double>(ns);
    const double chan_norm = fg_channels_ > 0 ? 1.0 / fg_channels_ : 0.0;

    // One direction of the symmetric Dice term: warp the moving one-hot
    // channels, compare against precomputed smoothed fixed channels, and
    // backpropagate through smoothing and warping into gfield.
    auto dice_direction = [&](const std::vector<std::vector<double>>& moving_fg,
                              const std::vector<std::vector<std::vector<double>>>& fixed_smooth,
                              const DisplacementField& field,
                              DisplacementField* gfield) -> double {
        if (fg_channels_ == 0) return 1.0;
        double acc = 0.0;
        std::vector<double> warped(n), smoothed(n), grad_warped, grad_buf;
        if (gfield) grad_warped.assign(n, 0.0);
        for (int c = 0; c < fg_channels_; ++c) {
            // warp moving channel c
#pragma omp parallel for
            for (int z = 0; z < dims_.nz; ++z)
                for (int y = 0; y < dims_.ny; ++y)
                    for (int x = 0; x < dims_.nx; ++x) {
                        const std::size_t i = flat_index(dims_, x, y, z);
                        warped[i] = sample_trilinear(moving_fg[c].data(), dims_, x + field.ux[i],
                                                     y + field.uy[i], z + field.uz[i]);
                    }
            if (gfield) std::fill(grad_warped.begin(), grad_warped.end(), 0.0);
            for (std::size_t s = 0; s < ns; ++s) {
                const double sigma = scales_.sigmas[s];
                const double* q = fixed_smooth[s][c].data();
                const double* p;
                if (sigma == 0.0) {
                    p = warped.data();
                } else {
                    smoothed = warped;
                    gaussian_smooth_inplace(smoothed, dims_, sigma);
                    p = smoothed.data();
                }
                const DiceSums sums = dice_sums(dims_, p, q);
                const double denom = sums.pp + sums.qq + kDiceEps;
                const double dice = 2.0 * sums.cross / denom;
                acc += dice * scale_norm * chan_norm;
                if (gfield) {
                    // d dice / d p_i = (2 q_i - dice * 2 p_i) / denom
                    grad_buf.assign(n, 0.0);
                    const double w = scale_norm * chan_norm;
#pragma omp parallel for
                    for (long long i = 0; i < static_cast<long long>(n); ++i)
                        grad_buf[i] = w * (2.0 * q[i] - dice * 2.0 * p[i]) / denom;
                    if (sigma != 0.0) gaussian_smooth_adjoint_inplace(grad_buf, dims_, sigma);
#pragma omp parallel for
                    for (long long i = 0; i < static_cast<long long>(n); ++i)
                        grad_warped[i] += grad_buf[i];
                }
            }
            if (gfield) {
                // Dice enters the loss negated; flip sign on the way to the field.
#pragma omp parallel for
                for (long long i = 0; i < static_cast<long long>(n); ++i)
                    grad_warped[i] = -grad_warped[i];
                warp_vjp_position(moving_fg[c].data(), dims_, field, grad_warped.data(), *gfield);
            }
        }
        return acc;
    };

    const double dice_a = dice_direction(fg_atlas_, smooth_target_, U, gU);
    const double dice_t = dice_direction(fg_target_, smooth_atlas_, V, gV);
    const double dice_term = -dice_a - dice_t;

    // Consistency: restore each image through its round trip.
    const Volume tilde_a = warp_scalar(*atlas_img_, U);
    const Volume restored_a = warp_scalar(tilde_a, V);
    const Volume tilde_t = warp_scalar(*target_img_, V);
    const Volume restored_t = warp_scalar(tilde_t, U);

    const double cons_sum = slice_sum(dims_, [&](std::size_t i) {
        return std::abs(restored_a.data[i] - atlas_img_->data[i]) +
               std::abs(restored_t.data[i] - target_img_->data[i]);
    });
    const double cons_mean = cons_sum / static_cast<double>(n);

    if (gU && lambda_ > 0.0) {
        const double w = lambda_ / static_cast<double>(n);
        std::vector<double> sgn(n), gtilde(n, 0.0);
        // atlas term: residual r_a = warp(tilde_a, V) - I_a
#pragma omp parallel for
        for (long long i = 0; i < static_cast<long long>(n); ++i)
            sgn[i] = l1_derivative(restored_a.data[i] - atlas_img_->data[i]);
        warp_vjp_position(tilde_a.data.data(), dims_, V, sgn.data(), *gV, w);
        warp_vjp_volume(dims_, V, sgn.data(), gtilde.data(), w);
        warp_vjp_position(atlas_img_->data.data(), dims_, U, gtilde.data(), *gU);

        // target term: residual r_t = warp(tilde_t, U) - I_t
#pragma omp parallel for
        for (long long i = 0; i < static_cast<long long>(n); ++i)
            sgn[i] = l1_derivative(restored_t.data[i] - target_img_->data[i]);
        std::fill(gtilde.begin(), gtilde.end(), 0.0);
        warp_vjp_position(tilde_t.data.data(), dims_, U, sgn.data(), *gU, w);
        warp_vjp_volume(dims_, U, sgn.data(), gtilde.data(), w);
        warp_vjp_position(target_img_->data.data(), dims_, V, gtilde.data(), *gV);
    }

    return total_loss(dice_term, cons_mean, lambda_);
}

} // namespace mas

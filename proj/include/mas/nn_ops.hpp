#ifndef MAS_NN_OPS_HPP
#define MAS_NN_OPS_HPP

#include "mas/core.hpp"
#include "mas/volume.hpp"

#include <functional>

namespace mas {

// Channel-major multi-channel grid for the gating ops.
struct FeatureMap {
    int channels = 0;
    Dims dims;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int c, Dims d) : channels(c), dims(d), data(d.voxels() * static_cast<std::size_t>(c), 0.0) {}

    double* channel(int c) { return data.data() + static_cast<std::size_t>(c) * dims.voxels(); }
    const double* channel(int c) const {
        return data.data() + static_cast<std::size_t>(c) * dims.voxels();
    }
    double& at(int c, std::size_t i) { return data[static_cast<std::size_t>(c) * dims.voxels() + i]; }
    double at(int c, std::size_t i) const {
        return data[static_cast<std::size_t>(c) * dims.voxels() + i];
    }
};

// Per-voxel 1x1x1 linear maps of the gate: g-path (c_g -> c_i), f-path
// (c_f -> c_i), collapse (c_i -> 1), each with its own bias. Parameters are
// packed into a single flat vector so the finite-difference harness can walk
// them uniformly.
struct GateParams {
    int c_g = 0, c_f = 0, c_i = 0;
    std::vector<double> values; // [w_g (c_i*c_g) | b_g (c_i) | w_f (c_i*c_f) | b_f (c_i) | w_c (c_i) | b_c (1)]

    GateParams() = default;
    GateParams(int cg, int cf, int ci)
        : c_g(cg), c_f(cf), c_i(ci),
          values(static_cast<std::size_t>(ci) * cg + ci + static_cast<std::size_t>(ci) * cf + ci + ci + 1, 0.0) {}

    std::size_t count() const { return values.size(); }
    double* w_g() { return values.data(); }
    double* b_g() { return values.data() + static_cast<std::size_t>(c_i) * c_g; }
    double* w_f() { return b_g() + c_i; }
    double* b_f() { return w_f() + static_cast<std::size_t>(c_i) * c_f; }
    double* w_c() { return b_f() + c_i; }
    double* b_c() { return w_c() + c_i; }
    const double* w_g() const { return values.data(); }
    const double* b_g() const { return values.data() + static_cast<std::size_t>(c_i) * c_g; }
    const double* w_f() const { return b_g() + c_i; }
    const double* b_f() const { return w_f() + static_cast<std::size_t>(c_i) * c_f; }
    const double* w_c() const { return b_f() + c_i; }
    const double* b_c() const { return w_c() + c_i; }
};

// Aligned-corners trilinear upsampling by an integer factor; output dims are
// input dims * factor and endpoints are preserved exactly.
FeatureMap trilinear_upsample(const FeatureMap& x, int factor);

// alpha = sigmoid(w_c . relu(W_g up(g) + b_g + W_f f + b_f) + b_c), one channel,
// strictly inside (0, 1). g is upsampled by 2 and must then match f's grid.
FeatureMap attention_coefficients(const FeatureMap& g, const FeatureMap& f, const GateParams& p);

// f_hat = f (*) alpha, the single alpha channel broadcast across f's channels.
FeatureMap apply_gate(const FeatureMap& f, const FeatureMap& alpha);

// d(readout)/d(params) for readout = sum(projection (*) alpha(g, f, params)).
std::vector<double> attention_param_grad(const FeatureMap& g, const FeatureMap& f,
                                         const GateParams& p, const FeatureMap& projection);

// Central finite-difference check of an analytic gradient at a probe point.
// Returns the maximum relative error over parameters. value(theta) must be a
// pure function; grad is its claimed gradient at the probe.
double grad_check(const std::function<double(std::span<const double>)>& value,
                  std::span<const double> analytic_grad, std::vector<double> probe,
                  double step = 1e-4);

// One channel as a scalar volume, e.g. to dump attention coefficients to
// ".mvol" for inspection.
Volume feature_channel_volume(const FeatureMap& map, int channel,
                              const Vec3& spacing = {1.0, 1.0, 1.0});

} // namespace mas

#endif

#include "mas/registration.hpp"

#include "mas/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace mas {

void RegistrationConfig::validate() const {
    if (lambda < 0.0) throw std::invalid_argument("RegistrationConfig: lambda must be >= 0");
    if (control_spacing < 1)
        throw std::invalid_argument("RegistrationConfig: control_spacing must be >= 1");
    if (iterations < 1) throw std::invalid_argument("RegistrationConfig: iterations must be >= 1");
    if (step_size <= 0.0) throw std::invalid_argument("RegistrationConfig: step_size must be > 0");
    scales.validate();
}

ControlGrid ControlGrid::for_dims(const Dims& dims, int control_spacing) {
    auto nodes_for = [control_spacing](int n) {
        return (n - 1) / control_spacing + 2;
    };
    ControlGrid g;
    g.spacing = control_spacing;
    g.nodes = {nodes_for(dims.nx), nodes_for(dims.ny), nodes_for(dims.nz)};
    return g;
}

RegistrationState RegistrationState::zero_init(const Dims& dims, int control_spacing) {
    RegistrationState s;
    s.grid = ControlGrid::for_dims(dims, control_spacing);
    s.field_dims = dims;
    s.params.assign(2 * s.grid.param_count(), 0.0);
    s.moment1.assign(s.params.size(), 0.0);
    s.moment2.assign(s.params.size(), 0.0);
    return s;
}

namespace {

// params layout per field: component-major, c * nodes + node_index
void expand_field(const double* params, const ControlGrid& grid, const Dims& dims,
                  DisplacementField& out) {
    const std::size_t nn = grid.node_count();
    const double inv_s = 1.0 / grid.spacing;
    std::array<const double*, 3> comp = {params, params + nn, params + 2 * nn};
    std::array<std::vector<double>*, 3> dst = {&out.ux, &out.uy, &out.uz};

#pragma omp parallel for
    for (int z = 0; z < dims.nz; ++z) {
        const double pz = z * inv_s;
        const int k0 = static_cast<int>(pz);
        const double fz = pz - k0;
        for (int y = 0; y < dims.ny; ++y) {
            const double py = y * inv_s;
            const int j0 = static_cast<int>(py);
            const double fy = py - j0;
            for (int x = 0; x < dims.nx; ++x) {
                const double px = x * inv_s;
                const int i0 = static_cast<int>(px);
                const double fx = px - i0;
                const std::size_t vox = flat_index(dims, x, y, z);
                for (int c = 0; c < 3; ++c) {
                    auto node = [&](int di, int dj, int dk) {
                        return comp[c][flat_index(grid.nodes, i0 + di, j0 + dj, k0 + dk)];
                    };
                    const double c00 = node(0, 0, 0) * (1 - fx) + node(1, 0, 0) * fx;
                    const double c10 = node(0, 1, 0) * (1 - fx) + node(1, 1, 0) * fx;
                    const double c01 = node(0, 0, 1) * (1 - fx) + node(1, 0, 1) * fx;
                    const double c11 = node(0, 1, 1) * (1 - fx) + node(1, 1, 1) * fx;
                    (*dst[c])[vox] = (c00 * (1 - fy) + c10 * fy) * (1 - fz) +
                                     (c01 * (1 - fy) + c11 * fy) * fz;
                }
            }
        }
    }
}

// Gather the expansion adjoint per node over its +-spacing support.
void field_vjp(const DisplacementField& g, const ControlGrid& grid, const Dims& dims,
               double* gparams) {
    const std::size_t nn = grid.node_count();
    const int s = grid.spacing;
    std::array<const std::vector<double>*, 3> comp = {&g.ux, &g.uy, &g.uz};

#pragma omp parallel for collapse(2)
    for (int nk = 0; nk < grid.nodes.nz; ++nk) {
        for (int nj = 0; nj < grid.nodes.ny; ++nj) {
            for (int ni = 0; ni < grid.nodes.nx; ++ni) {
                const int cx = ni * s, cy = nj * s, cz = nk * s;
                const int x0 = std::max(0, cx - s + 1), x1 = std::min(dims.nx - 1, cx + s - 1);
                const int y0 = std::max(0, cy - s + 1), y1 = std::min(dims.ny - 1, cy + s - 1);
                const int z0 = std::max(0, cz - s + 1), z1 = std::min(dims.nz - 1, cz + s - 1);
                double acc[3] = {0.0, 0.0, 0.0};
                for (int z = z0; z <= z1; ++z) {
                    const double wz = 1.0 - std::abs(z - cz) / static_cast<double>(s);
                    for (int y = y0; y <= y1; ++y) {
                        const double wyz = wz * (1.0 - std::abs(y - cy) / static_cast<double>(s));
                        for (int x = x0; x <= x1; ++x) {
                            const double w =
                                wyz * (1.0 - std::abs(x - cx) / static_cast<double>(s));
                            const std::size_t vox = flat_index(dims, x, y, z);
                            acc[0] += w * (*comp[0])[vox];
                            acc[1] += w * (*comp[1])[vox];
                            acc[2] += w * (*comp[2])[vox];
                        }
                    }
                }
                const std::size_t node = flat_index(grid.nodes, ni, nj, nk);
                for (int c = 0; c < 3; ++c) gparams[c * nn + node] += acc[c];
            }
        }
    }
}

} // namespace

void expand_control_grid(const RegistrationState& state, DisplacementField& U,
                         DisplacementField& V) {
    U = DisplacementField(state.field_dims);
    V = DisplacementField(state.field_dims);
    expand_field(state.params.data(), state.grid, state.field_dims, U);
    expand_field(state.params.data() + state.per_field(), state.grid, state.field_dims, V);
}

DisplacementField expand_node_field(const std::vector<double>& params, const ControlGrid& grid,
                                    const Dims& dims) {
    if (params.size() != grid.param_count())
        throw std::invalid_argument("expand_node_field: parameter count mismatch");
    DisplacementField out(dims);
    expand_field(params.data(), grid, dims, out);
    return out;
}

void control_grid_vjp(const RegistrationState& state, const DisplacementField& gU,
                      const DisplacementField& gV, std::vector<double>& gparams) {
    gparams.assign(state.params.size(), 0.0);
    field_vjp(gU, state.grid, state.field_dims, gparams.data());
    field_vjp(gV, state.grid, state.field_dims, gparams.data() + state.per_field());
}

void gradient_step(RegistrationState& state, const std::vector<double>& grads,
                   const RegistrationConfig& config, double step_scale) {
    if (grads.size() != state.params.size())
        throw std::invalid_argument("gradient_step: gradient size mismatch");
    const double kEps = config.epsilon;
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step_count));
    const double lr = config.step_size * step_scale;
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(grads.size()); ++i) {
        const double g = grads[i];
        state.moment1[i] = config.beta1 * state.moment1[i] + (1.0 - config.beta1) * g;
        state.moment2[i] = config.beta2 * state.moment2[i] + (1.0 - config.beta2) * g * g;
        const double m_hat = state.moment1[i] / bc1;
        const double v_hat = state.moment2[i] / bc2;
        state.params[i] -= lr * m_hat / (std::sqrt(v_hat) + kEps);
    }
}

RegistrationResult register_bidirectional(const Volume& atlas_img, const LabelMap& atlas_label,
                                          const Volume& target_img, const LabelMap& target_label,
                                          const RegistrationConfig& config) {
    config.validate();
    if (!(atlas_img.dims == target_img.dims))
        throw std::invalid_argument("register_bidirectional: image dims mismatch");

    const RegLossEvaluator loss(atlas_img, atlas_label, target_img, target_label, config.scales,
                                config.lambda);

    RegistrationState state = RegistrationState::zero_init(atlas_img.dims, config.control_spacing);
    RegistrationState best_state = state;

    DisplacementField U, V, gU, gV;
    std::vector<double> gparams;

    expand_control_grid(state, U, V);
    LossBreakdown current = loss.evaluate_with_grad(U, V, gU, gV);
    control_grid_vjp(state, gU, gV, gparams);

    constexpr double kAcceptTol = 1e-6;
    double best_total = current.total;
    int best_iteration = 0;
    double step_scale = 1.0;

    RegistrationResult result;
    result.trace.reserve(config.iterations);

    for (int iter = 0; iter < config.iterations; ++iter) {
        if (std::isnan(current.total))
            throw diverged_error("register_bidirectional: NaN loss at iteration " +
                                     std::to_string(iter),
                                 iter);
        result.trace.push_back(current);
        if (current.total < best_total) {
            best_total = current.total;
            best_state = state;
            best_iteration = iter;
        }
        if (step_scale < 1e-12) continue; // converged; keep logging the plateau

        RegistrationState trial = state;
        gradient_step(trial, gparams, config, step_scale);

        DisplacementField tU, tV;
        expand_control_grid(trial, tU, tV);
        DisplacementField tgU, tgV;
        const LossBreakdown trial_loss = loss.evaluate_with_grad(tU, tV, tgU, tgV);

        if (trial_loss.total <= current.total + kAcceptTol) {
            state = std::move(trial);
            current = trial_loss;
            control_grid_vjp(state, tgU, tgV, gparams);
            step_scale = std::min(1.0, step_scale * 1.25);
        } else {
            step_scale *= 0.5;
        }
    }
    if (current.total < best_total) {
        best_total = current.total;
        best_state = state;
        best_iteration = config.iterations;
    }

    expand_control_grid(best_state, result.U, result.V);
    result.U.spacing = atlas_img.spacing;
    result.V.spacing = atlas_img.spacing;
    result.best_iteration = best_iteration;

    const LabelMap warped = warp_label(atlas_label, result.U);
    double acc = 0.0;
    int count = 0;
    for (std::int16_t l : target_label.label_set) {
        if (l == 0) continue;
        acc += dice_score(warped, target_label, l);
        ++count;
    }
    result.final_dice = count > 0 ? acc / count : 100.0;
    return result;
}

} // namespace mas

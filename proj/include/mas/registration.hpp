#ifndef MAS_REGISTRATION_HPP
#define MAS_REGISTRATION_HPP

#include "mas/losses.hpp"

#include <cstdint>

namespace mas {

struct RegistrationConfig {
    double lambda = 0.1;
    ScaleSet scales;
    int control_spacing = 4; // voxels between control nodes
    int iterations = 300;
    double step_size = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    // Floor on sqrt(second moment). Coordinates whose gradients sit far below
    // this scale barely move, so noise-level gradients cannot trigger
    // full-size steps under the moment normalization.
    double epsilon = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;
};

// Control lattice covering a voxel grid: node (i,j,k) sits at voxel
// coordinate (i,j,k) * spacing; one extra node per axis covers the tail.
struct ControlGrid {
    Dims nodes;
    int spacing = 1;

    static ControlGrid for_dims(const Dims& dims, int control_spacing);
    std::size_t node_count() const { return nodes.voxels(); }
    std::size_t param_count() const { return 3 * node_count(); } // per field
};

// Flat parameter block: [U params | V params], each 3 components per node in
// component-major order, plus first/second moment accumulators.
struct RegistrationState {
    ControlGrid grid;
    Dims field_dims;
    std::vector<double> params;
    std::vector<double> moment1, moment2;
    std::int64_t step_count = 0;

    static RegistrationState zero_init(const Dims& dims, int control_spacing);
    std::size_t per_field() const { return grid.param_count(); }
};

// Dense fields by trilinear interpolation of control-node displacements;
// exact at the nodes.
void expand_control_grid(const RegistrationState& state, DisplacementField& U,
                         DisplacementField& V);

// Expansion of a single node-parameter block (3 * node_count values,
// component-major) to a dense field.
DisplacementField expand_node_field(const std::vector<double>& params, const ControlGrid& grid,
                                    const Dims& dims);

// Adjoint of the expansion: accumulate dense-field gradients onto control
// parameters. Gathers per node, so it parallelizes deterministically.
void control_grid_vjp(const RegistrationState& state, const DisplacementField& gU,
                      const DisplacementField& gV, std::vector<double>& gparams);

// Bias-corrected first/second moment update (Adam). step_scale multiplies the
// configured step size; pass 1.0 for the plain rule.
void gradient_step(RegistrationState& state, const std::vector<double>& grads,
                   const RegistrationConfig& config, double step_scale = 1.0);

struct RegistrationResult {
    DisplacementField U, V;
    std::vector<LossBreakdown> trace; // trace[i] = accepted loss entering iteration i
    double final_dice = 0.0;          // mean foreground Dice (%) of warped atlas label vs target
    int best_iteration = 0;
};

// Jointly optimizes forward/backward control-grid DDFs by accepted-step Adam:
// a trial step is kept only if the total loss does not increase beyond 1e-6,
// otherwise the step scale halves. The best-loss iterate is returned.
RegistrationResult register_bidirectional(const Volume& atlas_img, const LabelMap& atlas_label,
                                          const Volume& target_img, const LabelMap& target_label,
                                          const RegistrationConfig& config);

} // namespace mas

#endif

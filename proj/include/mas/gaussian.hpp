#ifndef MAS_GAUSSIAN_HPP
#define MAS_GAUSSIAN_HPP

#include "mas/core.hpp"
#include "mas/volume.hpp"

namespace mas {

// Discrete Gaussian taps for radius ceil(3*sigma), normalized to sum 1.
std::vector<double> gaussian_kernel(double sigma);

// Separable smoothing with per-position renormalization over the in-bounds
// taps, so constants are reproduced exactly at borders. sigma == 0 is the
// identity.
void gaussian_smooth_inplace(std::vector<double>& data, const Dims& dims, double sigma);

Volume gaussian_smooth(const Volume& vol, double sigma);
ProbVolume gaussian_smooth(const ProbVolume& vol, double sigma);

// Adjoint of gaussian_smooth under the standard inner product: the exact
// transpose of the border-renormalized operator, applied axis passes in
// reverse order. Needed to back-propagate through the multi-scale smoothing.
void gaussian_smooth_adjoint_inplace(std::vector<double>& data, const Dims& dims, double sigma);

} // namespace mas

#endif

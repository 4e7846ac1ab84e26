#ifndef MAS_SERIAL_REF_HPP
#define MAS_SERIAL_REF_HPP

#include "mas/ddf.hpp"
#include "mas/similarity.hpp"
#include "mas/volume.hpp"

#include <array>

namespace mas::serial {

// Straight-line single-threaded implementations of the parallel kernels.
// They are the reference the OpenMP paths are tested against, and the
// baseline the benchmark tool compares.

Volume warp_scalar(const Volume& vol, const DisplacementField& ddf);

Volume gaussian_smooth(const Volume& vol, double sigma);

SimilarityMap ground_truth_similarity(const LabelMap& warped_atlas, const LabelMap& target,
                                      const PatchSpec& patch);

LabelMap majority_vote(const std::vector<const LabelMap*>& labels);

// All-pairs surface distances; independent of the distance-transform route
// used by the metrics module, and the oracle its tests compare against.
double asd_allpairs(const LabelMap& a, const LabelMap& b, std::int16_t label);
double hausdorff_allpairs(const LabelMap& a, const LabelMap& b, std::int16_t label);

} // namespace mas::serial

#endif

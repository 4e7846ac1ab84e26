#ifndef MAS_FUSION_HPP
#define MAS_FUSION_HPP

#include "mas/similarity.hpp"
#include "mas/volume.hpp"

namespace mas {

struct FusionInput {
    // parallel lists; weights[i] applies to labels[i]
    std::vector<const LabelMap*> labels;
    std::vector<const SimilarityMap*> weights;
};

// Locally weighted fusion: per voxel, the label with the largest summed
// weight wins; ties go to the lowest label value.
LabelMap lwf_fuse(const FusionInput& input);

// Per-voxel mode; ties go to the lowest label value.
LabelMap majority_vote(const std::vector<const LabelMap*>& labels);

} // namespace mas

#endif

#ifndef MAS_SIMILARITY_HPP
#define MAS_SIMILARITY_HPP

#include "mas/volume.hpp"

#include <filesystem>

namespace mas {

// Per-voxel fusion weights in [0, 1], on the target grid.
using SimilarityMap = Volume;

struct PatchSpec {
    int radius = 1; // 3x3x3
    void validate() const;
};

// Fraction of the local patch on which the two label maps agree. Border
// patches shrink to the in-bounds intersection and divide by its true count.
SimilarityMap ground_truth_similarity(const LabelMap& warped_atlas, const LabelMap& target,
                                      const PatchSpec& patch);

struct SimilarityFeatureConfig {
    std::vector<double> scales{0.0, 1.0, 2.0, 4.0};
    std::vector<std::int16_t> label_set{0};

    // Feature order per voxel:
    //   [per scale, per label channel: smoothed one-hot of the warped label]
    //   [per scale: local mean of the target image]
    //   [per scale: local standard deviation of the target image]
    //   [per scale, per label channel: smoothed one-hot * local mean]
    // The product block lets the linear head score label/intensity
    // compatibility, which separates candidates that disagree at a voxel.
    std::size_t feature_count() const {
        return scales.size() * (2 * label_set.size() + 2);
    }
    bool operator==(const SimilarityFeatureConfig&) const = default;
};

// One column-major feature matrix: features[f * voxels + i].
std::vector<double> extract_features(const Volume& target_img, const LabelMap& warped_atlas,
                                     const SimilarityFeatureConfig& config);

// Logistic model over the multi-scale feature stack.
struct SimilarityModel {
    SimilarityFeatureConfig features;
    std::vector<double> weights; // feature_count entries
    double bias = 0.0;

    void save(const std::filesystem::path& path) const;
    static SimilarityModel load(const std::filesystem::path& path);
};

struct SimilarityTrainConfig {
    SimilarityFeatureConfig features;
    PatchSpec patch;          // for the agreement targets
    int iterations = 200;
    double initial_step = 1.0; // backtracking halves on loss increase
    bool class_balance = false;
};

struct SimilarityTrainingPair {
    const Volume* target_img;
    const LabelMap* warped_atlas;
    const LabelMap* target_label;
};

struct SimilarityTrainResult {
    SimilarityModel model;
    std::vector<double> loss_trace; // mean cross-entropy per accepted iterate
};

// Deterministic full-batch gradient descent on the voxel-wise cross entropy
// against patch-agreement targets. The zero model scores exactly ln 2.
SimilarityTrainResult train_similarity(const std::vector<SimilarityTrainingPair>& pairs,
                                       const SimilarityTrainConfig& config, std::uint64_t seed);

SimilarityMap predict_similarity(const SimilarityModel& model, const Volume& target_img,
                                 const LabelMap& warped_atlas);

double cross_entropy(const SimilarityMap& predicted, const SimilarityMap& target);

// Per-voxel mutual information (bits) of the joint intensity histogram over a
// local patch, min-max binned per patch, rescaled to [0,1] by the volume max.
SimilarityMap mi_patch_similarity(const Volume& target_img, const Volume& warped_atlas_img,
                                  const PatchSpec& patch, int bins = 16);

} // namespace mas

#endif

#ifndef MAS_METRICS_HPP
#define MAS_METRICS_HPP

#include "mas/volume.hpp"

#include <cstdint>

namespace mas {

struct LabelMetrics {
    std::int16_t label = 0;
    double dice = 0.0;      // percent
    double asd = 0.0;       // mm
    double hausdorff = 0.0; // mm
    double volume_diff = 0.0; // mL
};

struct MetricReport {
    std::vector<LabelMetrics> rows;

    std::string to_csv() const;
    std::string to_json() const;
    double mean_dice() const;
};

// 100 * 2|A and B| / (|A| + |B|); 100 when both masks are empty.
double dice_score(const LabelMap& a, const LabelMap& b, std::int16_t label);

// Mean symmetric distance (mm) between the six-connected surface voxel sets.
double asd(const LabelMap& a, const LabelMap& b, std::int16_t label);

// Exact symmetric Hausdorff distance (mm) between the surface voxel sets.
double hausdorff(const LabelMap& a, const LabelMap& b, std::int16_t label);

// |count_a - count_b| * voxel volume, in mL.
double volume_difference(const LabelMap& a, const LabelMap& b, std::int16_t label);

// Report over every foreground label of the gold map.
MetricReport evaluate_labels(const LabelMap& predicted, const LabelMap& gold);

// Foreground voxels with at least one six-connected background neighbor
// (out-of-grid counts as background). Exposed for the surface-based metrics
// and their tests.
std::vector<std::array<int, 3>> surface_voxels(const LabelMap& m, std::int16_t label);

} // namespace mas

#endif

#include "mas/fusion.hpp"

#include <algorithm>
#include <stdexcept>

namespace mas {

namespace {

std::vector<std::int16_t> merged_label_set(const std::vector<const LabelMap*>& labels) {
    std::vector<std::int16_t> all;
    for (const LabelMap* m : labels)
        all.insert(all.end(), m->label_set.begin(), m->label_set.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
}

void check_stack(const std::vector<const LabelMap*>& labels, const char* who) {
    if (labels.empty()) throw std::invalid_argument(std::string(who) + ": empty input");
    for (const LabelMap* m : labels)
        if (!(m->dims == labels.front()->dims))
            throw std::invalid_argument(std::string(who) + ": dims mismatch");
}

} // namespace

LabelMap lwf_fuse(const FusionInput& input) {
    check_stack(input.labels, "lwf_fuse");
    if (input.weights.size() != input.labels.size())
        throw std::invalid_argument("lwf_fuse: weight/label count mismatch");
    for (const SimilarityMap* w : input.weights)
        if (!(w->dims == input.labels.front()->dims))
            throw std::invalid_argument("lwf_fuse: weight dims mismatch");

    const std::vector<std::int16_t> label_set = merged_label_set(input.labels);
    const int k = static_cast<int>(label_set.size());
    const LabelMap& ref = *input.labels.front();
    LabelMap out(ref.dims);
    out.spacing = ref.spacing;
    out.origin = ref.origin;
    out.label_set = label_set;
    const std::size_t n = ref.dims.voxels();
    const int num_atlases = static_cast<int>(input.labels.size());

#pragma omp parallel
    {
        std::vector<double> score(k);
#pragma omp for
        for (long long i = 0; i < static_cast<long long>(n); ++i) {
            std::fill(score.begin(), score.end(), 0.0);
            for (int a = 0; a < num_atlases; ++a) {
                const std::int16_t l = input.labels[a]->labels[i];
                const int c = static_cast<int>(
                    std::lower_bound(label_set.begin(), label_set.end(), l) - label_set.begin());
                score[c] += input.weights[a]->data[i];
            }
            int best = 0;
            for (int c = 1; c < k; ++c)
                if (score[c] > score[best]) best = c;
            out.labels[i] = label_set[best];
        }
    }
    return out;
}

LabelMap majority_vote(const std::vector<const LabelMap*>& labels) {
    check_stack(labels, "majority_vote");
    const std::vector<std::int16_t> label_set = merged_label_set(labels);
    const int k = static_cast<int>(label_set.size());
    const LabelMap& ref = *labels.front();
    LabelMap out(ref.dims);
    out.spacing = ref.spacing;
    out.origin = ref.origin;
    out.label_set = label_set;
    const std::size_t n = ref.dims.voxels();
    const int num_atlases = static_cast<int>(labels.size());

#pragma omp parallel
    {
        std::vector<int> votes(k);
#pragma omp for
        for (long long i = 0; i < static_cast<long long>(n); ++i) {
            std::fill(votes.begin(), votes.end(), 0);
            for (int a = 0; a < num_atlases; ++a) {
                const std::int16_t l = labels[a]->labels[i];
                const int c = static_cast<int>(
                    std::lower_bound(label_set.begin(), label_set.end(), l) - label_set.begin());
                ++votes[c];
            }
            int best = 0;
            for (int c = 1; c < k; ++c)
                if (votes[c] > votes[best]) best = c;
            out.labels[i] = label_set[best];
        }
    }
    return out;
}

} // namespace mas

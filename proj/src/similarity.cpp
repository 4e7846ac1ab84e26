#include "mas/similarity.hpp"

#include "mas/gaussian.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace mas {

namespace {
constexpr double kPosInf = std::numeric_limits<double>::infinity();
}

void PatchSpec::validate() const {
    if (radius < 0) throw std::invalid_argument("PatchSpec: radius must be >= 0");
}

SimilarityMap ground_truth_similarity(const LabelMap& warped_atlas, const LabelMap& target,
                                      const PatchSpec& patch) {
    if (!(warped_atlas.dims == target.dims))
        throw std::invalid_argument("ground_truth_similarity: dims mismatch");
    patch.validate();
    const Dims d = target.dims;
    SimilarityMap out;
    out.dims = d;
    out.spacing = target.spacing;
    out.origin = target.origin;
    out.data.assign(d.voxels(), 0.0);
    const int r = patch.radius;
#pragma omp parallel for
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                int agree = 0, count = 0;
                const int z0 = std::max(0, z - r), z1 = std::min(d.nz - 1, z + r);
                const int y0 = std::max(0, y - r), y1 = std::min(d.ny - 1, y + r);
                const int x0 = std::max(0, x - r), x1 = std::min(d.nx - 1, x + r);
                for (int k = z0; k <= z1; ++k)
                    for (int j = y0; j <= y1; ++j)
                        for (int i = x0; i <= x1; ++i) {
                            ++count;
                            agree += warped_atlas.at(i, j, k) == target.at(i, j, k);
                        }
                out.at(x, y, z) = static_cast<double>(agree) / static_cast<double>(count);
            }
    return out;
}

std::vector<double> extract_features(const Volume& target_img, const LabelMap& warped_atlas,
                                     const SimilarityFeatureConfig& config) {
    if (!(target_img.dims == warped_atlas.dims))
        throw std::invalid_argument("extract_features: dims mismatch");
    if (warped_atlas.label_set != config.label_set)
        throw std::invalid_argument("extract_features: label_set mismatch with feature config");
    const Dims d = target_img.dims;
    const std::size_t n = d.voxels();
    const std::size_t nf = config.feature_count();
    std::vector<double> features(nf * n, 0.0);

    const ProbVolume oh = one_hot(warped_atlas);
    std::size_t fi = 0;

    // smoothed one-hot channels, scale-major
    for (double sigma : config.scales) {
        for (int c = 0; c < oh.channels; ++c, ++fi) {
            std::vector<double> ch(oh.channel(c), oh.channel(c) + n);
            gaussian_smooth_inplace(ch, d, sigma);
            std::copy(ch.begin(), ch.end(), features.begin() + fi * n);
        }
    }
    // local mean of the target image per scale
    for (double sigma : config.scales) {
        std::vector<double> mean = target_img.data;
        gaussian_smooth_inplace(mean, d, sigma);
        std::copy(mean.begin(), mean.end(), features.begin() + fi * n);
        ++fi;
    }
    // local standard deviation per scale: sqrt(E[x^2] - E[x]^2), clamped at 0
    for (double sigma : config.scales) {
        std::vector<double> mean = target_img.data;
        gaussian_smooth_inplace(mean, d, sigma);
        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) sq[i] = target_img.data[i] * target_img.data[i];
        gaussian_smooth_inplace(sq, d, sigma);
        double* dst = features.data() + fi * n;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = sq[i] - mean[i] * mean[i];
            dst[i] = v > 0.0 ? std::sqrt(v) : 0.0;
        }
        ++fi;
    }
    // label/intensity products, scale-major
    {
        const std::size_t ns = config.scales.size();
        const std::size_t k = config.label_set.size();
        for (std::size_t s = 0; s < ns; ++s) {
            const double* mean = features.data() + (ns * k + s) * n;
            for (std::size_t c = 0; c < k; ++c, ++fi) {
                const double* oh_s = features.data() + (s * k + c) * n;
                double* dst = features.data() + fi * n;
                for (std::size_t i = 0; i < n; ++i) dst[i] = oh_s[i] * mean[i];
            }
        }
    }
    return features;
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// numerically stable binary cross entropy with soft target w for score s:
// softplus(s) - w * s
inline double ce_from_score(double s, double w) {
    const double softplus = s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
    return softplus - w * s;
}

struct TrainBatch {
    std::vector<double> features; // per pair concatenated, feature-major per pair
    std::vector<double> targets;
    std::vector<std::size_t> pair_offsets; // voxel offset per pair
    std::size_t total_voxels = 0;
};

} // namespace

SimilarityTrainResult train_similarity(const std::vector<SimilarityTrainingPair>& pairs,
                                       const SimilarityTrainConfig& config, std::uint64_t /*seed*/) {
    if (pairs.empty()) throw std::invalid_argument("train_similarity: no training pairs");
    config.patch.validate();
    const std::size_t nf = config.features.feature_count();

    // assemble the full batch once
    std::vector<std::vector<double>> feats;
    std::vector<std::vector<double>> targets;
    std::size_t total = 0;
    for (const auto& p : pairs) {
        feats.push_back(extract_features(*p.target_img, *p.warped_atlas, config.features));
        for (double v : feats.back())
            if (!std::isfinite(v))
                throw std::invalid_argument("train_similarity: non-finite feature");
        const SimilarityMap gt =
            ground_truth_similarity(*p.warped_atlas, *p.target_label, config.patch);
        targets.push_back(gt.data);
        total += gt.data.size();
    }

    // optional class balance: weight voxels so that sum of weights on
    // w_gt >= 0.5 equals the sum on w_gt < 0.5
    std::vector<double> voxel_weight;
    if (config.class_balance) {
        std::size_t pos = 0, neg = 0;
        for (const auto& t : targets)
            for (double w : t) (w >= 0.5 ? pos : neg) += 1;
        const double wp = pos > 0 ? 0.5 * total / pos : 0.0;
        const double wn = neg > 0 ? 0.5 * total / neg : 0.0;
        voxel_weight.reserve(total);
        for (const auto& t : targets)
            for (double w : t) voxel_weight.push_back(w >= 0.5 ? wp : wn);
    }

    SimilarityModel model;
    model.features = config.features;
    model.weights.assign(nf, 0.0);
    model.bias = 0.0;

    const double inv_total = 1.0 / static_cast<double>(total);

    auto eval = [&](const std::vector<double>& w, double b, std::vector<double>* gw,
                    double* gb) -> double {
        if (gw) {
            gw->assign(nf, 0.0);
            *gb = 0.0;
        }
        double loss = 0.0;
        std::size_t flat = 0;
        for (std::size_t pi = 0; pi < feats.size(); ++pi) {
            const std::size_t n = targets[pi].size();
            const double* fp = feats[pi].data();
            for (std::size_t i = 0; i < n; ++i, ++flat) {
                double s = b;
                for (std::size_t f = 0; f < nf; ++f) s += w[f] * fp[f * n + i];
                const double vw = voxel_weight.empty() ? 1.0 : voxel_weight[flat];
                loss += vw * ce_from_score(s, targets[pi][i]);
                if (gw) {
                    const double err = vw * (sigmoid(s) - targets[pi][i]) * inv_total;
                    *gb += err;
                    for (std::size_t f = 0; f < nf; ++f) (*gw)[f] += err * fp[f * n + i];
                }
            }
        }
        return loss * inv_total;
    };

    SimilarityTrainResult result;
    std::vector<double> gw(nf);
    double gb = 0.0;
    double loss = eval(model.weights, model.bias, &gw, &gb);
    result.loss_trace.push_back(loss);

    double step = config.initial_step;
    for (int it = 0; it < config.iterations; ++it) {
        if (step < 1e-14) {
            result.loss_trace.push_back(loss);
            continue;
        }
        std::vector<double> wt = model.weights;
        double bt = model.bias;
        for (std::size_t f = 0; f < nf; ++f) wt[f] -= step * gw[f];
        bt -= step * gb;
        std::vector<double> gwt(nf);
        double gbt = 0.0;
        const double trial = eval(wt, bt, &gwt, &gbt);
        if (trial <= loss) {
            model.weights = std::move(wt);
            model.bias = bt;
            loss = trial;
            gw = std::move(gwt);
            gb = gbt;
            step *= 1.2;
        } else {
            step *= 0.5;
        }
        result.loss_trace.push_back(loss);
    }
    result.model = std::move(model);
    return result;
}

SimilarityMap predict_similarity(const SimilarityModel& model, const Volume& target_img,
                                 const LabelMap& warped_atlas) {
    if (model.weights.size() != model.features.feature_count())
        throw std::invalid_argument("predict_similarity: weight count does not match feature config");
    const std::vector<double> features = extract_features(target_img, warped_atlas, model.features);
    const std::size_t n = target_img.dims.voxels();
    const std::size_t nf = model.weights.size();
    SimilarityMap out;
    out.dims = target_img.dims;
    out.spacing = target_img.spacing;
    out.origin = target_img.origin;
    out.data.assign(n, 0.0);
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        double s = model.bias;
        for (std::size_t f = 0; f < nf; ++f) s += model.weights[f] * features[f * n + i];
        out.data[i] = sigmoid(s);
    }
    return out;
}

double cross_entropy(const SimilarityMap& predicted, const SimilarityMap& target) {
    if (!(predicted.dims == target.dims))
        throw std::invalid_argument("cross_entropy: dims mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < predicted.data.size(); ++i) {
        const double p = std::clamp(predicted.data[i], 1e-12, 1.0 - 1e-12);
        const double w = target.data[i];
        acc += -(w * std::log(p) + (1.0 - w) * std::log(1.0 - p));
    }
    return acc / static_cast<double>(predicted.data.size());
}

SimilarityMap mi_patch_similarity(const Volume& target_img, const Volume& warped_atlas_img,
                                  const PatchSpec& patch, int bins) {
    if (!(target_img.dims == warped_atlas_img.dims))
        throw std::invalid_argument("mi_patch_similarity: dims mismatch");
    if (bins < 2) throw std::invalid_argument("mi_patch_similarity: bins must be >= 2");
    patch.validate();
    const Dims d = target_img.dims;
    SimilarityMap out;
    out.dims = d;
    out.spacing = target_img.spacing;
    out.origin = target_img.origin;
    out.data.assign(d.voxels(), 0.0);
    const int r = patch.radius;

#pragma omp parallel for
    for (int z = 0; z < d.nz; ++z) {
        std::vector<int> joint(static_cast<std::size_t>(bins) * bins);
        std::vector<int> ma(bins), mb(bins);
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const int z0 = std::max(0, z - r), z1 = std::min(d.nz - 1, z + r);
                const int y0 = std::max(0, y - r), y1 = std::min(d.ny - 1, y + r);
                const int x0 = std::max(0, x - r), x1 = std::min(d.nx - 1, x + r);

                double amin = kPosInf, amax = -kPosInf, bmin = kPosInf, bmax = -kPosInf;
                for (int k = z0; k <= z1; ++k)
                    for (int j = y0; j <= y1; ++j)
                        for (int i = x0; i <= x1; ++i) {
                            const double a = target_img.at(i, j, k);
                            const double b = warped_atlas_img.at(i, j, k);
                            amin = std::min(amin, a);
                            amax = std::max(amax, a);
                            bmin = std::min(bmin, b);
                            bmax = std::max(bmax, b);
                        }

                std::fill(joint.begin(), joint.end(), 0);
                std::fill(ma.begin(), ma.end(), 0);
                std::fill(mb.begin(), mb.end(), 0);
                int count = 0;
                auto bin_of = [bins](double v, double lo, double hi) {
                    if (hi <= lo) return 0;
                    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
                    return std::clamp(b, 0, bins - 1);
                };
                for (int k = z0; k <= z1; ++k)
                    for (int j = y0; j <= y1; ++j)
                        for (int i = x0; i <= x1; ++i) {
                            const int ba = bin_of(target_img.at(i, j, k), amin, amax);
                            const int bb = bin_of(warped_atlas_img.at(i, j, k), bmin, bmax);
                            ++joint[static_cast<std::size_t>(ba) * bins + bb];
                            ++ma[ba];
                            ++mb[bb];
                            ++count;
                        }
                double mi = 0.0;
                const double inv = 1.0 / count;
                for (int a = 0; a < bins; ++a) {
                    if (ma[a] == 0) continue;
                    for (int b = 0; b < bins; ++b) {
                        const int c = joint[static_cast<std::size_t>(a) * bins + b];
                        if (c == 0 || mb[b] == 0) continue;
                        // ratio from exact integer counts: independent patches
                        // give exactly log2(1) = 0
                        const double ratio = static_cast<double>(c) * count /
                                             (static_cast<double>(ma[a]) * mb[b]);
                        mi += (c * inv) * std::log2(ratio);
                    }
                }
                out.at(x, y, z) = mi > 0.0 ? mi : 0.0;
            }
    }

    double peak = 0.0;
    for (double v : out.data) peak = std::max(peak, v);
    if (peak > 0.0)
        for (double& v : out.data) v /= peak;
    return out;
}

void SimilarityModel::save(const std::filesystem::path& path) const {
    nlohmann::json j;
    j["scales"] = features.scales;
    j["label_set"] = features.label_set;
    j["weights"] = weights;
    j["bias"] = bias;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw io_error("cannot open for writing: " + path.string());
    os << j.dump(2) << "\n";
    if (!os) throw io_error("write failed: " + path.string());
}

SimilarityModel SimilarityModel::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open model: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw io_error("malformed model " + path.string() + ": " + e.what());
    }
    SimilarityModel m;
    try {
        m.features.scales = j.at("scales").get<std::vector<double>>();
        m.features.label_set = j.at("label_set").get<std::vector<std::int16_t>>();
        m.weights = j.at("weights").get<std::vector<double>>();
        m.bias = j.at("bias").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw io_error("malformed model " + path.string() + ": " + e.what());
    }
    if (m.weights.size() != m.features.feature_count())
        throw io_error("model weight count does not match feature config: " + path.string());
    return m;
}

} // namespace mas

// Acceptance suite: runs every acceptance criterion end to end and prints one
// PASS/FAIL line per criterion. Exit code 0 only if all criteria hold.
//
// argv[1] (optional) is the path to the mas CLI binary, used by the pipeline
// determinism criterion.

#include "mas/nn_ops.hpp"
#include "mas/pipeline.hpp"
#include "mas/serial_ref.hpp"
#include "mas/volume_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace mas;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void criterion(const std::string& name, const std::function<void()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string error;
    try {
        body();
    } catch (const std::exception& e) {
        error = e.what();
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (error.empty()) {
        std::printf("[PASS] %-24s (%.1fs)\n", name.c_str(), sec);
    } else {
        std::printf("[FAIL] %-24s (%.1fs): %s\n", name.c_str(), sec, error.c_str());
        ++failures;
    }
    std::fflush(stdout);
}

void require(bool ok, const std::string& what) {
    if (!ok) throw std::runtime_error(what);
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// --- shared generators ---

Volume random_volume(Dims d, std::uint64_t seed) {
    Volume v(d);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        v.data[i] = 3.0 * uniform_sym(hash_counter(seed, 201, i));
    return v;
}

Volume noisy_volume(Dims d, std::uint64_t seed) {
    Volume v(d);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        v.data[i] = std::sin(0.3 * static_cast<double>(i % 23)) +
                    0.4 * uniform_sym(hash_counter(seed, 202, i));
    return v;
}

LabelMap random_labels(Dims d, std::uint64_t seed, int k = 3) {
    LabelMap m(d);
    for (std::size_t i = 0; i < d.voxels(); ++i)
        m.labels[i] = static_cast<std::int16_t>(hash_counter(seed, 203, i) % k);
    m.recompute_label_set();
    return m;
}

LabelMap sphere_label(Dims d, Vec3 center, Vec3 radii) {
    LabelMap m(d);
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const double dx = (x - center.x) / radii.x;
                const double dy = (y - center.y) / radii.y;
                const double dz = (z - center.z) / radii.z;
                if (dx * dx + dy * dy + dz * dz <= 1.0) m.at(x, y, z) = 1;
            }
    m.recompute_label_set();
    return m;
}

DisplacementField smooth_field(Dims d, std::uint64_t seed, double amplitude) {
    DisplacementField f(d);
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const std::size_t i = flat_index(d, x, y, z);
                f.ux[i] = amplitude * (0.31 + 0.4 * std::sin(0.5 * x + 0.2 * y + seed));
                f.uy[i] = amplitude * (0.17 + 0.4 * std::cos(0.4 * y + 0.3 * z));
                f.uz[i] = amplitude * (0.23 + 0.4 * std::sin(0.3 * z + 0.1 * x));
            }
    return f;
}

// the cross-modality two-structure phantom used by the cohort experiments
PhantomConfig cohort_base() {
    PhantomConfig pc;
    pc.dims = {32, 32, 32};
    pc.shapes = {
        {2, {16, 16, 16}, {10, 8.5, 9}},
        {1, {16, 16, 16}, {5.5, 4.5, 5}},
    };
    pc.modality_a = {{0, 0.1, 0.08}, {1, 1.0, 0.08}, {2, 0.55, 0.08}};
    pc.modality_b = {{0, 0.9, 0.08}, {1, 0.2, 0.08}, {2, 0.65, 0.08}};
    pc.noise_std = 0.06;
    pc.deformation.kind = PhantomDeformation::Kind::smooth_random;
    pc.deformation.amplitude = 3.0;
    pc.deformation.control_spacing = 8;
    return pc;
}

RegistrationConfig cohort_reg() {
    RegistrationConfig reg;
    reg.iterations = 60;
    reg.step_size = 0.05;
    reg.control_spacing = 4;
    return reg;
}

double mean_foreground_dice(const LabelMap& pred, const LabelMap& gold) {
    return evaluate_labels(pred, gold).mean_dice();
}

// results shared between the fusion-hierarchy and atlas-count criteria
struct CohortOutcome {
    double mv = 0, oracle = 0, learned = 0;
    std::vector<double> sweep; // sweep[n-1] = learned-LWF mean DS with n atlases
};
std::optional<CohortOutcome> cohort_outcome;

CohortOutcome run_cohort_experiment() {
    const RegistrationConfig reg = cohort_reg();
    const PreprocessConfig pre;

    // train the similarity model on held-out targets
    std::vector<Volume> train_imgs;
    std::vector<LabelMap> train_warped, train_gold;
    for (int t = 0; t < 2; ++t) {
        PhantomCohortConfig cc;
        cc.base = cohort_base();
        cc.count = 3;
        cc.seed = 1000 + t;
        const PhantomCohort cohort = make_cohort(cc);
        for (int a = 0; a < 3; ++a) {
            const RegisteredAtlas ra = register_atlas_to_target(
                cohort.atlases[a].image, cohort.atlases[a].label, cohort.target.image,
                cohort.target.label, reg, pre);
            train_imgs.push_back(zscore_normalize(cohort.target.image));
            train_warped.push_back(ra.warped_label);
            train_gold.push_back(cohort.target.label);
        }
    }
    SimilarityTrainConfig tc;
    tc.features.scales = {0, 1, 2, 4};
    tc.features.label_set = train_warped.front().label_set;
    tc.iterations = 150;
    tc.class_balance = true;
    std::vector<SimilarityTrainingPair> pairs;
    for (std::size_t i = 0; i < train_imgs.size(); ++i)
        pairs.push_back({&train_imgs[i], &train_warped[i], &train_gold[i]});
    const SimilarityTrainResult trained = train_similarity(pairs, tc, 0);

    CohortOutcome out;
    out.sweep.assign(10, 0.0);
    const int targets = 3;
    for (int t = 0; t < targets; ++t) {
        PhantomCohortConfig cc;
        cc.base = cohort_base();
        cc.count = 10;
        cc.seed = 2000 + t;
        const PhantomCohort cohort = make_cohort(cc);
        const Volume tgt_z = zscore_normalize(cohort.target.image);

        std::vector<LabelMap> warped;
        for (int a = 0; a < 10; ++a)
            warped.push_back(register_atlas_to_target(cohort.atlases[a].image,
                                                      cohort.atlases[a].label, cohort.target.image,
                                                      cohort.target.label, reg, pre)
                                 .warped_label);
        std::vector<const LabelMap*> lp;
        for (auto& w : warped) lp.push_back(&w);

        auto learned_fuse = [&](int n) {
            std::vector<const LabelMap*> sub(lp.begin(), lp.begin() + n);
            std::vector<SimilarityMap> weights;
            for (int i = 0; i < n; ++i)
                weights.push_back(predict_similarity(trained.model, tgt_z, *sub[i]));
            FusionInput in;
            in.labels = sub;
            for (const auto& w : weights) in.weights.push_back(&w);
            return lwf_fuse(in);
        };

        out.mv += mean_foreground_dice(majority_vote(lp), cohort.target.label);

        std::vector<SimilarityMap> oracle_w;
        for (const LabelMap* w : lp)
            oracle_w.push_back(ground_truth_similarity(*w, cohort.target.label, {1}));
        FusionInput oin;
        oin.labels = lp;
        for (const auto& w : oracle_w) oin.weights.push_back(&w);
        out.oracle += mean_foreground_dice(lwf_fuse(oin), cohort.target.label);

        out.learned += mean_foreground_dice(learned_fuse(10), cohort.target.label);
        for (int n = 1; n <= 10; ++n)
            out.sweep[n - 1] += mean_foreground_dice(learned_fuse(n), cohort.target.label);
    }
    out.mv /= targets;
    out.oracle /= targets;
    out.learned /= targets;
    for (double& v : out.sweep) v /= targets;
    return out;
}

std::vector<char> file_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "";

    criterion("warping-identity", [] {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const Dims d{8 + int(seed % 7), 9 + int(seed % 5), 7 + int(seed % 6)};
            const Volume v = random_volume(d, seed);
            const Volume out = warp_scalar(v, DisplacementField(d));
            require(out.data == v.data, "zero-field warp changed bytes at seed " + fmt(seed));
        }
    });

    criterion("gradient-suite", [] {
        // warp sampling against central finite differences
        {
            const Dims d{8, 8, 8};
            const Volume v = random_volume(d, 51);
            const double h = 1e-4;
            for (int probe = 0; probe < 60; ++probe) {
                auto coord = [&](int axis) {
                    const double f = 0.15 + 0.7 * uniform01(hash_counter(77, axis, probe));
                    return 1 + int(hash_counter(78, axis, probe) % 5) + f;
                };
                const double px = coord(0), py = coord(1), pz = coord(2);
                const SampleGrad g = sample_trilinear_grad(v.data.data(), d, px, py, pz);
                const double fd[3] = {
                    (sample_trilinear(v.data.data(), d, px + h, py, pz) -
                     sample_trilinear(v.data.data(), d, px - h, py, pz)) /
                        (2 * h),
                    (sample_trilinear(v.data.data(), d, px, py + h, pz) -
                     sample_trilinear(v.data.data(), d, px, py - h, pz)) /
                        (2 * h),
                    (sample_trilinear(v.data.data(), d, px, py, pz + h) -
                     sample_trilinear(v.data.data(), d, px, py, pz - h)) /
                        (2 * h)};
                const double an[3] = {g.dx, g.dy, g.dz};
                for (int c = 0; c < 3; ++c) {
                    const double rel = std::abs(an[c] - fd[c]) /
                                       std::max({std::abs(an[c]), std::abs(fd[c]), 1e-6});
                    require(rel < 1e-5, "warp sampling gradient rel error " + fmt(rel));
                }
            }
        }
        // soft Dice path (lambda = 0, native scale) and consistency path
        // (background-only labels) against finite differences on the fields
        auto field_check = [](const RegLossEvaluator& eval, Dims d, double tol, std::uint64_t s) {
            DisplacementField u = smooth_field(d, s, 0.8), v = smooth_field(d, s + 1, 0.8);
            DisplacementField gu, gv;
            eval.evaluate_with_grad(u, v, gu, gv);
            const double h = 1e-4;
            for (int probe = 0; probe < 30; ++probe) {
                const std::size_t i = hash_counter(99, s, probe) % d.voxels();
                std::vector<double>& field = (probe % 2 == 0) ? u.ux : v.uy;
                const double analytic = (probe % 2 == 0) ? gu.ux[i] : gv.uy[i];
                const double orig = field[i];
                field[i] = orig + h;
                const double hi = eval.evaluate(u, v).total;
                field[i] = orig - h;
                const double lo = eval.evaluate(u, v).total;
                field[i] = orig;
                const double fd = (hi - lo) / (2 * h);
                const double rel =
                    std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-5});
                require(rel < tol, "loss gradient rel error " + fmt(rel));
            }
        };
        const Dims d{8, 8, 8};
        {
            const LabelMap la = sphere_label(d, {3.4, 3.6, 3.5}, {2.2, 2.2, 2.2});
            const LabelMap lt = sphere_label(d, {4.1, 3.9, 3.6}, {2.2, 2.2, 2.2});
            const RegLossEvaluator dice_only(noisy_volume(d, 13), la, noisy_volume(d, 14), lt,
                                             ScaleSet{{0.0}}, 0.0);
            field_check(dice_only, d, 1e-5, 9);
            const LabelMap bg(d);
            const RegLossEvaluator cons_only(noisy_volume(d, 15), bg, noisy_volume(d, 16), bg,
                                             ScaleSet{{0.0}}, 1.0);
            field_check(cons_only, d, 1e-5, 11);
        }
        // full pipeline: loss -> warp -> dense field -> control grid
        {
            const LabelMap la = sphere_label(d, {3.4, 3.6, 3.5}, {2.2, 2.2, 2.2});
            const LabelMap lt = sphere_label(d, {4.1, 3.9, 3.6}, {2.2, 2.2, 2.2});
            const RegLossEvaluator eval(noisy_volume(d, 70), la, noisy_volume(d, 71), lt,
                                        ScaleSet{{0.0, 1.0}}, 0.1);
            RegistrationState st = RegistrationState::zero_init(d, 4);
            for (std::size_t i = 0; i < st.params.size(); ++i)
                st.params[i] = 0.4 * uniform_sym(hash_counter(5, 72, i)) + 0.13;
            DisplacementField u, v, gu, gv;
            expand_control_grid(st, u, v);
            eval.evaluate_with_grad(u, v, gu, gv);
            std::vector<double> analytic;
            control_grid_vjp(st, gu, gv, analytic);
            const double h = 1e-4;
            for (std::size_t i = 0; i < st.params.size(); ++i) {
                const double orig = st.params[i];
                st.params[i] = orig + h;
                expand_control_grid(st, u, v);
                const double hi = eval.evaluate(u, v).total;
                st.params[i] = orig - h;
                expand_control_grid(st, u, v);
                const double lo = eval.evaluate(u, v).total;
                st.params[i] = orig;
                const double fd = (hi - lo) / (2 * h);
                const double rel = std::abs(fd - analytic[i]) /
                                   std::max({std::abs(fd), std::abs(analytic[i]), 1e-3});
                require(rel < 1e-3, "pipeline gradient rel error " + fmt(rel));
            }
        }
        // attention gate parameters
        {
            const Dims gd{2, 2, 2};
            FeatureMap g(2, gd), f(2, {4, 4, 4}), projection(1, {4, 4, 4});
            for (std::size_t i = 0; i < g.data.size(); ++i)
                g.data[i] = 0.8 * uniform_sym(hash_counter(14, 204, i));
            for (std::size_t i = 0; i < f.data.size(); ++i)
                f.data[i] = 0.8 * uniform_sym(hash_counter(15, 205, i));
            for (std::size_t i = 0; i < projection.data.size(); ++i)
                projection.data[i] = uniform_sym(hash_counter(16, 206, i));
            GateParams p(2, 2, 3);
            for (std::size_t i = 0; i < p.count(); ++i)
                p.values[i] = 0.4 + 0.3 * uniform_sym(hash_counter(17, 207, i));
            const std::vector<double> analytic = attention_param_grad(g, f, p, projection);
            auto value = [&](std::span<const double> theta) {
                GateParams pt = p;
                pt.values.assign(theta.begin(), theta.end());
                const FeatureMap alpha = attention_coefficients(g, f, pt);
                double acc = 0.0;
                for (std::size_t i = 0; i < alpha.data.size(); ++i)
                    acc += projection.data[i] * alpha.data[i];
                return acc;
            };
            const double worst = grad_check(value, analytic, p.values);
            require(worst < 1e-5, "attention gate gradient rel error " + fmt(worst));
        }
    });

    criterion("consistency-exactness", [] {
        // inverse integer translations: residual exactly zero off the clamp rim
        const Dims d{12, 6, 6};
        Volume ia(d), it(d);
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x) {
                    const double core =
                        (x >= 3 && x < 9) ? std::sin(0.9 * x) * (1.0 + 0.1 * y) : 0.0;
                    ia.at(x, y, z) = core;
                    it.at(x, y, z) = -0.5 * core;
                }
        DisplacementField u(d), v(d);
        u.fill({2, 0, 0});
        v.fill({-2, 0, 0});
        require(consistency_loss(ia, it, u, v).sum == 0.0, "interior L_cons not exactly 0");

        // two +1 shifts on a ramp: residual exactly 2 per interior voxel
        const int n = 16;
        Volume ramp(Dims{n, 1, 1});
        for (int i = 0; i < n; ++i) ramp.data[i] = i;
        DisplacementField p1(ramp.dims);
        p1.fill({1, 0, 0});
        const Volume restored = restore_roundtrip(ramp, p1, p1);
        for (int i = 0; i + 2 < n; ++i)
            require(restored.data[i] - ramp.data[i] == 2.0,
                    "ramp residual not exactly 2 at voxel " + fmt(i));
        const double expected = 2.0 * (2.0 * (n - 2) + 1.0);
        const double got = consistency_loss(ramp, ramp, p1, p1).sum;
        require(std::abs(got - expected) < 1e-12,
                "ramp consistency sum " + fmt(got) + " != " + fmt(expected));
    });

    criterion("registration-recovery", [] {
        int ok = 0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            PhantomConfig pc;
            pc.dims = {48, 48, 48};
            const double jx = 0.7 * uniform_sym(hash_counter(seed, 300, 1));
            const double jy = 0.7 * uniform_sym(hash_counter(seed, 300, 2));
            pc.shapes = {{1, {24 + jx, 24 + jy, 24}, {11, 10, 11}}};
            pc.modality_a = {{0, 0.1, 0.0}, {1, 1.0, 0.0}};
            pc.modality_b = {{0, 0.8, 0.0}, {1, 0.2, 0.0}};
            pc.noise_std = 0.0;
            pc.deformation.kind = PhantomDeformation::Kind::translation;
            pc.deformation.translation = {3, 0, 0};
            pc.seed = seed;
            const PhantomPair pair = generate_pair(pc);

            RegistrationConfig cfg; // lambda stays at its 0.1 default
            cfg.iterations = 200;
            cfg.step_size = 0.05;
            cfg.control_spacing = 24; // one tent spans the structure: rigid-shift prior
            const RegistrationResult r = register_bidirectional(
                pair.atlas_img, pair.atlas_label, pair.target_img, pair.target_label, cfg);

            double mu = 0, mv = 0, mw = 0;
            std::size_t c = 0;
            for (std::size_t i = 0; i < pair.target_label.labels.size(); ++i)
                if (pair.target_label.labels[i] != 0) {
                    mu += r.U.ux[i];
                    mv += r.U.uy[i];
                    mw += r.U.uz[i];
                    ++c;
                }
            mu /= double(c);
            mv /= double(c);
            mw /= double(c);
            const bool good = r.final_dice >= 95.0 && std::abs(mu - 3.0) <= 0.5 &&
                              std::abs(mv) <= 0.5 && std::abs(mw) <= 0.5;
            std::printf("       seed %llu: dice %.2f, mean U (%.2f, %.2f, %.2f)%s\n",
                        (unsigned long long)seed, r.final_dice, mu, mv, mw,
                        good ? "" : "  *miss*");
            ok += good;
        }
        require(ok >= 9, "translation recovered on only " + fmt(ok) + "/10 seeds");
    });

    criterion("consistency-ablation", [] {
        auto residual = [](const Volume& img, const DisplacementField& U,
                           const DisplacementField& V) {
            const Volume r = restore_roundtrip(img, U, V);
            double acc = 0.0;
            for (std::size_t i = 0; i < img.data.size(); ++i)
                acc += std::abs(r.data[i] - img.data[i]);
            return acc / double(img.data.size());
        };
        double with_sum = 0, without_sum = 0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            PhantomConfig pc = cohort_base();
            pc.deformation.amplitude = 2.0;
            pc.noise_std = 0.02;
            pc.seed = seed * 31 + 5;
            const PhantomPair pair = generate_pair(pc);

            RegistrationConfig with = cohort_reg();
            with.iterations = 120;
            RegistrationConfig without = with;
            without.lambda = 0.0;
            const RegistrationResult rw = register_bidirectional(
                pair.atlas_img, pair.atlas_label, pair.target_img, pair.target_label, with);
            const RegistrationResult ro = register_bidirectional(
                pair.atlas_img, pair.atlas_label, pair.target_img, pair.target_label, without);
            with_sum += residual(pair.atlas_img, rw.U, rw.V);
            without_sum += residual(pair.atlas_img, ro.U, ro.V);
        }
        std::printf("       mean round-trip residual: lambda=0.1 %.5f vs lambda=0 %.5f\n",
                    with_sum / 10, without_sum / 10);
        require(with_sum < without_sum, "lambda=0.1 residual " + fmt(with_sum / 10) +
                                            " not below lambda=0 " + fmt(without_sum / 10));
    });

    criterion("similarity-oracle", [] {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const Dims d{12, 12, 12};
            const LabelMap a = random_labels(d, 400 + seed);
            const LabelMap b = random_labels(d, 500 + seed);
            const PatchSpec patch{1 + int(seed % 3)};
            const SimilarityMap fast = ground_truth_similarity(a, b, patch);
            const SimilarityMap ref = serial::ground_truth_similarity(a, b, patch);
            require(fast.data == ref.data, "agreement map mismatch at seed " + fmt(seed));
        }
    });

    criterion("fusion-reductions", [] {
        const Dims d{7, 6, 5};
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            std::vector<LabelMap> maps;
            for (int i = 0; i < 5; ++i) maps.push_back(random_labels(d, seed * 10 + i, 4));
            std::vector<const LabelMap*> ptrs;
            for (const auto& m : maps) ptrs.push_back(&m);
            SimilarityMap w;
            w.dims = d;
            w.data.assign(d.voxels(), 0.7);
            FusionInput input;
            input.labels = ptrs;
            for (int i = 0; i < 5; ++i) input.weights.push_back(&w);
            require(lwf_fuse(input).labels == majority_vote(ptrs).labels,
                    "constant-weight LWF != MV at seed " + fmt(seed));
        }
        const LabelMap single = random_labels(d, 999, 4);
        SimilarityMap w;
        w.dims = d;
        w.data.assign(d.voxels(), 0.42);
        FusionInput one;
        one.labels = {&single};
        one.weights = {&w};
        require(lwf_fuse(one).labels == single.labels, "N=1 LWF does not return its input");
    });

    criterion("fusion-hierarchy", [] {
        cohort_outcome = run_cohort_experiment();
        const CohortOutcome& c = *cohort_outcome;
        std::printf("       cohort mean DS: MV %.3f, learned %.3f, oracle %.3f\n", c.mv, c.learned,
                    c.oracle);
        require(c.oracle >= c.learned,
                "oracle " + fmt(c.oracle) + " below learned " + fmt(c.learned));
        require(c.learned >= c.mv - 0.5,
                "learned " + fmt(c.learned) + " below MV - 0.5 (" + fmt(c.mv) + ")");
        require(c.learned > c.mv, "learned " + fmt(c.learned) + " not above MV " + fmt(c.mv));
    });

    criterion("atlas-count-trend", [] {
        require(cohort_outcome.has_value(), "cohort experiment unavailable");
        const std::vector<double>& s = cohort_outcome->sweep;
        std::printf("       learned-LWF DS by atlas count:");
        for (double v : s) std::printf(" %.2f", v);
        std::printf("\n");
        for (std::size_t n = 1; n < s.size(); ++n)
            require(s[n] >= s[n - 1] - 0.5, "DS drops beyond tolerance at n=" + fmt(double(n + 1)) +
                                                " (" + fmt(s[n - 1]) + " -> " + fmt(s[n]) + ")");
        require(s.back() > s.front(), "no improvement from 1 to 10 atlases");
    });

    criterion("metric-oracles", [] {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const Dims d{8, 8, 8};
            const LabelMap a = random_labels(d, 600 + seed, 2);
            const LabelMap b = random_labels(d, 700 + seed, 2);
            std::size_t na = 0, nb = 0, ni = 0;
            for (std::size_t i = 0; i < d.voxels(); ++i) {
                na += a.labels[i] == 1;
                nb += b.labels[i] == 1;
                ni += a.labels[i] == 1 && b.labels[i] == 1;
            }
            require(dice_score(a, b, 1) == 200.0 * double(ni) / double(na + nb),
                    "dice does not match counting");
            require(volume_difference(a, b, 1) == std::abs(double(na) - double(nb)) / 1000.0,
                    "volume difference does not match counting");
        }
        for (std::uint64_t seed = 0; seed < 6; ++seed) {
            const Dims d{10 + int(seed % 3), 9, 12};
            LabelMap a = random_labels(d, 800 + seed, 4);
            LabelMap b = random_labels(d, 900 + seed, 4);
            const Vec3 spacing = seed % 2 == 0 ? Vec3{1, 1, 1} : Vec3{0.8, 1.3, 2.1};
            a.spacing = b.spacing = spacing;
            for (auto& l : a.labels) l = l == 1 ? 1 : 0;
            for (auto& l : b.labels) l = l == 1 ? 1 : 0;
            a.recompute_label_set();
            b.recompute_label_set();
            require(std::abs(asd(a, b, 1) - serial::asd_allpairs(a, b, 1)) < 1e-9,
                    "asd deviates from the all-pairs oracle");
            require(std::abs(hausdorff(a, b, 1) - serial::hausdorff_allpairs(a, b, 1)) < 1e-9,
                    "hausdorff deviates from the all-pairs oracle");
        }
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const Dims d{9, 9, 9};
            const LabelMap a = random_labels(d, 1000 + seed, 2);
            const LabelMap b = random_labels(d, 1200 + seed, 2);
            require(hausdorff(a, b, 1) >= asd(a, b, 1) - 1e-12, "HD < ASD");
        }
    });

    criterion("similarity-training", [] {
        const RegistrationConfig reg = cohort_reg();
        const PreprocessConfig pre;
        std::vector<Volume> imgs;
        std::vector<LabelMap> warped, gold;
        for (int t = 0; t < 2; ++t) {
            PhantomCohortConfig cc;
            cc.base = cohort_base();
            cc.count = 2;
            cc.seed = 3000 + t;
            const PhantomCohort cohort = make_cohort(cc);
            for (int a = 0; a < 2; ++a) {
                const RegisteredAtlas ra = register_atlas_to_target(
                    cohort.atlases[a].image, cohort.atlases[a].label, cohort.target.image,
                    cohort.target.label, reg, pre);
                imgs.push_back(zscore_normalize(cohort.target.image));
                warped.push_back(ra.warped_label);
                gold.push_back(cohort.target.label);
            }
        }
        SimilarityTrainConfig tc;
        tc.features.scales = {0, 1, 2, 4};
        tc.features.label_set = warped.front().label_set;
        tc.iterations = 150;
        std::vector<SimilarityTrainingPair> train_pairs;
        for (std::size_t i = 0; i + 1 < imgs.size(); ++i)
            train_pairs.push_back({&imgs[i], &warped[i], &gold[i]});
        const SimilarityTrainResult r = train_similarity(train_pairs, tc, 0);

        const double ln2 = std::log(2.0);
        require(r.loss_trace.back() < ln2,
                "training cross-entropy " + fmt(r.loss_trace.back()) + " not below ln 2");

        const std::size_t held = imgs.size() - 1;
        const SimilarityMap pred = predict_similarity(r.model, imgs[held], warped[held]);
        const SimilarityMap target = ground_truth_similarity(warped[held], gold[held], tc.patch);
        const double held_ce = cross_entropy(pred, target);
        require(held_ce < ln2, "held-out cross-entropy " + fmt(held_ce) + " not below ln 2");

        // rank-based AUC, positives = agreement fraction >= 0.5
        std::vector<std::pair<double, int>> scored;
        scored.reserve(pred.data.size());
        for (std::size_t i = 0; i < pred.data.size(); ++i)
            scored.push_back({pred.data[i], target.data[i] >= 0.5 ? 1 : 0});
        std::sort(scored.begin(), scored.end());
        double rank_sum = 0;
        std::size_t pos = 0;
        for (std::size_t i = 0; i < scored.size();) {
            std::size_t j = i;
            while (j < scored.size() && scored[j].first == scored[i].first) ++j;
            const double mid_rank = 0.5 * double(i + 1 + j);
            for (std::size_t k = i; k < j; ++k)
                if (scored[k].second) {
                    rank_sum += mid_rank;
                    ++pos;
                }
            i = j;
        }
        const std::size_t neg = scored.size() - pos;
        require(pos > 0 && neg > 0, "degenerate held-out class split");
        const double auc =
            (rank_sum - 0.5 * double(pos) * double(pos + 1)) / (double(pos) * double(neg));
        std::printf("       held-out cross-entropy %.4f (ln2 %.4f), AUC %.3f\n", held_ce, ln2, auc);
        require(auc > 0.5, "held-out AUC " + fmt(auc) + " not above 0.5");
    });

    criterion("pipeline-determinism", [&cli] {
        require(!cli.empty(), "mas CLI path not provided");
        const fs::path work = fs::temp_directory_path() / "mas_acceptance_cli";
        fs::remove_all(work);
        fs::create_directories(work);

        const fs::path phantom_cfg = work / "phantom.json";
        std::ofstream(phantom_cfg) << R"({
          "phantom": {
            "dims": [20, 20, 20],
            "shapes": [{"label": 1, "center": [10, 10, 10], "radii": [5, 4, 5]}],
            "modality_a": [{"label":0,"mean":0.1,"std":0.02},{"label":1,"mean":1.0,"std":0.02}],
            "modality_b": [{"label":0,"mean":0.9,"std":0.02},{"label":1,"mean":0.2,"std":0.02}],
            "noise_std": 0.01,
            "deformation": {"kind": "smooth_random", "amplitude": 1.5, "control_spacing": 6}
          },
          "count": 2, "mode": "cohort", "seed": 11
        })";

        const fs::path cohort = work / "cohort";
        const fs::path run = work / "run";
        const fs::path cfg = work / "pipeline.json";
        auto run_pipeline = [&] {
            require(std::system((cli + " phantom --config " + phantom_cfg.string() + " --out " +
                                 cohort.string())
                                    .c_str()) == 0,
                    "phantom command failed");
            require(std::system((cli + " register --config " + cfg.string()).c_str()) == 0,
                    "register command failed");
            require(std::system((cli + " fuse --config " + cfg.string()).c_str()) == 0,
                    "fuse command failed");
            require(std::system((cli + " sweep --config " + cfg.string()).c_str()) == 0,
                    "sweep command failed");
        };
        std::ofstream(cfg) << R"({
          "target_image": ")" + (cohort / "target.mvol").string() + R"(",
          "target_label": ")" + (cohort / "target_label.mvol").string() + R"(",
          "atlases": [
            [")" + (cohort / "atlas_00.mvol").string() + R"(", ")" +
                               (cohort / "atlas_00_label.mvol").string() + R"("],
            [")" + (cohort / "atlas_01.mvol").string() + R"(", ")" +
                               (cohort / "atlas_01_label.mvol").string() + R"("]
          ],
          "registration": {"iterations": 15, "step_size": 0.05, "scales": [0, 2], "control_spacing": 4},
          "fusion": {"method": "lwf-oracle"},
          "output_dir": ")" + run.string() + R"(",
          "sweep_counts": [1, 2],
          "jobs": 1
        })";

        // first run, snapshot, then rerun with the identical manifest inputs
        run_pipeline();
        const fs::path snap = work / "snapshot";
        fs::create_directories(snap);
        fs::copy(cohort, snap / "cohort", fs::copy_options::recursive);
        fs::copy(run, snap / "run", fs::copy_options::recursive);
        fs::remove_all(cohort);
        fs::remove_all(run);
        run_pipeline();

        std::size_t compared = 0;
        for (const char* part : {"cohort", "run"}) {
            for (const auto& entry : fs::recursive_directory_iterator(snap / part)) {
                if (!entry.is_regular_file()) continue;
                const fs::path rel = fs::relative(entry.path(), snap / part);
                const fs::path fresh = work / part / rel;
                require(fs::exists(fresh), "missing on rerun: " + rel.string());
                require(file_bytes(entry.path()) == file_bytes(fresh),
                        "bytes differ on rerun: " + rel.string());
                ++compared;
            }
        }
        std::printf("       %zu files byte-identical across reruns (manifests included)\n",
                    compared);
        require(compared > 20, "unexpectedly few pipeline outputs");
    });

    std::printf("%s: %d criterion(s) failed\n",
                failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED", failures);
    return failures == 0 ? 0 : 1;
}

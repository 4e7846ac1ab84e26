#include "mas/pipeline.hpp"

#include "mas/volume_io.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace mas {

using nlohmann::json;

namespace {

json load_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open config: " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw io_error("malformed config " + path.string() + ": " + e.what());
    }
    return j;
}

json reg_to_json(const RegistrationConfig& r) {
    return json{{"lambda", r.lambda},          {"scales", r.scales.sigmas},
                {"control_spacing", r.control_spacing}, {"iterations", r.iterations},
                {"step_size", r.step_size},    {"beta1", r.beta1},
                {"beta2", r.beta2},            {"seed", r.seed}};
}

RegistrationConfig reg_from_json(const json& j) {
    RegistrationConfig r;
    r.lambda = j.value("lambda", r.lambda);
    if (j.contains("scales")) r.scales.sigmas = j.at("scales").get<std::vector<double>>();
    r.control_spacing = j.value("control_spacing", r.control_spacing);
    r.iterations = j.value("iterations", r.iterations);
    r.step_size = j.value("step_size", r.step_size);
    r.beta1 = j.value("beta1", r.beta1);
    r.beta2 = j.value("beta2", r.beta2);
    r.seed = j.value("seed", r.seed);
    return r;
}

json phantom_to_json(const PhantomConfig& c) {
    json shapes = json::array();
    for (const auto& s : c.shapes)
        shapes.push_back({{"label", s.label},
                          {"center", {s.center.x, s.center.y, s.center.z}},
                          {"radii", {s.radii.x, s.radii.y, s.radii.z}}});
    auto table = [](const std::vector<LabelIntensity>& t) {
        json out = json::array();
        for (const auto& e : t) out.push_back({{"label", e.label}, {"mean", e.mean}, {"std", e.std}});
        return out;
    };
    json def;
    if (c.deformation.kind == PhantomDeformation::Kind::translation)
        def = {{"kind", "translation"},
               {"translation",
                {c.deformation.translation.x, c.deformation.translation.y,
                 c.deformation.translation.z}}};
    else
        def = {{"kind", "smooth_random"},
               {"amplitude", c.deformation.amplitude},
               {"control_spacing", c.deformation.control_spacing}};
    return json{{"dims", {c.dims.nx, c.dims.ny, c.dims.nz}},
                {"shapes", shapes},
                {"modality_a", table(c.modality_a)},
                {"modality_b", table(c.modality_b)},
                {"noise_std", c.noise_std},
                {"deformation", def},
                {"seed", c.seed}};
}

PhantomConfig phantom_from_json(const json& j) {
    PhantomConfig c = PhantomConfig::nested_default();
    if (j.contains("dims"))
        c.dims = {j.at("dims").at(0).get<int>(), j.at("dims").at(1).get<int>(),
                  j.at("dims").at(2).get<int>()};
    if (j.contains("shapes")) {
        c.shapes.clear();
        for (const auto& s : j.at("shapes")) {
            Ellipsoid e;
            e.label = s.at("label").get<std::int16_t>();
            e.center = {s.at("center").at(0).get<double>(), s.at("center").at(1).get<double>(),
                        s.at("center").at(2).get<double>()};
            e.radii = {s.at("radii").at(0).get<double>(), s.at("radii").at(1).get<double>(),
                       s.at("radii").at(2).get<double>()};
            c.shapes.push_back(e);
        }
    }
    auto table = [](const json& t) {
        std::vector<LabelIntensity> out;
        for (const auto& e : t)
            out.push_back({e.at("label").get<std::int16_t>(), e.at("mean").get<double>(),
                           e.at("std").get<double>()});
        return out;
    };
    if (j.contains("modality_a")) c.modality_a = table(j.at("modality_a"));
    if (j.contains("modality_b")) c.modality_b = table(j.at("modality_b"));
    c.noise_std = j.value("noise_std", c.noise_std);
    if (j.contains("deformation")) {
        const json& d = j.at("deformation");
        const std::string kind = d.value("kind", "translation");
        if (kind == "translation") {
            c.deformation.kind = PhantomDeformation::Kind::translation;
            if (d.contains("translation"))
                c.deformation.translation = {d.at("translation").at(0).get<double>(),
                                             d.at("translation").at(1).get<double>(),
                                             d.at("translation").at(2).get<double>()};
        } else if (kind == "smooth_random") {
            c.deformation.kind = PhantomDeformation::Kind::smooth_random;
            c.deformation.amplitude = d.value("amplitude", 2.0);
            c.deformation.control_spacing = d.value("control_spacing", 8);
        } else {
            throw std::invalid_argument("unknown deformation kind: " + kind);
        }
    }
    c.seed = j.value("seed", c.seed);
    return c;
}

std::string two_digits(int i) {
    std::ostringstream os;
    if (i < 10) os << '0';
    os << i;
    return os.str();
}

} // namespace

void PipelineConfig::validate() const {
    if (atlases.empty()) throw std::invalid_argument("PipelineConfig: at least one atlas required");
    registration.validate();
    const bool known = fusion.method == "mv" || fusion.method == "lwf-oracle" ||
                       fusion.method == "lwf-learned" || fusion.method == "lwf-mi";
    if (!known) throw std::invalid_argument("PipelineConfig: unknown fusion method " + fusion.method);
    if (fusion.method == "lwf-learned" && fusion.model_path.empty())
        throw std::invalid_argument("PipelineConfig: lwf-learned requires a model path");
    if (jobs < 1) throw std::invalid_argument("PipelineConfig: jobs must be >= 1");
}

PipelineConfig PipelineConfig::from_json_file(const std::filesystem::path& path) {
    const json j = load_json(path);
    PipelineConfig c;
    c.target_image = j.at("target_image").get<std::string>();
    c.target_label = j.at("target_label").get<std::string>();
    for (const auto& a : j.at("atlases"))
        c.atlases.emplace_back(a.at(0).get<std::string>(), a.at(1).get<std::string>());
    if (j.contains("registration")) c.registration = reg_from_json(j.at("registration"));
    if (j.contains("preprocess")) {
        c.preprocess.zscore = j.at("preprocess").value("zscore", true);
        c.preprocess.center_align = j.at("preprocess").value("center_align", true);
    }
    if (j.contains("fusion")) {
        const json& f = j.at("fusion");
        c.fusion.method = f.value("method", c.fusion.method);
        c.fusion.model_path = f.value("model", c.fusion.model_path);
        c.fusion.patch_radius = f.value("patch_radius", c.fusion.patch_radius);
        c.fusion.mi_patch_radius = f.value("mi_patch_radius", c.fusion.mi_patch_radius);
        c.fusion.mi_bins = f.value("mi_bins", c.fusion.mi_bins);
    }
    if (j.contains("sweep_counts")) c.sweep_counts = j.at("sweep_counts").get<std::vector<int>>();
    c.output_dir = j.value("output_dir", c.output_dir);
    c.jobs = j.value("jobs", c.jobs);
    return c;
}

std::string PipelineConfig::to_canonical_json() const {
    json atl = json::array();
    for (const auto& [img, lab] : atlases) atl.push_back({img, lab});
    const json j{{"target_image", target_image},
                 {"target_label", target_label},
                 {"atlases", atl},
                 {"registration", reg_to_json(registration)},
                 {"preprocess", {{"zscore", preprocess.zscore}, {"center_align", preprocess.center_align}}},
                 {"fusion",
                  {{"method", fusion.method},
                   {"model", fusion.model_path},
                   {"patch_radius", fusion.patch_radius},
                   {"mi_patch_radius", fusion.mi_patch_radius},
                   {"mi_bins", fusion.mi_bins}}},
                 {"sweep_counts", sweep_counts},
                 {"output_dir", output_dir},
                 {"jobs", jobs}};
    return j.dump();
}

PhantomCohortConfig PhantomCohortConfig::from_json_file(const std::filesystem::path& path) {
    const json j = load_json(path);
    PhantomCohortConfig c;
    if (j.contains("phantom")) c.base = phantom_from_json(j.at("phantom"));
    c.count = j.value("count", c.count);
    c.mode = j.value("mode", c.mode);
    c.seed = j.value("seed", c.seed);
    if (c.mode != "cohort" && c.mode != "pairs")
        throw std::invalid_argument("PhantomCohortConfig: mode must be cohort or pairs");
    if (c.count < 1) throw std::invalid_argument("PhantomCohortConfig: count must be >= 1");
    return c;
}

std::string PhantomCohortConfig::to_canonical_json() const {
    const json j{{"phantom", phantom_to_json(base)}, {"count", count}, {"mode", mode}, {"seed", seed}};
    return j.dump();
}

SimilarityTrainCliConfig SimilarityTrainCliConfig::from_json_file(const std::filesystem::path& path) {
    const json j = load_json(path);
    SimilarityTrainCliConfig c;
    for (const auto& p : j.at("pairs"))
        c.pairs.push_back({p.at("target_image").get<std::string>(),
                           p.at("warped_label").get<std::string>(),
                           p.at("target_label").get<std::string>()});
    if (j.contains("scales")) c.scales = j.at("scales").get<std::vector<double>>();
    c.patch_radius = j.value("patch_radius", c.patch_radius);
    c.iterations = j.value("iterations", c.iterations);
    c.zscore = j.value("zscore", c.zscore);
    c.class_balance = j.value("class_balance", c.class_balance);
    return c;
}

std::string SimilarityTrainCliConfig::to_canonical_json() const {
    json pairs = json::array();
    for (const auto& p : this->pairs)
        pairs.push_back({{"target_image", p.target_image},
                         {"warped_label", p.warped_label},
                         {"target_label", p.target_label}});
    const json j{{"pairs", pairs},           {"scales", scales},
                 {"patch_radius", patch_radius}, {"iterations", iterations},
                 {"zscore", zscore},         {"class_balance", class_balance}};
    return j.dump();
}

std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void write_run_manifest(const std::filesystem::path& out_dir, const std::string& command,
                        const std::string& canonical_config, std::uint64_t seed,
                        const std::vector<std::string>& outputs) {
    json j{{"command", command},
           {"config_hash", fnv1a_hash(canonical_config)},
           {"seed", seed},
           {"version", kPipelineVersion},
           {"outputs", outputs}};
    write_text_atomic(out_dir / "run_manifest.json", j.dump(2) + "\n");
}

PhantomCohort make_cohort(const PhantomCohortConfig& config) {
    config.base.validate();
    PhantomCohort cohort;
    const LabelMap base = paint_shapes(config.base.dims, config.base.shapes);
    cohort.target.label = base;
    cohort.target.image =
        render_intensities(base, config.base.modality_b, config.base.noise_std, config.seed, 5);
    for (int i = 0; i < config.count; ++i) {
        const std::uint64_t atlas_seed = splitmix64(config.seed ^ static_cast<std::uint64_t>(i + 1));
        DisplacementField g;
        if (config.base.deformation.kind == PhantomDeformation::Kind::smooth_random)
            g = random_smooth_field(config.base.dims, config.base.deformation.amplitude,
                                    config.base.deformation.control_spacing, atlas_seed);
        else {
            g = DisplacementField(config.base.dims);
            g.fill(config.base.deformation.translation);
        }
        CohortCase atlas;
        atlas.label = warp_label_nearest(base, g);
        atlas.image = render_intensities(atlas.label, config.base.modality_a,
                                         config.base.noise_std, config.seed, 100 + i);
        cohort.atlases.push_back(std::move(atlas));
    }
    return cohort;
}

RegisteredAtlas register_atlas_to_target(const Volume& atlas_img, const LabelMap& atlas_label,
                                         const Volume& target_img, const LabelMap& target_label,
                                         const RegistrationConfig& reg_config,
                                         const PreprocessConfig& pre) {
    Volume a_img = pre.zscore ? zscore_normalize(atlas_img) : atlas_img;
    const Volume t_img = pre.zscore ? zscore_normalize(target_img) : target_img;
    LabelMap a_label = atlas_label;

    RegisteredAtlas out;
    out.pre_shift_mm = {0.0, 0.0, 0.0};
    if (pre.center_align) {
        const Vec3 shift_mm = center_align_translation(atlas_label, target_label);
        out.pre_shift_mm = shift_mm;
        // content moves by +shift when the resampling field is -shift
        DisplacementField align(atlas_img.dims);
        align.fill({-shift_mm.x / atlas_img.spacing.x, -shift_mm.y / atlas_img.spacing.y,
                    -shift_mm.z / atlas_img.spacing.z});
        a_img = warp_scalar(a_img, align);
        a_label = warp_label(a_label, align);
    }

    out.reg = register_bidirectional(a_img, a_label, t_img, target_label, reg_config);
    out.warped_label = warp_label(a_label, out.reg.U);
    out.warped_image = warp_scalar(a_img, out.reg.U);
    return out;
}

std::vector<SimilarityMap> fusion_weights(const FusionMethodConfig& config,
                                          const Volume& target_img_pre, const LabelMap* gold_label,
                                          const std::vector<const LabelMap*>& warped_labels,
                                          const std::vector<const Volume*>& warped_images) {
    std::vector<SimilarityMap> weights;
    weights.reserve(warped_labels.size());
    if (config.method == "mv") {
        SimilarityMap ones;
        ones.dims = target_img_pre.dims;
        ones.spacing = target_img_pre.spacing;
        ones.data.assign(ones.dims.voxels(), 1.0);
        for (std::size_t i = 0; i < warped_labels.size(); ++i) weights.push_back(ones);
    } else if (config.method == "lwf-oracle") {
        if (!gold_label)
            throw std::invalid_argument("fusion_weights: lwf-oracle needs the gold label");
        for (const LabelMap* w : warped_labels)
            weights.push_back(ground_truth_similarity(*w, *gold_label, {config.patch_radius}));
    } else if (config.method == "lwf-learned") {
        const SimilarityModel model = SimilarityModel::load(config.model_path);
        for (const LabelMap* w : warped_labels)
            weights.push_back(predict_similarity(model, target_img_pre, *w));
    } else if (config.method == "lwf-mi") {
        if (warped_images.size() != warped_labels.size())
            throw std::invalid_argument("fusion_weights: lwf-mi needs warped atlas images");
        for (const Volume* w : warped_images)
            weights.push_back(
                mi_patch_similarity(target_img_pre, *w, {config.mi_patch_radius}, config.mi_bins));
    } else {
        throw std::invalid_argument("fusion_weights: unknown method " + config.method);
    }
    return weights;
}

void cmd_phantom(const PhantomCohortConfig& config, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> outputs;
    json cohort_meta;
    cohort_meta["mode"] = config.mode;
    cohort_meta["count"] = config.count;

    auto emit_volume = [&](const std::string& name, const auto& v) {
        write_volume(out_dir / name, v);
        outputs.push_back(name);
    };

    if (config.mode == "cohort") {
        const PhantomCohort cohort = make_cohort(config);
        emit_volume("target.mvol", cohort.target.image);
        emit_volume("target_label.mvol", cohort.target.label);
        cohort_meta["target_image"] = "target.mvol";
        cohort_meta["target_label"] = "target_label.mvol";
        json atl = json::array();
        for (int i = 0; i < config.count; ++i) {
            const std::string img = "atlas_" + two_digits(i) + ".mvol";
            const std::string lab = "atlas_" + two_digits(i) + "_label.mvol";
            emit_volume(img, cohort.atlases[i].image);
            emit_volume(lab, cohort.atlases[i].label);
            atl.push_back({img, lab});
        }
        cohort_meta["atlases"] = atl;
    } else {
        json pairs = json::array();
        for (int i = 0; i < config.count; ++i) {
            PhantomConfig pc = config.base;
            pc.seed = splitmix64(config.seed ^ static_cast<std::uint64_t>(i + 1));
            const PhantomPair pair = generate_pair(pc);
            const std::string prefix = "pair_" + two_digits(i);
            emit_volume(prefix + "_atlas.mvol", pair.atlas_img);
            emit_volume(prefix + "_atlas_label.mvol", pair.atlas_label);
            emit_volume(prefix + "_target.mvol", pair.target_img);
            emit_volume(prefix + "_target_label.mvol", pair.target_label);
            write_field(out_dir / (prefix + "_gt.dfield"), pair.gt_ddf);
            outputs.push_back(prefix + "_gt.dfield");
            pairs.push_back({{"atlas", prefix + "_atlas.mvol"},
                             {"atlas_label", prefix + "_atlas_label.mvol"},
                             {"target", prefix + "_target.mvol"},
                             {"target_label", prefix + "_target_label.mvol"},
                             {"gt_field", prefix + "_gt.dfield"},
                             {"seed", pc.seed}});
        }
        cohort_meta["pairs"] = pairs;
    }
    write_text_atomic(out_dir / "cohort.json", cohort_meta.dump(2) + "\n");
    outputs.push_back("cohort.json");
    write_run_manifest(out_dir, "phantom", config.to_canonical_json(), config.seed, outputs);
}

namespace {

struct RegJobOutcome {
    bool ok = false;
    std::string error;
    double mean_dice = 0.0;
    double mean_asd = 0.0;
    int best_iteration = 0;
};

} // namespace

void cmd_register(const PipelineConfig& config) {
    config.validate();
    const std::filesystem::path out_dir = config.output_dir;
    std::filesystem::create_directories(out_dir);

    const Volume target_img = read_scalar_volume(config.target_image);
    const LabelMap target_label = read_label_volume(config.target_label);

    const int n = static_cast<int>(config.atlases.size());
    std::vector<RegJobOutcome> outcomes(n);

    std::atomic<int> next{0};
    auto worker = [&]() {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            RegJobOutcome& oc = outcomes[i];
            try {
                const Volume atlas_img = read_scalar_volume(config.atlases[i].first);
                const LabelMap atlas_label = read_label_volume(config.atlases[i].second);
                const RegisteredAtlas ra =
                    register_atlas_to_target(atlas_img, atlas_label, target_img, target_label,
                                             config.registration, config.preprocess);
                const std::string prefix = "reg_" + two_digits(i);
                write_field(out_dir / (prefix + "_forward.dfield"), ra.reg.U);
                write_field(out_dir / (prefix + "_backward.dfield"), ra.reg.V);
                write_volume(out_dir / (prefix + "_warped_label.mvol"), ra.warped_label);
                write_volume(out_dir / (prefix + "_warped_image.mvol"), ra.warped_image);

                std::ostringstream trace;
                for (std::size_t t = 0; t < ra.reg.trace.size(); ++t) {
                    const LossBreakdown& b = ra.reg.trace[t];
                    trace << "{\"iteration\":" << t << ",\"dice_term\":" << b.dice_term
                          << ",\"cons_term\":" << b.cons_term << ",\"total\":" << b.total << "}\n";
                }
                write_text_atomic(out_dir / (prefix + "_trace.jsonl"), trace.str());

                const MetricReport report = evaluate_labels(ra.warped_label, target_label);
                write_text_atomic(out_dir / (prefix + "_metrics.csv"), report.to_csv());
                double asd_acc = 0.0;
                for (const auto& r : report.rows) asd_acc += r.asd;
                oc.mean_dice = report.mean_dice();
                oc.mean_asd = report.rows.empty() ? 0.0 : asd_acc / report.rows.size();
                oc.best_iteration = ra.reg.best_iteration;
                oc.ok = true;
            } catch (const std::exception& e) {
                oc.error = e.what();
            }
        }
    };

    const int workers = std::min(config.jobs, n);
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    std::ostringstream csv;
    csv << "atlas,mean_ds_percent,mean_asd_mm,best_iteration,status\n";
    bool all_ok = true;
    for (int i = 0; i < n; ++i) {
        const RegJobOutcome& oc = outcomes[i];
        all_ok = all_ok && oc.ok;
        csv << i << ',' << oc.mean_dice << ',' << oc.mean_asd << ',' << oc.best_iteration << ','
            << (oc.ok ? "ok" : oc.error) << '\n';
    }
    write_text_atomic(out_dir / "registration_report.csv", csv.str());

    std::vector<std::string> outputs{"registration_report.csv"};
    for (int i = 0; i < n; ++i) {
        if (!outcomes[i].ok) continue;
        const std::string prefix = "reg_" + two_digits(i);
        outputs.push_back(prefix + "_forward.dfield");
        outputs.push_back(prefix + "_backward.dfield");
        outputs.push_back(prefix + "_warped_label.mvol");
        outputs.push_back(prefix + "_warped_image.mvol");
        outputs.push_back(prefix + "_trace.jsonl");
        outputs.push_back(prefix + "_metrics.csv");
    }
    write_run_manifest(out_dir, "register", config.to_canonical_json(), config.registration.seed,
                       outputs);
    if (!all_ok) {
        std::string msg = "cmd_register: failed jobs:";
        for (int i = 0; i < n; ++i)
            if (!outcomes[i].ok) msg += " [" + std::to_string(i) + "] " + outcomes[i].error;
        throw std::runtime_error(msg);
    }
}

namespace {

struct LoadedWarps {
    std::vector<LabelMap> labels;
    std::vector<Volume> images;
};

LoadedWarps load_warped(const PipelineConfig& config) {
    LoadedWarps w;
    const std::filesystem::path out_dir = config.output_dir;
    for (std::size_t i = 0; i < config.atlases.size(); ++i) {
        const std::string prefix = "reg_" + two_digits(static_cast<int>(i));
        w.labels.push_back(read_label_volume(out_dir / (prefix + "_warped_label.mvol")));
        w.images.push_back(read_scalar_volume(out_dir / (prefix + "_warped_image.mvol")));
    }
    return w;
}

} // namespace

void cmd_fuse(const PipelineConfig& config) {
    config.validate();
    const std::filesystem::path out_dir = config.output_dir;
    const LabelMap gold = read_label_volume(config.target_label);
    Volume target_img = read_scalar_volume(config.target_image);
    if (config.preprocess.zscore) target_img = zscore_normalize(target_img);

    const LoadedWarps warps = load_warped(config);
    std::vector<const LabelMap*> label_ptrs;
    std::vector<const Volume*> image_ptrs;
    for (const auto& l : warps.labels) label_ptrs.push_back(&l);
    for (const auto& v : warps.images) image_ptrs.push_back(&v);

    LabelMap fused;
    if (config.fusion.method == "mv") {
        fused = majority_vote(label_ptrs);
    } else {
        const std::vector<SimilarityMap> weights =
            fusion_weights(config.fusion, target_img, &gold, label_ptrs, image_ptrs);
        FusionInput input;
        input.labels = label_ptrs;
        for (const auto& w : weights) input.weights.push_back(&w);
        fused = lwf_fuse(input);
    }

    write_volume(out_dir / "fused_label.mvol", fused);
    const MetricReport report = evaluate_labels(fused, gold);
    write_text_atomic(out_dir / "fusion_report.csv", report.to_csv());
    write_text_atomic(out_dir / "fusion_report.json", report.to_json());
    write_run_manifest(out_dir, "fuse", config.to_canonical_json(), config.registration.seed,
                       {"fused_label.mvol", "fusion_report.csv", "fusion_report.json"});
}

MetricReport cmd_eval(const std::filesystem::path& predicted, const std::filesystem::path& gold,
                      const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const LabelMap pred = read_label_volume(predicted);
    const LabelMap gt = read_label_volume(gold);
    const MetricReport report = evaluate_labels(pred, gt);
    write_text_atomic(out_dir / "eval_report.csv", report.to_csv());
    write_text_atomic(out_dir / "eval_report.json", report.to_json());
    const std::string canonical = predicted.string() + "|" + gold.string();
    write_run_manifest(out_dir, "eval", canonical, 0, {"eval_report.csv", "eval_report.json"});
    return report;
}

void cmd_sweep(const PipelineConfig& config) {
    config.validate();
    if (config.sweep_counts.empty())
        throw std::invalid_argument("cmd_sweep: sweep_counts must not be empty");
    const std::filesystem::path out_dir = config.output_dir;
    const LabelMap gold = read_label_volume(config.target_label);
    Volume target_img = read_scalar_volume(config.target_image);
    if (config.preprocess.zscore) target_img = zscore_normalize(target_img);
    const LoadedWarps warps = load_warped(config);

    std::ostringstream csv;
    csv << "n,mean_ds_percent,std_ds_percent\n";
    for (int n : config.sweep_counts) {
        if (n < 1 || n > static_cast<int>(warps.labels.size()))
            throw std::invalid_argument("cmd_sweep: atlas count " + std::to_string(n) +
                                        " exceeds cohort size");
        std::vector<const LabelMap*> label_ptrs;
        std::vector<const Volume*> image_ptrs;
        for (int i = 0; i < n; ++i) {
            label_ptrs.push_back(&warps.labels[i]);
            image_ptrs.push_back(&warps.images[i]);
        }
        LabelMap fused;
        if (config.fusion.method == "mv") {
            fused = majority_vote(label_ptrs);
        } else {
            const std::vector<SimilarityMap> weights =
                fusion_weights(config.fusion, target_img, &gold, label_ptrs, image_ptrs);
            FusionInput input;
            input.labels = label_ptrs;
            for (const auto& w : weights) input.weights.push_back(&w);
            fused = lwf_fuse(input);
        }
        const MetricReport report = evaluate_labels(fused, gold);
        const double mean = report.mean_dice();
        double var = 0.0;
        for (const auto& r : report.rows) var += (r.dice - mean) * (r.dice - mean);
        var = report.rows.empty() ? 0.0 : var / report.rows.size();
        csv << n << ',' << mean << ',' << std::sqrt(var) << '\n';
    }
    write_text_atomic(out_dir / "atlas_sweep.csv", csv.str());
    write_run_manifest(out_dir, "sweep", config.to_canonical_json(), config.registration.seed,
                       {"atlas_sweep.csv"});
}

void cmd_train(const SimilarityTrainCliConfig& config, const std::filesystem::path& model_out,
               const std::filesystem::path& out_dir) {
    if (config.pairs.empty()) throw std::invalid_argument("cmd_train: no training pairs");
    std::filesystem::create_directories(out_dir);

    std::vector<Volume> images;
    std::vector<LabelMap> warped, gold;
    for (const auto& p : config.pairs) {
        Volume img = read_scalar_volume(p.target_image);
        if (config.zscore) img = zscore_normalize(img);
        images.push_back(std::move(img));
        warped.push_back(read_label_volume(p.warped_label));
        gold.push_back(read_label_volume(p.target_label));
    }

    SimilarityTrainConfig tc;
    tc.features.scales = config.scales;
    tc.features.label_set = warped.front().label_set;
    tc.patch.radius = config.patch_radius;
    tc.iterations = config.iterations;
    tc.class_balance = config.class_balance;

    std::vector<SimilarityTrainingPair> pairs;
    for (std::size_t i = 0; i < images.size(); ++i)
        pairs.push_back({&images[i], &warped[i], &gold[i]});

    const SimilarityTrainResult result = train_similarity(pairs, tc, 0);
    result.model.save(model_out);

    std::ostringstream trace;
    trace << "iteration,mean_cross_entropy\n";
    for (std::size_t i = 0; i < result.loss_trace.size(); ++i)
        trace << i << ',' << result.loss_trace[i] << '\n';
    write_text_atomic(out_dir / "train_trace.csv", trace.str());
    write_run_manifest(out_dir, "train", config.to_canonical_json(), 0,
                       {model_out.filename().string(), "train_trace.csv"});
}

} // namespace mas

#include "mas/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>

namespace {

// flag overrides applied on top of the JSON config
struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    int jobs = 0;
    long long seed = -1;
    double lambda = -1.0;
    std::string fusion;
    int patch = -1;
};

void apply_overrides(mas::PipelineConfig& config, const CommonFlags& f) {
    if (!f.out_dir.empty()) config.output_dir = f.out_dir;
    if (f.jobs > 0) config.jobs = f.jobs;
    if (f.seed >= 0) config.registration.seed = static_cast<std::uint64_t>(f.seed);
    if (f.lambda >= 0.0) config.registration.lambda = f.lambda;
    if (!f.fusion.empty()) config.fusion.method = f.fusion;
    if (f.patch >= 0) config.fusion.patch_radius = f.patch;
}

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", f.config_path, "JSON config file");
    if (needs_config) opt->required();
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--jobs", f.jobs, "parallel atlas jobs");
    cmd->add_option("--seed", f.seed, "seed override");
    cmd->add_option("--lambda", f.lambda, "consistency weight override (default 0.1)");
    cmd->add_option("--fusion", f.fusion, "fusion method: mv | lwf-oracle | lwf-learned | lwf-mi");
    cmd->add_option("--patch", f.patch, "agreement patch radius (default 1 -> 3^3)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-modality multi-atlas segmentation pipeline"};
    app.require_subcommand(1);

    CommonFlags phantom_f, register_f, fuse_f, sweep_f, train_f;
    std::string eval_pred, eval_gold, eval_out = "out";
    std::string train_model_out = "similarity_model.json";

    auto* phantom = app.add_subcommand("phantom", "generate a synthetic cohort");
    add_common(phantom, phantom_f, false);

    auto* reg = app.add_subcommand("register", "register every atlas to the target");
    add_common(reg, register_f);

    auto* fuse = app.add_subcommand("fuse", "fuse warped atlas labels");
    add_common(fuse, fuse_f);

    auto* eval = app.add_subcommand("eval", "evaluate a predicted label against gold");
    eval->add_option("--pred", eval_pred, "predicted label .mvol")->required();
    eval->add_option("--gold", eval_gold, "gold label .mvol")->required();
    eval->add_option("--out", eval_out, "output directory");

    auto* sweep = app.add_subcommand("sweep", "fused Dice versus atlas count");
    add_common(sweep, sweep_f);

    auto* train = app.add_subcommand("train", "train the similarity model");
    add_common(train, train_f);
    train->add_option("--model-out", train_model_out, "model output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (phantom->parsed()) {
            mas::PhantomCohortConfig config;
            if (!phantom_f.config_path.empty())
                config = mas::PhantomCohortConfig::from_json_file(phantom_f.config_path);
            if (phantom_f.seed >= 0) config.seed = static_cast<std::uint64_t>(phantom_f.seed);
            const std::string out = phantom_f.out_dir.empty() ? "out" : phantom_f.out_dir;
            mas::cmd_phantom(config, out);
        } else if (reg->parsed()) {
            auto config = mas::PipelineConfig::from_json_file(register_f.config_path);
            apply_overrides(config, register_f);
            mas::cmd_register(config);
        } else if (fuse->parsed()) {
            auto config = mas::PipelineConfig::from_json_file(fuse_f.config_path);
            apply_overrides(config, fuse_f);
            mas::cmd_fuse(config);
        } else if (eval->parsed()) {
            mas::cmd_eval(eval_pred, eval_gold, eval_out);
        } else if (sweep->parsed()) {
            auto config = mas::PipelineConfig::from_json_file(sweep_f.config_path);
            apply_overrides(config, sweep_f);
            mas::cmd_sweep(config);
        } else if (train->parsed()) {
            auto config = mas::SimilarityTrainCliConfig::from_json_file(train_f.config_path);
            const std::string out = train_f.out_dir.empty() ? "out" : train_f.out_dir;
            mas::cmd_train(config, train_model_out, out);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

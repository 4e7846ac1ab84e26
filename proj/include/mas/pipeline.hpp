#ifndef MAS_PIPELINE_HPP
#define MAS_PIPELINE_HPP

#include "mas/fusion.hpp"
#include "mas/metrics.hpp"
#include "mas/phantom.hpp"
#include "mas/registration.hpp"
#include "mas/similarity.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace mas {

inline constexpr const char* kPipelineVersion = "1.0.0";

struct PreprocessConfig {
    bool zscore = true;
    bool center_align = true;
};

struct FusionMethodConfig {
    std::string method = "mv"; // mv | lwf-oracle | lwf-learned | lwf-mi
    std::string model_path;    // required for lwf-learned
    int patch_radius = 1;      // agreement patch (3^3)
    int mi_patch_radius = 3;   // MI patch (7^3)
    int mi_bins = 16;
};

struct PipelineConfig {
    std::string target_image;
    std::string target_label; // gold standard, drives oracle weights and reports
    std::vector<std::pair<std::string, std::string>> atlases; // (image, label)
    RegistrationConfig registration;
    PreprocessConfig preprocess;
    FusionMethodConfig fusion;
    std::vector<int> sweep_counts;
    std::string output_dir = "out";
    int jobs = 1;

    void validate() const;
    static PipelineConfig from_json_file(const std::filesystem::path& path);
    std::string to_canonical_json() const;
};

// Cohort of synthetic cases: either `count` independent atlas/target pairs,
// or one shared target plus `count` deformed atlases for fusion experiments.
struct PhantomCohortConfig {
    PhantomConfig base = PhantomConfig::nested_default();
    int count = 10;
    std::string mode = "cohort"; // cohort | pairs
    std::uint64_t seed = 7;

    static PhantomCohortConfig from_json_file(const std::filesystem::path& path);
    std::string to_canonical_json() const;
};

struct SimilarityTrainCliConfig {
    struct Pair {
        std::string target_image, warped_label, target_label;
    };
    std::vector<Pair> pairs;
    std::vector<double> scales{0.0, 1.0, 2.0, 4.0};
    int patch_radius = 1;
    int iterations = 200;
    bool zscore = true;
    bool class_balance = false;

    static SimilarityTrainCliConfig from_json_file(const std::filesystem::path& path);
    std::string to_canonical_json() const;
};

std::uint64_t fnv1a_hash(const std::string& text);

// Deterministic run description written by every command; reruns with the
// same manifest must reproduce identical bytes.
void write_run_manifest(const std::filesystem::path& out_dir, const std::string& command,
                        const std::string& canonical_config, std::uint64_t seed,
                        const std::vector<std::string>& outputs);

// --- in-process building blocks shared by the CLI and the test suites ---

struct RegisteredAtlas {
    LabelMap warped_label;  // atlas label carried through pre-alignment + U
    Volume warped_image;
    RegistrationResult reg;
    Vec3 pre_shift_mm;      // applied rigid pre-alignment
};

RegisteredAtlas register_atlas_to_target(const Volume& atlas_img, const LabelMap& atlas_label,
                                         const Volume& target_img, const LabelMap& target_label,
                                         const RegistrationConfig& reg_config,
                                         const PreprocessConfig& pre);

struct CohortCase {
    Volume image;
    LabelMap label;
};

struct PhantomCohort {
    CohortCase target;
    std::vector<CohortCase> atlases;
};

PhantomCohort make_cohort(const PhantomCohortConfig& config);

std::vector<SimilarityMap> fusion_weights(const FusionMethodConfig& config,
                                          const Volume& target_img_pre, const LabelMap* gold_label,
                                          const std::vector<const LabelMap*>& warped_labels,
                                          const std::vector<const Volume*>& warped_images);

// --- CLI commands; each writes outputs + run manifest under its out dir ---

void cmd_phantom(const PhantomCohortConfig& config, const std::filesystem::path& out_dir);
void cmd_register(const PipelineConfig& config);
void cmd_fuse(const PipelineConfig& config);
MetricReport cmd_eval(const std::filesystem::path& predicted, const std::filesystem::path& gold,
                      const std::filesystem::path& out_dir);
void cmd_sweep(const PipelineConfig& config);
void cmd_train(const SimilarityTrainCliConfig& config, const std::filesystem::path& model_out,
               const std::filesystem::path& out_dir);

} // namespace mas

#endif

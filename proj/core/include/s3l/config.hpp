#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "s3l/augment.hpp"
#include "s3l/backbone.hpp"
#include "s3l/dataset.hpp"
#include "s3l/schedule.hpp"
#include "s3l/trainer.hpp"

namespace s3l {

/// One experiment document. Parsing is strict: unknown keys anywhere are a
/// ConfigError naming the offending field, so typos cannot silently change a
/// run.
struct ExperimentConfig {
    uint64_t seed = 1;
    std::filesystem::path output_dir;

    struct DatasetSection {
        std::filesystem::path root;
        std::string manifest = "manifest.csv";
        std::optional<SyntheticSpec> synthetic;
        std::optional<int64_t> subsample_n;
        uint64_t subsample_seed = 0;
    } dataset;

    struct BackboneSection {
        std::string preset = "mini18";
        bool truncate = false;
    } backbone;

    SslSettings ssl;
    std::vector<StagePlan> plan;

    FinetuneSettings finetune;

    struct EvalSection {
        int epochs = 30;
        double lr0 = 10.0;
        int batch = 64;
        int resolution = 32;
    } eval;

    static ExperimentConfig load(const std::filesystem::path& json_path);
    static ExperimentConfig parse(const std::string& json_text);

    /// Preset spec with the truncate flag applied.
    BackboneSpec backbone_spec() const;

    /// Loads the manifest, generating the synthetic dataset first when
    /// configured and not present, and applying any subsample.
    Manifest resolve_dataset() const;
};

}  // namespace s3l

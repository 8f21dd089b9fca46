#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "s3l/evalmetrics.hpp"
#include "s3l/rng.hpp"
#include "s3l/tensor.hpp"

namespace s3l {

enum class Split { Train, Test };

struct ManifestRecord {
    std::string path;  // relative to the manifest's directory
    int label = 0;
    Split split = Split::Train;
    std::optional<Box> box;
};

/// Dataset description: rows of (path, label, split) plus a class-name table
/// and optional per-record boxes. Labels are dense in [0, C), paths must
/// exist at load time, splits are disjoint.
struct Manifest {
    std::filesystem::path root;
    std::vector<ManifestRecord> records;
    std::vector<std::string> class_names;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    std::vector<size_t> indices(Split split) const;
    std::vector<int> per_class_counts(Split split) const;
};

/// CSV schema: header `path,label,split[,x0,y0,x1,y1]`, with optional
/// `#class,<id>,<name>` comment lines for the class table.
Manifest load_manifest(const std::filesystem::path& csv_path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& csv_path);

/// Binary PPM (P6, maxval 255) -> [3,H,W] f32 in [0,1], values exactly v/255.
Tensor decode_image(const std::filesystem::path& path);
void encode_image(const Tensor& img, const std::filesystem::path& path);

/// Deterministic byte-exact synthetic classification task: each class is a
/// (shape, color) blob rendered in a class-specific quadrant over dim gray
/// clutter, with the blob's bounding box recorded for localization tests.
struct SyntheticSpec {
    int classes = 10;
    int per_class_train = 20;
    int per_class_test = 20;
    int image_size = 32;
    uint64_t seed = 7;

    void validate() const;
};

/// Class -> quadrant assignment used by the renderer (class % 4, in
/// row-major quadrant order). Exposed for localization oracles.
int synthetic_quadrant(int label);

Manifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

/// Uniform subsample without replacement of the train split; test rows kept.
Manifest subsample(const Manifest& manifest, int64_t n_images, uint64_t seed);

/// Everything decoded up front; desk-scale datasets fit in memory.
struct InMemoryDataset {
    std::vector<Tensor> images;  // [3,H,W] in [0,1]
    std::vector<int> labels;
    std::vector<std::optional<Box>> boxes;
    std::vector<size_t> train_indices;
    std::vector<size_t> test_indices;
    int num_classes = 0;

    static InMemoryDataset load(const Manifest& manifest);
};

}  // namespace s3l

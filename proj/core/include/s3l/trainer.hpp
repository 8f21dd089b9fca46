#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "s3l/augment.hpp"
#include "s3l/backbone.hpp"
#include "s3l/dataset.hpp"
#include "s3l/optim.hpp"
#include "s3l/schedule.hpp"
#include "s3l/ssl.hpp"

namespace s3l {

struct MetricsRow {
    int epoch = 0;
    std::string split;  // pretrain | warmup | train | test
    double loss = 0;
    double accuracy = -1;  // negative = not applicable
    double lr = 0;
    double wall_seconds = 0;
};

std::string metrics_to_csv(const std::vector<MetricsRow>& rows);
/// Appends rows, writing the header only when the file does not exist yet.
void append_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

/// Batch assembly helpers.
Tensor stack_batch(const std::vector<Tensor>& images);
Tensor one_hot(const std::vector<int64_t>& labels, int classes);

// ---- SSL pretraining ---------------------------------------------------------

struct SslSettings {
    SslMethod method = SslMethod::SimCLR;
    double temperature = 0.1;
    int proj_dim = 128;
    int queue_capacity = 512;        // MoCo
    double encoder_momentum = 0.999; // MoCo
    double target_momentum = 0.996;  // BYOL
    double weight_decay = 1e-4;
    double sgd_momentum = 0.9;

    void validate() const;
};

struct PretrainRun {
    Network net;  // final network, SSL heads still attached
    std::vector<MetricsRow> metrics;
    double wall_seconds = 0;
    double weighted_macs = 0;
    bool finished = true;  // false when stopped early by stop_after_epochs
};

/// Multi-stage SSL pretraining. Writes stage<k>.ckpt at each stage boundary
/// and last.ckpt every epoch under out_dir (when set), plus metrics.csv.
/// `resume` continues a previous run bit-exactly; `stop_after_epochs` ends
/// the run cleanly after that many global epochs (for resume testing).
struct PretrainOptions {
    uint64_t seed = 1;
    std::filesystem::path out_dir;  // empty = no files
    std::filesystem::path resume;   // optional last.ckpt
    int stop_after_epochs = -1;
};

PretrainRun pretrain(const BackboneSpec& spec, const std::vector<StagePlan>& plan,
                     const SslSettings& ssl, const InMemoryDataset& data, const AugPolicy& policy,
                     const PretrainOptions& options);

// ---- supervised fine-tuning ----------------------------------------------------

enum class FinetuneProtocol { Cosine01, Step001 };

struct FinetuneSettings {
    int epochs = 120;
    FinetuneProtocol protocol = FinetuneProtocol::Cosine01;
    bool mixup = false;
    double mixup_alpha = 1.0;
    int batch = 64;
    int resolution = 224;
    double weight_decay = 5e-4;
    double sgd_momentum = 0.9;
    bool reset_bn_stats = false;
    int warmup_epochs = 0;     // freeze-and-warmup protocol for a fresh stage
    double warmup_lr = 0.1;
    std::string warmup_stage;  // e.g. "conv5"; empty disables warmup

    LrPolicy lr_policy() const;
};

struct FinetuneRun {
    Network net;
    std::vector<MetricsRow> metrics;
    double best_accuracy = 0;
    double last_accuracy = 0;
    double wall_seconds = 0;         // includes warmup epochs
    double warmup_seconds = 0;
};

/// Attaches a fresh classifier (SSL heads are discarded), optionally runs the
/// warmup protocol (everything but the fresh stage + classifier frozen at a
/// constant lr), then trains all parameters, evaluating top-1 on the test
/// split every epoch. Reports best accuracy; last is recorded alongside.
FinetuneRun finetune(Network net, const InMemoryDataset& data, const FinetuneSettings& settings,
                     uint64_t seed);

/// Warmup alone: train only `stage.*` + the classifier at constant lr.
void warmup_new_block(Network& net, const InMemoryDataset& data, const std::string& stage,
                      int epochs, double lr, int batch, int resolution, uint64_t seed,
                      std::vector<MetricsRow>* metrics, double* wall_seconds);

/// Top-1 on the given split at `resolution` (deterministic eval transform).
double evaluate_top1(Network& net, const InMemoryDataset& data,
                     const std::vector<size_t>& indices, int resolution, int batch);

// ---- linear evaluation ---------------------------------------------------------

struct LinearEvalRun {
    double accuracy = 0;
    std::vector<MetricsRow> metrics;
    double wall_seconds = 0;
};

/// Trains only a fresh linear classifier on the frozen backbone (BN in eval
/// mode); backbone parameters are bit-identical afterwards.
LinearEvalRun linear_eval(Network& net, const InMemoryDataset& data, int epochs, double lr0,
                          int batch, int resolution, uint64_t seed);

/// Plain linear probe on precomputed features; the training core of
/// linear_eval, exposed for oracle tests.
struct LinearProbeRun {
    Tensor weight;
    Tensor bias;
    double train_accuracy = 0;
    double test_accuracy = 0;
};

LinearProbeRun train_linear_probe(const Tensor& train_x, const std::vector<int64_t>& train_y,
                                  const Tensor& test_x, const std::vector<int64_t>& test_y,
                                  int classes, int epochs, const LrPolicy& lr, uint64_t seed);

}  // namespace s3l

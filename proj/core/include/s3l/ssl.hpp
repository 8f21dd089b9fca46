#pragma once

#include <string>
#include <vector>

#include "s3l/backbone.hpp"
#include "s3l/tensor.hpp"

namespace s3l {

enum class SslMethod { MoCo, SimCLR, Byol };

const char* ssl_method_name(SslMethod m);
SslMethod parse_ssl_method(const std::string& name);

struct ContrastiveConfig {
    double temperature = 0.2;
    int dim = 128;

    void validate() const {
        S3L_CONFIG_CHECK(temperature > 0, "ssl.temperature: must be > 0, got ", temperature);
        S3L_CONFIG_CHECK(dim >= 1, "ssl.dim: must be positive");
    }
};

/// Hyperparameters the paper's appendix pins per method/backbone for its
/// Table-2 runs. Desk-scale configs rescale lr by the linear rule
/// lr * batch / paper_batch.
struct PaperHyperparams {
    int batch = 128;
    double lr = 0.03;
    double temperature = 0.2;  // unused by BYOL
    int queue = 0;             // MoCo only
};

PaperHyperparams paper_hyperparams(SslMethod m, const std::string& backbone_preset);

// ---- losses ----------------------------------------------------------------

/// -log( exp(q.k+/tau) / (exp(q.k+/tau) + sum_k- exp(q.k-/tau)) ).
/// All inputs must be unit vectors (+-1e-4); pass an undefined `negatives`
/// for K = 0.
Tensor info_nce(const Tensor& q, const Tensor& k_pos, const Tensor& negatives, double tau);

/// Batched form: queries [N,d] against positives [N,d] plus a shared
/// negative bank [K,d]; mean of the per-row losses.
Tensor info_nce_batch(const Tensor& q, const Tensor& k_pos, const Tensor& negatives, double tau);

/// SimCLR batch loss: anchors are all 2N embeddings, positives given by
/// `pairing`, negatives the remaining 2N-2 rows (self excluded).
Tensor nt_xent_batch(const Tensor& z, const std::vector<int64_t>& pairing, double tau);

/// Mean over pairs of 2 - 2 cos(p, z). One view ordering; callers symmetrize
/// by averaging both orderings (byol_step does).
Tensor byol_loss(const Tensor& online_pred, const Tensor& target_proj);

/// theta_t <- m * theta_t + (1 - m) * theta_o for every non-buffer parameter
/// of `target`; missing or mismatched names are an error.
void ema_update(Network& target, const Network& online, double m);

// ---- method state ------------------------------------------------------------

struct MocoState {
    Network key_encoder;  // momentum mirror of the online net; never receives grads
    Tensor queue;         // [capacity, d]; rows [0, fill) are valid
    int64_t ptr = 0;
    int64_t fill = 0;
    int64_t capacity = 0;
    double momentum = 0.999;

    static MocoState init(const Network& online, int64_t capacity, double momentum);

    /// FIFO insert of `keys` [B,d]; rejects batches that do not divide the
    /// capacity and rows that are not unit-norm (+-1e-5).
    void enqueue(const Tensor& keys);
    /// Valid rows as a detached [fill, d] tensor; undefined while empty.
    Tensor negatives() const;
};

struct ByolState {
    Network target;  // backbone + projection copy; never receives grads
    double ema_rate = 0.996;

    static ByolState init(const Network& online, double ema_rate);
};

// ---- per-step drivers --------------------------------------------------------

/// Queries from view1 through the online net, keys from view2 through the key
/// encoder (no grad), loss against key + queue; then the key encoder is
/// EMA-updated and the keys are enqueued.
Tensor moco_step(Network& online, MocoState& state, const Tensor& view1, const Tensor& view2,
                 double tau);

Tensor simclr_step(Network& online, const Tensor& view1, const Tensor& view2, double tau);

Tensor byol_step(Network& online, ByolState& state, const Tensor& view1, const Tensor& view2);

}  // namespace s3l

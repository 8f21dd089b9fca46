#include "s3l/ssl.hpp"

#include <cmath>

#include "s3l/ops.hpp"

namespace s3l {

const char* ssl_method_name(SslMethod m) {
    switch (m) {
        case SslMethod::MoCo: return "moco";
        case SslMethod::SimCLR: return "simclr";
        case SslMethod::Byol: return "byol";
    }
    return "?";
}

SslMethod parse_ssl_method(const std::string& name) {
    if (name == "moco" || name == "mocov2") return SslMethod::MoCo;
    if (name == "simclr") return SslMethod::SimCLR;
    if (name == "byol") return SslMethod::Byol;
    throw ConfigError("ssl.method: unknown method '" + name + "'");
}

PaperHyperparams paper_hyperparams(SslMethod m, const std::string& backbone_preset) {
    bool r18 = backbone_preset != "resnet50";
    switch (m) {
        case SslMethod::MoCo: return {128, 0.03, 0.2, 4096};
        case SslMethod::SimCLR: return r18 ? PaperHyperparams{512, 0.5, 0.1, 0}
                                           : PaperHyperparams{128, 0.125, 0.1, 0};
        case SslMethod::Byol: return r18 ? PaperHyperparams{512, 0.5, 0.0, 0}
                                         : PaperHyperparams{128, 0.125, 0.0, 0};
    }
    return {};
}

namespace {

void require_unit_rows(const Tensor& t, double tol, const char* what) {
    int64_t rows = t.rank() == 1 ? 1 : t.dim(0);
    int64_t d = t.rank() == 1 ? t.dim(0) : t.dim(1);
    for (int64_t r = 0; r < rows; ++r) {
        double sq = 0;
        for (int64_t c = 0; c < d; ++c) {
            double v = t.get(r * d + c);
            sq += v * v;
        }
        double norm = std::sqrt(sq);
        S3L_CHECK(std::abs(norm - 1.0) <= tol, what, ": row ", r, " is not unit-norm (", norm, ")");
    }
}

Tensor as_row_matrix(const Tensor& v) {
    if (v.rank() == 2) return v;
    S3L_CHECK(v.rank() == 1, "expected vector or [N,d] matrix");
    return reshape(v, {1, v.dim(0)});
}

}  // namespace

Tensor info_nce(const Tensor& q, const Tensor& k_pos, const Tensor& negatives, double tau) {
    return info_nce_batch(as_row_matrix(q), as_row_matrix(k_pos), negatives, tau);
}

Tensor info_nce_batch(const Tensor& q, const Tensor& k_pos, const Tensor& negatives, double tau) {
    S3L_CHECK(tau > 0, "info_nce: temperature must be positive, got ", tau);
    Tensor qm = as_row_matrix(q);
    Tensor km = as_row_matrix(k_pos);
    S3L_CHECK(qm.shape() == km.shape(), "info_nce: query/key shape mismatch");
    require_unit_rows(qm, 1e-4, "info_nce: query");
    require_unit_rows(km, 1e-4, "info_nce: positive key");

    Tensor pos = reshape(rowwise_dot(qm, km), {qm.dim(0), 1});
    Tensor logits;
    if (negatives.defined()) {
        S3L_CHECK(negatives.rank() == 2 && negatives.dim(1) == qm.dim(1),
                  "info_nce: negatives must be [K,d]");
        require_unit_rows(negatives, 1e-4, "info_nce: negative");
        logits = concat_cols(pos, matmul_nt(qm, negatives));
    } else {
        // K = 0: softmax over the positive logit alone, so the loss is
        // identically zero with zero gradient. Keep the graph alive so
        // callers can still run backward.
        return sum(mul(pos, Tensor::zeros(pos.shape(), pos.dtype())));
    }
    return softmax_cross_entropy(scale(logits, 1.0 / tau),
                                 std::vector<int64_t>(static_cast<size_t>(qm.dim(0)), 0));
}

Tensor nt_xent_batch(const Tensor& z, const std::vector<int64_t>& pairing, double tau) {
    S3L_CHECK(tau > 0, "nt_xent: temperature must be positive, got ", tau);
    S3L_CHECK(z.defined() && z.rank() == 2, "nt_xent: want [2N,d]");
    int64_t rows = z.dim(0);
    S3L_CHECK(rows >= 4 && rows % 2 == 0, "nt_xent: need N >= 2 pairs, got ", rows, " embeddings");
    S3L_CHECK(static_cast<int64_t>(pairing.size()) == rows, "nt_xent: pairing size mismatch");
    for (int64_t i = 0; i < rows; ++i) {
        int64_t p = pairing[static_cast<size_t>(i)];
        S3L_CHECK(p >= 0 && p < rows && p != i, "nt_xent: bad pairing at anchor ", i);
    }
    require_unit_rows(z, 1e-4, "nt_xent");

    Tensor sim = scale(matmul_nt(z, z), 1.0 / tau);
    // self-similarity excluded by masking the diagonal far below any real logit
    Tensor mask = Tensor::zeros(sim.shape(), sim.dtype());
    for (int64_t i = 0; i < rows; ++i) mask.set(i * rows + i, -1e9);
    return softmax_cross_entropy(add(sim, mask), pairing);
}

Tensor byol_loss(const Tensor& online_pred, const Tensor& target_proj) {
    Tensor p = as_row_matrix(online_pred);
    Tensor zc = as_row_matrix(target_proj);
    S3L_CHECK(p.shape() == zc.shape(), "byol_loss: shape mismatch");
    Tensor cos = rowwise_dot(l2_normalize(p, 1), l2_normalize(zc, 1));
    return mean(affine(cos, -2.0, 2.0));
}

void ema_update(Network& target, const Network& online, double m) {
    S3L_CHECK(m >= 0.0 && m <= 1.0, "ema_update: momentum must lie in [0,1], got ", m);
    for (auto& e : target.entries()) {
        if (e.buffer) continue;
        S3L_CHECK(online.has(e.name), "ema_update: parameter name-set mismatch at ", e.name);
        const Tensor& src = online.param(e.name);
        S3L_CHECK(src.shape() == e.tensor.shape(), "ema_update: shape mismatch at ", e.name);
        int64_t n = e.tensor.numel();
        for (int64_t i = 0; i < n; ++i)
            e.tensor.set(i, m * e.tensor.get(i) + (1.0 - m) * src.get(i));
    }
}

MocoState MocoState::init(const Network& online, int64_t capacity, double momentum) {
    S3L_CHECK(capacity >= 1, "moco: queue capacity must be positive");
    S3L_CHECK(momentum >= 0.0 && momentum <= 1.0, "moco: encoder momentum must lie in [0,1]");
    S3L_CHECK(has_head(online, HeadKind::Projection), "moco: online net needs a projection head");
    MocoState s;
    s.key_encoder = online.clone();
    for (auto& e : s.key_encoder.entries()) s.key_encoder.set_trainable(e.name, false);
    int64_t layer = 0;
    while (s.key_encoder.has("head.projection." + std::to_string(layer + 1) + ".weight")) ++layer;
    int64_t dim = s.key_encoder.param("head.projection." + std::to_string(layer) + ".weight").dim(0);
    s.queue = Tensor::zeros({capacity, dim});
    s.capacity = capacity;
    s.momentum = momentum;
    return s;
}

void MocoState::enqueue(const Tensor& keys) {
    S3L_CHECK(keys.defined() && keys.rank() == 2 && keys.dim(1) == queue.dim(1),
              "moco enqueue: keys must be [B,d] with queue's d");
    int64_t b = keys.dim(0);
    S3L_CHECK(b <= capacity, "moco enqueue: batch exceeds queue capacity");
    S3L_CHECK(capacity % b == 0, "moco enqueue: queue capacity (", capacity,
              ") must be a multiple of batch size (", b, ")");
    require_unit_rows(keys, 1e-5, "moco enqueue");
    int64_t d = queue.dim(1);
    for (int64_t r = 0; r < b; ++r)
        for (int64_t c = 0; c < d; ++c) queue.set((ptr + r) * d + c, keys.get(r * d + c));
    ptr = (ptr + b) % capacity;
    fill = std::min(fill + b, capacity);
}

Tensor MocoState::negatives() const {
    if (fill == 0) return Tensor();
    int64_t d = queue.dim(1);
    Tensor out = Tensor::zeros({fill, d});
    for (int64_t i = 0; i < fill * d; ++i) out.set(i, queue.get(i));
    return out;
}

ByolState ByolState::init(const Network& online, double ema_rate) {
    S3L_CHECK(ema_rate >= 0.0 && ema_rate <= 1.0, "byol: target rate must lie in [0,1]");
    S3L_CHECK(has_head(online, HeadKind::Projection), "byol: online net needs a projection head");
    S3L_CHECK(has_head(online, HeadKind::Predictor), "byol: online net needs a predictor head");
    ByolState s;
    s.target = online.clone();
    s.target.remove_prefix("head.predictor.");
    for (auto& e : s.target.entries()) s.target.set_trainable(e.name, false);
    s.ema_rate = ema_rate;
    return s;
}

namespace {

Tensor project(Network& net, const Tensor& views, bool train) {
    BackboneOutput out = forward_backbone(net, views, train);
    return l2_normalize(apply_mlp_head(net, HeadKind::Projection, out.pooled, train), 1);
}

}  // namespace

Tensor moco_step(Network& online, MocoState& state, const Tensor& view1, const Tensor& view2,
                 double tau) {
    S3L_CHECK(view1.dim(0) <= state.capacity, "moco_step: batch exceeds queue capacity");
    Tensor q = project(online, view1, true);
    Tensor k;
    {
        NoGradGuard ng;
        k = project(state.key_encoder, view2, true);
    }
    Tensor loss = info_nce_batch(q, k, state.negatives(), tau);
    ema_update(state.key_encoder, online, state.momentum);
    state.enqueue(k);
    return loss;
}

Tensor simclr_step(Network& online, const Tensor& view1, const Tensor& view2, double tau) {
    S3L_CHECK(view1.shape() == view2.shape(), "simclr_step: view shape mismatch");
    int64_t n = view1.dim(0);
    Tensor z = project(online, concat_rows(view1, view2), true);
    std::vector<int64_t> pairing(static_cast<size_t>(2 * n));
    for (int64_t i = 0; i < n; ++i) {
        pairing[static_cast<size_t>(i)] = i + n;
        pairing[static_cast<size_t>(i + n)] = i;
    }
    return nt_xent_batch(z, pairing, tau);
}

Tensor byol_step(Network& online, ByolState& state, const Tensor& view1, const Tensor& view2) {
    auto online_pred = [&](const Tensor& v) {
        BackboneOutput out = forward_backbone(online, v, true);
        Tensor proj = apply_mlp_head(online, HeadKind::Projection, out.pooled, true);
        return apply_mlp_head(online, HeadKind::Predictor, proj, true);
    };
    Tensor p1 = online_pred(view1);
    Tensor p2 = online_pred(view2);
    Tensor z1, z2;
    {
        NoGradGuard ng;
        BackboneOutput t1 = forward_backbone(state.target, view1, true);
        z1 = apply_mlp_head(state.target, HeadKind::Projection, t1.pooled, true);
        BackboneOutput t2 = forward_backbone(state.target, view2, true);
        z2 = apply_mlp_head(state.target, HeadKind::Projection, t2.pooled, true);
    }
    Tensor loss = scale(add(byol_loss(p1, z2), byol_loss(p2, z1)), 0.5);
    ema_update(state.target, online, state.ema_rate);
    return loss;
}

}  // namespace s3l

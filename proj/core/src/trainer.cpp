#include "s3l/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "s3l/checkpoint.hpp"
#include "s3l/cost.hpp"
#include "s3l/evalmetrics.hpp"
#include "s3l/ops.hpp"

namespace fs = std::filesystem;

namespace s3l {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
    std::ostringstream os;
    os << "epoch,split,loss,accuracy,lr,wall_seconds\n";
    for (const auto& r : rows) {
        os << r.epoch << "," << r.split << "," << fmt_g(r.loss) << ",";
        if (r.accuracy >= 0) os << fmt_g(r.accuracy);
        os << "," << fmt_g(r.lr) << ",";
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.3f", r.wall_seconds);
        os << buf << "\n";
    }
    return os.str();
}

void append_metrics_csv(const fs::path& path, const std::vector<MetricsRow>& rows) {
    bool fresh = !fs::exists(path);
    std::ofstream out(path, std::ios::app);
    S3L_CHECK(out.good(), "metrics: cannot write ", path.string());
    if (fresh) out << "epoch,split,loss,accuracy,lr,wall_seconds\n";
    std::string all = metrics_to_csv(rows);
    out << all.substr(all.find('\n') + 1);  // strip header
}

Tensor stack_batch(const std::vector<Tensor>& images) {
    S3L_CHECK(!images.empty(), "stack_batch: empty batch");
    const auto& shape = images.front().shape();
    std::vector<int64_t> out_shape = {static_cast<int64_t>(images.size())};
    out_shape.insert(out_shape.end(), shape.begin(), shape.end());
    Tensor out = Tensor::zeros(out_shape, images.front().dtype());
    int64_t per = images.front().numel();
    for (size_t i = 0; i < images.size(); ++i) {
        S3L_CHECK(images[i].shape() == shape, "stack_batch: shape mismatch at sample ", i);
        for (int64_t k = 0; k < per; ++k)
            out.set(static_cast<int64_t>(i) * per + k, images[i].get(k));
    }
    return out;
}

Tensor one_hot(const std::vector<int64_t>& labels, int classes) {
    Tensor out = Tensor::zeros({static_cast<int64_t>(labels.size()), classes});
    for (size_t i = 0; i < labels.size(); ++i) {
        S3L_CHECK(labels[i] >= 0 && labels[i] < classes, "one_hot: label out of range");
        out.set(static_cast<int64_t>(i) * classes + labels[i], 1.0);
    }
    return out;
}

void SslSettings::validate() const {
    S3L_CONFIG_CHECK(temperature > 0 || method == SslMethod::Byol,
                     "ssl.temperature: must be > 0, got ", temperature);
    S3L_CONFIG_CHECK(proj_dim >= 2, "ssl.proj_dim: must be >= 2");
    S3L_CONFIG_CHECK(queue_capacity >= 1, "ssl.queue: must be positive");
    S3L_CONFIG_CHECK(encoder_momentum >= 0 && encoder_momentum <= 1,
                     "ssl.encoder_momentum: must lie in [0,1]");
    S3L_CONFIG_CHECK(target_momentum >= 0 && target_momentum <= 1,
                     "ssl.target_momentum: must lie in [0,1]");
    S3L_CONFIG_CHECK(weight_decay >= 0, "ssl.weight_decay: must be >= 0");
}

// ---- pretraining ---------------------------------------------------------------

namespace {

struct SslRunState {
    Network net;
    std::optional<MocoState> moco;
    std::optional<ByolState> byol;
};

SslRunState build_ssl_network(const BackboneSpec& spec, const SslSettings& ssl, uint64_t seed) {
    SslRunState st;
    SeededRng rng(seed);
    st.net = build_backbone(spec, rng);
    attach_head(st.net, HeadSpec::projection(spec.feature_dim(), ssl.proj_dim), rng);
    if (ssl.method == SslMethod::Byol)
        attach_head(st.net, HeadSpec::predictor(spec.feature_dim(), ssl.proj_dim), rng);
    if (ssl.method == SslMethod::MoCo)
        st.moco = MocoState::init(st.net, ssl.queue_capacity, ssl.encoder_momentum);
    if (ssl.method == SslMethod::Byol) st.byol = ByolState::init(st.net, ssl.target_momentum);
    return st;
}

Checkpoint snapshot(const SslRunState& st, const OptimState& opt, uint64_t seed, uint64_t stage,
                    uint64_t epoch) {
    Checkpoint ck;
    ck.spec_digest = st.net.spec().digest();
    ck.stage = stage;
    ck.epoch = epoch;
    ck.rng_seed = seed;
    pack_network(ck, st.net);
    for (const auto& [name, vel] : opt.velocities())
        ck.tensors.emplace_back("optim." + name, vel.clone());
    if (st.moco) {
        pack_network(ck, st.moco->key_encoder, "moco.key.");
        ck.tensors.emplace_back("moco.queue", st.moco->queue.clone());
        ck.queue_ptr = static_cast<uint64_t>(st.moco->ptr);
        ck.queue_fill = static_cast<uint64_t>(st.moco->fill);
    }
    if (st.byol) pack_network(ck, st.byol->target, "byol.target.");
    return ck;
}

void restore(const Checkpoint& ck, SslRunState& st, OptimState& opt) {
    unpack_network(ck, st.net);
    for (auto& [name, vel] : opt.velocities()) {
        const Tensor* src = ck.find("optim." + name);
        S3L_CHECK(src, "checkpoint: missing optimizer state for ", name);
        vel.copy_values_from(*src);
    }
    if (st.moco) {
        unpack_network(ck, st.moco->key_encoder, "moco.key.");
        const Tensor* q = ck.find("moco.queue");
        S3L_CHECK(q, "checkpoint: missing moco.queue");
        st.moco->queue.copy_values_from(*q);
        st.moco->ptr = static_cast<int64_t>(ck.queue_ptr);
        st.moco->fill = static_cast<int64_t>(ck.queue_fill);
    }
    if (st.byol) unpack_network(ck, st.byol->target, "byol.target.");
}

}  // namespace

PretrainRun pretrain(const BackboneSpec& spec, const std::vector<StagePlan>& plan_in,
                     const SslSettings& ssl, const InMemoryDataset& data, const AugPolicy& policy,
                     const PretrainOptions& options) {
    auto plan = validate_plan(plan_in);
    ssl.validate();
    policy.validate();
    S3L_CHECK(!data.train_indices.empty(), "pretrain: dataset has no train split");
    if (ssl.method == SslMethod::MoCo)
        for (const auto& stage : plan)
            S3L_CONFIG_CHECK(ssl.queue_capacity % stage.batch_size == 0,
                             "ssl.queue: capacity (", ssl.queue_capacity,
                             ") must be a multiple of the stage batch size (", stage.batch_size,
                             ")");

    SslRunState st = build_ssl_network(spec, ssl, options.seed);
    SeededRng root(options.seed);
    OptimState opt(st.net, {ssl.sgd_momentum, ssl.weight_decay});

    size_t start_stage = 0;
    int start_epoch = 0;
    if (!options.resume.empty()) {
        Checkpoint ck = load_checkpoint(options.resume);
        require_digest(ck, spec);
        restore(ck, st, opt);
        start_stage = ck.stage;
        start_epoch = static_cast<int>(ck.epoch);
        while (start_stage < plan.size() && start_epoch >= plan[start_stage].epochs) {
            ++start_stage;
            start_epoch = 0;
            opt = OptimState(st.net, {ssl.sgd_momentum, ssl.weight_decay});
        }
    }

    PretrainRun run;
    auto t0 = Clock::now();
    int global_epoch = 0;
    for (size_t s = 0; s < start_stage; ++s) global_epoch += plan[s].epochs;
    global_epoch += start_epoch;
    int done_epochs = 0;

    bool stopped = false;
    for (size_t s = start_stage; s < plan.size() && !stopped; ++s) {
        const StagePlan& stage = plan[s];
        if (!(s == start_stage && start_epoch > 0))
            opt = OptimState(st.net, {ssl.sgd_momentum, ssl.weight_decay});  // stage handoff: fresh velocities
        AugPolicy stage_policy = policy.at_resolution(stage.resolution);

        int first_epoch = s == start_stage ? start_epoch : 0;
        for (int epoch = first_epoch; epoch < stage.epochs; ++epoch) {
            double lr = stage.lr.at(epoch);
            std::vector<size_t> order = data.train_indices;
            root.stream("shuffle", {static_cast<uint64_t>(s), static_cast<uint64_t>(epoch)})
                .shuffle(order);

            double loss_sum = 0;
            int64_t loss_count = 0;
            for (size_t b0 = 0; b0 < order.size(); b0 += static_cast<size_t>(stage.batch_size)) {
                size_t b1 = std::min(order.size(), b0 + static_cast<size_t>(stage.batch_size));
                int64_t bsz = static_cast<int64_t>(b1 - b0);
                if (bsz < 2) break;  // BN and NT-Xent need at least 2
                if (ssl.method == SslMethod::MoCo && bsz != stage.batch_size) break;

                std::vector<Tensor> v1s, v2s;
                for (size_t k = b0; k < b1; ++k) {
                    size_t di = order[k];
                    ViewPair pair = make_view_pair(
                        data.images[di], stage_policy,
                        root.stream("aug", {static_cast<uint64_t>(s), static_cast<uint64_t>(epoch),
                                            static_cast<uint64_t>(di)}),
                        static_cast<int64_t>(di));
                    v1s.push_back(pair.first);
                    v2s.push_back(pair.second);
                }
                Tensor v1 = stack_batch(v1s);
                Tensor v2 = stack_batch(v2s);

                Tensor loss;
                switch (ssl.method) {
                    case SslMethod::MoCo:
                        loss = moco_step(st.net, *st.moco, v1, v2, ssl.temperature);
                        break;
                    case SslMethod::SimCLR:
                        loss = simclr_step(st.net, v1, v2, ssl.temperature);
                        break;
                    case SslMethod::Byol:
                        loss = byol_step(st.net, *st.byol, v1, v2);
                        break;
                }
                loss.backward();
                opt.step(st.net, lr);
                loss_sum += loss.scalar_value() * static_cast<double>(bsz);
                loss_count += bsz;
            }

            ++global_epoch;
            ++done_epochs;
            run.metrics.push_back({global_epoch, "pretrain",
                                   loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0,
                                   -1.0, lr, seconds_since(t0)});
            if (!options.out_dir.empty())
                save_checkpoint(snapshot(st, opt, options.seed, s, static_cast<uint64_t>(epoch + 1)),
                                options.out_dir / "last.ckpt");
            if (options.stop_after_epochs > 0 && done_epochs >= options.stop_after_epochs &&
                !(s + 1 == plan.size() && epoch + 1 == stage.epochs)) {
                stopped = true;
                break;
            }
        }
        if (!stopped && !options.out_dir.empty())
            save_checkpoint(
                snapshot(st, opt, options.seed, s, static_cast<uint64_t>(stage.epochs)),
                options.out_dir / ("stage" + std::to_string(s + 1) + ".ckpt"));
    }

    run.wall_seconds = seconds_since(t0);
    run.finished = !stopped;
    std::vector<HeadSpec> heads = {HeadSpec::projection(spec.feature_dim(), ssl.proj_dim)};
    if (ssl.method == SslMethod::Byol)
        heads.push_back(HeadSpec::predictor(spec.feature_dim(), ssl.proj_dim));
    run.weighted_macs = plan_cost(spec, plan, heads).weighted_mean;
    if (!options.out_dir.empty()) append_metrics_csv(options.out_dir / "metrics.csv", run.metrics);
    run.net = std::move(st.net);
    return run;
}

// ---- supervised ---------------------------------------------------------------

LrPolicy FinetuneSettings::lr_policy() const {
    LrPolicy p;
    if (protocol == FinetuneProtocol::Cosine01) {
        p.kind = LrKind::Cosine;
        p.base = 0.1;
        p.total_epochs = std::max(1, epochs);
    } else {
        p.kind = LrKind::Step;
        p.base = 0.01;
        p.step_period = 40;
        p.step_factor = 0.1;
    }
    return p;
}

double evaluate_top1(Network& net, const InMemoryDataset& data,
                     const std::vector<size_t>& indices, int resolution, int batch) {
    S3L_CHECK(!indices.empty(), "evaluate_top1: no samples");
    NoGradGuard ng;
    SeededRng unused(0);
    int64_t correct = 0;
    AugPolicy defaults;
    for (size_t b0 = 0; b0 < indices.size(); b0 += static_cast<size_t>(batch)) {
        size_t b1 = std::min(indices.size(), b0 + static_cast<size_t>(batch));
        std::vector<Tensor> imgs;
        std::vector<int64_t> labels;
        for (size_t k = b0; k < b1; ++k) {
            size_t di = indices[k];
            imgs.push_back(finetune_transform(data.images[di], false, resolution, unused,
                                              defaults.norm_mean, defaults.norm_std));
            labels.push_back(data.labels[di]);
        }
        Tensor x = stack_batch(imgs);
        Tensor logits = apply_classifier(net, forward_backbone(net, x, false).pooled);
        int64_t rows = logits.dim(0), cols = logits.dim(1);
        for (int64_t r = 0; r < rows; ++r) {
            int64_t best = 0;
            double best_v = logits.get(r * cols);
            for (int64_t c = 1; c < cols; ++c)
                if (logits.get(r * cols + c) > best_v) {
                    best_v = logits.get(r * cols + c);
                    best = c;
                }
            if (best == labels[static_cast<size_t>(r)]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

void warmup_new_block(Network& net, const InMemoryDataset& data, const std::string& stage,
                      int epochs, double lr, int batch, int resolution, uint64_t seed,
                      std::vector<MetricsRow>* metrics, double* wall_seconds) {
    S3L_CHECK(has_head(net, HeadKind::Classifier), "warmup: classifier head required");
    auto t0 = Clock::now();
    // freeze everything except the fresh stage and the classifier
    std::vector<std::string> frozen;
    frozen.push_back("stem.");
    for (const auto& st : net.spec().stages)
        if (st.name != stage) frozen.push_back(st.name + ".");
    ParamPartition part = param_groups(net, frozen);
    S3L_CHECK(!part.trainable.empty(), "warmup: nothing trainable");

    OptimState opt(net, {0.9, 5e-4});
    SeededRng root(seed);
    AugPolicy defaults;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::vector<size_t> order = data.train_indices;
        root.stream("warmup-shuffle", {static_cast<uint64_t>(epoch)}).shuffle(order);
        double loss_sum = 0;
        int64_t count = 0;
        for (size_t b0 = 0; b0 < order.size(); b0 += static_cast<size_t>(batch)) {
            size_t b1 = std::min(order.size(), b0 + static_cast<size_t>(batch));
            if (b1 - b0 < 2) break;
            std::vector<Tensor> imgs;
            std::vector<int64_t> labels;
            for (size_t k = b0; k < b1; ++k) {
                size_t di = order[k];
                SeededRng aug = root.stream(
                    "warmup-aug", {static_cast<uint64_t>(epoch), static_cast<uint64_t>(di)});
                imgs.push_back(finetune_transform(data.images[di], true, resolution, aug,
                                                  defaults.norm_mean, defaults.norm_std));
                labels.push_back(data.labels[di]);
            }
            Tensor x = stack_batch(imgs);
            Tensor logits = apply_classifier(net, forward_backbone(net, x, true).pooled);
            Tensor loss = softmax_cross_entropy(logits, labels);
            loss.backward();
            opt.step(net, lr);  // constant warmup lr
            loss_sum += loss.scalar_value() * static_cast<double>(b1 - b0);
            count += static_cast<int64_t>(b1 - b0);
        }
        if (metrics)
            metrics->push_back({epoch + 1, "warmup",
                                count ? loss_sum / static_cast<double>(count) : 0.0, -1.0, lr,
                                seconds_since(t0)});
    }
    // hand the network back fully trainable
    param_groups(net, {});
    if (wall_seconds) *wall_seconds += seconds_since(t0);
}

FinetuneRun finetune(Network net, const InMemoryDataset& data, const FinetuneSettings& settings,
                     uint64_t seed) {
    S3L_CHECK(settings.epochs >= 0, "finetune: negative epochs");
    S3L_CHECK(data.num_classes >= 2, "finetune: need at least 2 classes");
    auto t0 = Clock::now();

    detach_heads(net);  // heads are never carried from SSL into fine-tuning
    if (settings.reset_bn_stats)
        for (auto& e : net.entries()) {
            if (!e.buffer) continue;
            e.tensor.fill(e.name.ends_with(".running_var") ? 1.0 : 0.0);
        }
    SeededRng root(seed);
    attach_head(net, HeadSpec::classifier(data.num_classes), root.stream("classifier-init"));

    FinetuneRun run;
    if (!settings.warmup_stage.empty() && settings.warmup_epochs > 0)
        warmup_new_block(net, data, settings.warmup_stage, settings.warmup_epochs,
                         settings.warmup_lr, settings.batch, settings.resolution, seed,
                         &run.metrics, &run.warmup_seconds);

    param_groups(net, {});
    OptimState opt(net, {settings.sgd_momentum, settings.weight_decay});
    LrPolicy lrp = settings.lr_policy();
    AugPolicy defaults;

    if (settings.epochs == 0) {
        double acc = evaluate_top1(net, data, data.test_indices, settings.resolution,
                                   settings.batch);
        run.best_accuracy = run.last_accuracy = acc;
        run.metrics.push_back({0, "test", 0.0, acc, 0.0, seconds_since(t0)});
    }

    for (int epoch = 0; epoch < settings.epochs; ++epoch) {
        double lr = lrp.at(epoch);
        std::vector<size_t> order = data.train_indices;
        root.stream("ft-shuffle", {static_cast<uint64_t>(epoch)}).shuffle(order);

        double loss_sum = 0;
        int64_t count = 0;
        int64_t batch_index = 0;
        for (size_t b0 = 0; b0 < order.size(); b0 += static_cast<size_t>(settings.batch)) {
            size_t b1 = std::min(order.size(), b0 + static_cast<size_t>(settings.batch));
            int64_t bsz = static_cast<int64_t>(b1 - b0);
            if (bsz < 2) break;
            std::vector<Tensor> imgs;
            std::vector<int64_t> labels;
            for (size_t k = b0; k < b1; ++k) {
                size_t di = order[k];
                SeededRng aug = root.stream(
                    "ft-aug", {static_cast<uint64_t>(epoch), static_cast<uint64_t>(di)});
                imgs.push_back(finetune_transform(data.images[di], true, settings.resolution, aug,
                                                  defaults.norm_mean, defaults.norm_std));
                labels.push_back(data.labels[di]);
            }
            Tensor x = stack_batch(imgs);
            Tensor loss;
            if (settings.mixup) {
                SeededRng mix = root.stream("mixup", {static_cast<uint64_t>(epoch),
                                                      static_cast<uint64_t>(batch_index)});
                Tensor y = one_hot(labels, data.num_classes);
                MixupBatch mb = mixup_batch(x, y, settings.mixup_alpha, mix);
                Tensor logits = apply_classifier(net, forward_backbone(net, mb.x, true).pooled);
                std::vector<int64_t> perm_labels(labels.size());
                for (size_t i = 0; i < labels.size(); ++i)
                    perm_labels[i] = labels[static_cast<size_t>(mb.perm[i])];
                loss = add(scale(softmax_cross_entropy(logits, labels), mb.lambda),
                           scale(softmax_cross_entropy(logits, perm_labels), 1.0 - mb.lambda));
            } else {
                Tensor logits = apply_classifier(net, forward_backbone(net, x, true).pooled);
                loss = softmax_cross_entropy(logits, labels);
            }
            loss.backward();
            opt.step(net, lr);
            loss_sum += loss.scalar_value() * static_cast<double>(bsz);
            count += bsz;
            ++batch_index;
        }

        double acc = evaluate_top1(net, data, data.test_indices, settings.resolution,
                                   settings.batch);
        run.metrics.push_back({epoch + 1, "train",
                               count ? loss_sum / static_cast<double>(count) : 0.0, -1.0, lr,
                               seconds_since(t0)});
        run.metrics.push_back({epoch + 1, "test", 0.0, acc, lr, seconds_since(t0)});
        run.last_accuracy = acc;
        run.best_accuracy = std::max(run.best_accuracy, acc);
    }

    run.wall_seconds = seconds_since(t0);
    run.net = std::move(net);
    return run;
}

// ---- linear evaluation ----------------------------------------------------------

LinearProbeRun train_linear_probe(const Tensor& train_x, const std::vector<int64_t>& train_y,
                                  const Tensor& test_x, const std::vector<int64_t>& test_y,
                                  int classes, int epochs, const LrPolicy& lr, uint64_t seed) {
    S3L_CHECK(train_x.rank() == 2 && test_x.rank() == 2, "train_linear_probe: want [N,d] features");
    int64_t d = train_x.dim(1);
    SeededRng rng(seed);
    SeededRng wstream = rng.stream("probe-init");
    LinearProbeRun run;
    run.weight = Tensor::zeros({classes, d});
    for (int64_t i = 0; i < run.weight.numel(); ++i)
        run.weight.set(i, 0.01 * wstream.normal());
    run.bias = Tensor::zeros({classes});
    run.weight.set_requires_grad(true);
    run.bias.set_requires_grad(true);
    Tensor wv = Tensor::zeros({classes, d});
    Tensor bv = Tensor::zeros({classes});

    for (int epoch = 0; epoch < epochs; ++epoch) {
        Tensor logits = linear(train_x, run.weight, run.bias);
        Tensor loss = softmax_cross_entropy(logits, train_y);
        loss.backward();
        double rate = lr.at(epoch);
        sgd_step(run.weight, run.weight.grad(), wv, rate, 0.9, 0.0, "probe.weight");
        sgd_step(run.bias, run.bias.grad(), bv, rate, 0.9, 0.0, "probe.bias");
        run.weight.zero_grad();
        run.bias.zero_grad();
    }
    NoGradGuard ng;
    run.train_accuracy = top1_accuracy(linear(train_x, run.weight, run.bias), train_y);
    run.test_accuracy = top1_accuracy(linear(test_x, run.weight, run.bias), test_y);
    return run;
}

LinearEvalRun linear_eval(Network& net, const InMemoryDataset& data, int epochs, double lr0,
                          int batch, int resolution, uint64_t seed) {
    S3L_CHECK(data.num_classes >= 2, "linear_eval: need at least 2 classes");
    auto t0 = Clock::now();
    detach_heads(net);
    SeededRng root(seed);
    attach_head(net, HeadSpec::classifier(data.num_classes), root.stream("classifier-init"));

    // freeze the whole backbone; only head.classifier trains
    std::vector<std::string> frozen = {"stem."};
    for (const auto& st : net.spec().stages) frozen.push_back(st.name + ".");
    ParamPartition part = param_groups(net, frozen);
    S3L_CHECK(!part.trainable.empty(), "linear_eval: nothing trainable");

    LrPolicy lrp;
    lrp.kind = LrKind::Step;
    lrp.base = lr0;
    lrp.step_period = 40;
    lrp.step_factor = 0.1;
    // linear evaluation convention: no weight decay on the probe
    OptimState opt(net, {0.9, 0.0});
    AugPolicy defaults;

    LinearEvalRun run;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        double lr = lrp.at(epoch);
        std::vector<size_t> order = data.train_indices;
        root.stream("lineval-shuffle", {static_cast<uint64_t>(epoch)}).shuffle(order);
        double loss_sum = 0;
        int64_t count = 0;
        for (size_t b0 = 0; b0 < order.size(); b0 += static_cast<size_t>(batch)) {
            size_t b1 = std::min(order.size(), b0 + static_cast<size_t>(batch));
            if (b1 - b0 < 2) break;
            std::vector<Tensor> imgs;
            std::vector<int64_t> labels;
            for (size_t k = b0; k < b1; ++k) {
                size_t di = order[k];
                SeededRng aug = root.stream(
                    "lineval-aug", {static_cast<uint64_t>(epoch), static_cast<uint64_t>(di)});
                imgs.push_back(finetune_transform(data.images[di], true, resolution, aug,
                                                  defaults.norm_mean, defaults.norm_std));
                labels.push_back(data.labels[di]);
            }
            Tensor x = stack_batch(imgs);
            Tensor features;
            {
                // frozen backbone in eval mode: BN statistics must not move
                NoGradGuard ng;
                features = forward_backbone(net, x, false).pooled;
            }
            Tensor logits = apply_classifier(net, features);
            Tensor loss = softmax_cross_entropy(logits, labels);
            loss.backward();
            opt.step(net, lr);
            loss_sum += loss.scalar_value() * static_cast<double>(b1 - b0);
            count += static_cast<int64_t>(b1 - b0);
        }
        double acc = evaluate_top1(net, data, data.test_indices, resolution, batch);
        run.metrics.push_back({epoch + 1, "train",
                               count ? loss_sum / static_cast<double>(count) : 0.0, -1.0, lr,
                               seconds_since(t0)});
        run.metrics.push_back({epoch + 1, "test", 0.0, acc, lr, seconds_since(t0)});
        run.accuracy = std::max(run.accuracy, acc);
    }
    if (epochs == 0)
        run.accuracy = evaluate_top1(net, data, data.test_indices, resolution, batch);
    run.wall_seconds = seconds_since(t0);
    return run;
}

}  // namespace s3l

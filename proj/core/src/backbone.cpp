#include "s3l/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace s3l {

// ---- specs -----------------------------------------------------------------

int BackboneSpec::feature_dim() const {
    S3L_CHECK(!stages.empty(), "backbone spec has no stages");
    return stages.back().channels;
}

void BackboneSpec::validate() const {
    S3L_CHECK(stem.kernel >= 1 && stem.stride >= 1 && stem.channels >= 1, "invalid stem");
    S3L_CHECK(!stages.empty(), "backbone spec has no stages");
    std::set<std::string> seen;
    for (const auto& s : stages) {
        S3L_CHECK(!s.name.empty(), "stage name empty");
        S3L_CHECK(seen.insert(s.name).second, "duplicate stage name ", s.name);
        S3L_CHECK(s.blocks >= 1, "stage ", s.name, ": blocks must be >= 1");
        S3L_CHECK(s.channels >= 1, "stage ", s.name, ": channels must be positive");
        S3L_CHECK(s.stride >= 1, "stage ", s.name, ": stride must be >= 1");
        if (s.kind == BlockKind::Bottleneck)
            S3L_CHECK(s.channels % 4 == 0, "stage ", s.name,
                      ": bottleneck channels must be divisible by 4");
    }
}

std::string BackboneSpec::to_string() const {
    std::ostringstream os;
    os << "stem:k" << stem.kernel << ",s" << stem.stride << ",c" << stem.channels << ",p"
       << (stem.pool ? 1 : 0);
    for (const auto& s : stages)
        os << "|" << s.name << ":" << (s.kind == BlockKind::Basic ? "basic" : "bottleneck") << ",b"
           << s.blocks << ",c" << s.channels << ",s" << s.stride;
    return os.str();
}

uint64_t BackboneSpec::digest() const { return SeededRng::hash_name(to_string()); }

BackboneSpec BackboneSpec::make(const std::string& preset_name) {
    BackboneSpec spec;
    spec.preset = preset_name;
    if (preset_name == "resnet18") {
        spec.stem = {7, 2, 64, true};
        spec.stages = {{"conv2", BlockKind::Basic, 2, 64, 1},
                       {"conv3", BlockKind::Basic, 2, 128, 2},
                       {"conv4", BlockKind::Basic, 2, 256, 2},
                       {"conv5", BlockKind::Basic, 2, 512, 2}};
    } else if (preset_name == "resnet50") {
        spec.stem = {7, 2, 64, true};
        spec.stages = {{"conv2", BlockKind::Bottleneck, 3, 256, 1},
                       {"conv3", BlockKind::Bottleneck, 4, 512, 2},
                       {"conv4", BlockKind::Bottleneck, 6, 1024, 2},
                       {"conv5", BlockKind::Bottleneck, 3, 2048, 2}};
    } else if (preset_name == "mini18") {
        spec.stem = {3, 1, 16, false};
        spec.stages = {{"conv2", BlockKind::Basic, 1, 16, 1},
                       {"conv3", BlockKind::Basic, 1, 32, 2},
                       {"conv4", BlockKind::Basic, 1, 64, 2},
                       {"conv5", BlockKind::Basic, 1, 128, 2}};
    } else {
        throw ConfigError("unknown backbone preset: " + preset_name);
    }
    spec.validate();
    return spec;
}

BackboneSpec truncate_last_stage(const BackboneSpec& spec) {
    S3L_CHECK(spec.stages.size() >= 2, "truncate_last_stage: need at least 2 stages");
    BackboneSpec out = spec;
    out.stages.pop_back();
    if (!out.preset.empty()) out.preset += "-trunc";
    return out;
}

const char* head_kind_name(HeadKind k) {
    switch (k) {
        case HeadKind::Projection: return "projection";
        case HeadKind::Predictor: return "predictor";
        case HeadKind::Classifier: return "classifier";
    }
    return "?";
}

HeadSpec HeadSpec::projection(int hidden_width, int out_dim) {
    return {HeadKind::Projection, {hidden_width}, out_dim};
}
HeadSpec HeadSpec::predictor(int hidden_width, int out_dim) {
    return {HeadKind::Predictor, {hidden_width}, out_dim};
}
HeadSpec HeadSpec::classifier(int classes) { return {HeadKind::Classifier, {}, classes}; }

void HeadSpec::validate() const {
    S3L_CHECK(out_dim >= 1, "head out_dim must be positive");
    if (kind != HeadKind::Classifier)
        S3L_CHECK(!hidden.empty(), head_kind_name(kind), " head needs at least one hidden layer");
    for (int w : hidden) S3L_CHECK(w >= 1, "head hidden width must be positive");
}

// ---- network ---------------------------------------------------------------

Tensor& Network::param(const std::string& name) {
    auto it = index_.find(name);
    S3L_CHECK(it != index_.end(), "unknown parameter: ", name);
    return entries_[it->second].tensor;
}

const Tensor& Network::param(const std::string& name) const {
    auto it = index_.find(name);
    S3L_CHECK(it != index_.end(), "unknown parameter: ", name);
    return entries_[it->second].tensor;
}

Network::Entry& Network::entry(const std::string& name) {
    auto it = index_.find(name);
    S3L_CHECK(it != index_.end(), "unknown parameter: ", name);
    return entries_[it->second];
}

void Network::add(const std::string& name, Tensor t, bool trainable, bool buffer) {
    S3L_CHECK(!index_.count(name), "duplicate parameter: ", name);
    t.set_requires_grad(trainable && !buffer);
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(t), trainable && !buffer, buffer});
}

void Network::remove_prefix(const std::string& prefix) {
    std::vector<Entry> kept;
    kept.reserve(entries_.size());
    for (auto& e : entries_)
        if (e.name.rfind(prefix, 0) != 0) kept.push_back(std::move(e));
    entries_ = std::move(kept);
    index_.clear();
    for (size_t i = 0; i < entries_.size(); ++i) index_[entries_[i].name] = i;
}

std::vector<std::string> Network::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
        if (e.name.rfind(prefix, 0) == 0) out.push_back(e.name);
    return out;
}

void Network::set_trainable(const std::string& name, bool trainable) {
    Entry& e = entry(name);
    if (e.buffer) return;
    e.trainable = trainable;
    e.tensor.set_requires_grad(trainable);
}

Network Network::clone() const {
    Network out(spec_);
    for (const auto& e : entries_) out.add(e.name, e.tensor.clone(), e.trainable, e.buffer);
    return out;
}

// ---- construction ----------------------------------------------------------

namespace {

Tensor he_conv(const std::string& name, int out_ch, int in_ch, int k, const SeededRng& rng) {
    Tensor w = Tensor::zeros({out_ch, in_ch, k, k});
    SeededRng stream = rng.stream(name);
    double stddev = std::sqrt(2.0 / (static_cast<double>(k) * k * out_ch));
    int64_t n = w.numel();
    for (int64_t i = 0; i < n; ++i) w.set(i, stddev * stream.normal());
    return w;
}

Tensor he_linear(const std::string& name, int out_dim, int in_dim, const SeededRng& rng) {
    Tensor w = Tensor::zeros({out_dim, in_dim});
    SeededRng stream = rng.stream(name);
    double stddev = std::sqrt(2.0 / static_cast<double>(in_dim));
    int64_t n = w.numel();
    for (int64_t i = 0; i < n; ++i) w.set(i, stddev * stream.normal());
    return w;
}

void add_bn(Network& net, const std::string& prefix, int channels, bool zero_gamma) {
    net.add(prefix + ".gamma", Tensor::full({channels}, zero_gamma ? 0.0 : 1.0), true);
    net.add(prefix + ".beta", Tensor::zeros({channels}), true);
    net.add(prefix + ".running_mean", Tensor::zeros({channels}), false, true);
    net.add(prefix + ".running_var", Tensor::full({channels}, 1.0), false, true);
}

void add_conv_bn(Network& net, const std::string& conv_name, const std::string& bn_name, int out_ch,
                 int in_ch, int k, bool zero_gamma, const SeededRng& rng) {
    net.add(conv_name + ".weight", he_conv(conv_name + ".weight", out_ch, in_ch, k, rng), true);
    add_bn(net, bn_name, out_ch, zero_gamma);
}

void build_stage(Network& net, const StageSpec& stage, int in_ch, const SeededRng& rng) {
    for (int b = 0; b < stage.blocks; ++b) {
        std::string p = stage.name + "." + std::to_string(b);
        int stride = b == 0 ? stage.stride : 1;
        int block_in = b == 0 ? in_ch : stage.channels;
        if (stage.kind == BlockKind::Basic) {
            add_conv_bn(net, p + ".conv1", p + ".bn1", stage.channels, block_in, 3, false, rng);
            add_conv_bn(net, p + ".conv2", p + ".bn2", stage.channels, stage.channels, 3, true, rng);
        } else {
            int mid = stage.channels / 4;
            add_conv_bn(net, p + ".conv1", p + ".bn1", mid, block_in, 1, false, rng);
            add_conv_bn(net, p + ".conv2", p + ".bn2", mid, mid, 3, false, rng);
            add_conv_bn(net, p + ".conv3", p + ".bn3", stage.channels, mid, 1, true, rng);
        }
        if (stride != 1 || block_in != stage.channels)
            add_conv_bn(net, p + ".downsample.conv", p + ".downsample.bn", stage.channels, block_in,
                        1, false, rng);
    }
}

}  // namespace

Network build_backbone(const BackboneSpec& spec, const SeededRng& rng) {
    spec.validate();
    SeededRng init = rng.stream("param_init");
    Network net(spec);
    add_conv_bn(net, "stem.conv", "stem.bn", spec.stem.channels, 3, spec.stem.kernel, false, init);
    int in_ch = spec.stem.channels;
    for (const auto& stage : spec.stages) {
        build_stage(net, stage, in_ch, init);
        in_ch = stage.channels;
    }
    return net;
}

void reinit_stage(Network& net, const std::string& stage, const SeededRng& rng) {
    auto names = net.names_with_prefix(stage + ".");
    S3L_CHECK(!names.empty(), "reinit_stage: unknown stage name ", stage);
    SeededRng init = rng.stream("param_init");
    for (const auto& name : names) {
        Network::Entry& e = net.entry(name);
        if (name.ends_with(".weight")) {
            const auto& s = e.tensor.shape();
            if (s.size() == 4) {
                e.tensor.copy_values_from(
                    he_conv(name, static_cast<int>(s[0]), static_cast<int>(s[1]),
                            static_cast<int>(s[2]), init));
            } else {
                e.tensor.copy_values_from(
                    he_linear(name, static_cast<int>(s[0]), static_cast<int>(s[1]), init));
            }
        } else if (name.ends_with(".gamma")) {
            // fresh stage re-applies the zero-init rule for the block's last BN
            bool basic_stage = true;
            for (const auto& st : net.spec().stages)
                if (stage == st.name) basic_stage = st.kind == BlockKind::Basic;
            bool zero = basic_stage ? name.ends_with(".bn2.gamma") : name.ends_with(".bn3.gamma");
            e.tensor.fill(zero ? 0.0 : 1.0);
        } else if (name.ends_with(".beta") || name.ends_with(".running_mean")) {
            e.tensor.fill(0.0);
        } else if (name.ends_with(".running_var")) {
            e.tensor.fill(1.0);
        } else if (name.ends_with(".bias")) {
            e.tensor.fill(0.0);
        }
    }
}

void attach_head(Network& net, const HeadSpec& head, const SeededRng& rng) {
    head.validate();
    std::string base = std::string("head.") + head_kind_name(head.kind);
    S3L_CHECK(!has_head(net, head.kind), "duplicate head kind: ", head_kind_name(head.kind));
    SeededRng init = rng.stream("param_init");

    int in_dim;
    if (head.kind == HeadKind::Predictor) {
        // predictor consumes the projection output
        S3L_CHECK(has_head(net, HeadKind::Projection), "predictor head requires a projection head");
        auto names = net.names_with_prefix("head.projection.");
        int last_layer = -1;
        for (const auto& n : names)
            if (n.ends_with(".weight")) {
                int idx = std::stoi(n.substr(std::string("head.projection.").size()));
                last_layer = std::max(last_layer, idx);
            }
        in_dim = static_cast<int>(
            net.param("head.projection." + std::to_string(last_layer) + ".weight").dim(0));
    } else {
        in_dim = net.spec().feature_dim();
    }

    std::vector<int> dims;
    dims.push_back(in_dim);
    for (int h : head.hidden) dims.push_back(h);
    dims.push_back(head.out_dim);
    for (size_t layer = 0; layer + 1 < dims.size(); ++layer) {
        std::string p = base + "." + std::to_string(layer);
        net.add(p + ".weight", he_linear(p + ".weight", dims[layer + 1], dims[layer], init), true);
        net.add(p + ".bias", Tensor::zeros({dims[layer + 1]}), true);
        bool is_hidden = layer + 2 < dims.size();
        if (is_hidden) add_bn(net, p + ".bn", dims[layer + 1], false);
    }
}

void detach_heads(Network& net) { net.remove_prefix("head."); }

bool has_head(const Network& net, HeadKind kind) {
    return !net.names_with_prefix(std::string("head.") + head_kind_name(kind) + ".").empty();
}

ParamPartition param_groups(Network& net, const std::vector<std::string>& frozen_prefixes) {
    for (const auto& p : frozen_prefixes)
        S3L_CHECK(!net.names_with_prefix(p).empty(), "param_groups: prefix matches nothing: ", p);
    ParamPartition out;
    for (auto& e : net.entries()) {
        if (e.buffer) continue;
        bool frozen = false;
        for (const auto& p : frozen_prefixes)
            if (e.name.rfind(p, 0) == 0) {
                frozen = true;
                break;
            }
        e.trainable = !frozen;
        e.tensor.set_requires_grad(!frozen);
        (frozen ? out.frozen : out.trainable).push_back(e.name);
    }
    return out;
}

// ---- forward ---------------------------------------------------------------

namespace {

Tensor bn_layer(Network& net, const std::string& prefix, const Tensor& x, bool train) {
    BnStats stats{net.param(prefix + ".running_mean"), net.param(prefix + ".running_var")};
    return batch_norm(x, net.param(prefix + ".gamma"), net.param(prefix + ".beta"), &stats, train);
}

Tensor block_forward(Network& net, const StageSpec& stage, int b, const Tensor& in, bool train) {
    std::string p = stage.name + "." + std::to_string(b);
    int stride = b == 0 ? stage.stride : 1;
    bool has_down = net.has(p + ".downsample.conv.weight");
    Tensor identity = in;
    if (has_down) {
        identity = conv2d(in, net.param(p + ".downsample.conv.weight"), stride, 0);
        identity = bn_layer(net, p + ".downsample.bn", identity, train);
    }
    Tensor h;
    if (stage.kind == BlockKind::Basic) {
        h = relu(bn_layer(net, p + ".bn1", conv2d(in, net.param(p + ".conv1.weight"), stride, 1),
                          train));
        h = bn_layer(net, p + ".bn2", conv2d(h, net.param(p + ".conv2.weight"), 1, 1), train);
    } else {
        h = relu(bn_layer(net, p + ".bn1", conv2d(in, net.param(p + ".conv1.weight"), 1, 0), train));
        h = relu(bn_layer(net, p + ".bn2", conv2d(h, net.param(p + ".conv2.weight"), stride, 1),
                          train));
        h = bn_layer(net, p + ".bn3", conv2d(h, net.param(p + ".conv3.weight"), 1, 0), train);
    }
    return relu(add(h, identity));
}

}  // namespace

BackboneOutput forward_backbone(Network& net, const Tensor& x, bool train) {
    S3L_CHECK(x.rank() == 4 && x.dim(1) == 3, "forward_backbone: input must be Nx3xHxW");
    const BackboneSpec& spec = net.spec();
    Tensor h = conv2d(x, net.param("stem.conv.weight"), spec.stem.stride, spec.stem.kernel / 2);
    h = relu(bn_layer(net, "stem.bn", h, train));
    if (spec.stem.pool) h = max_pool2d(h, 3, 2, 1);
    for (const auto& stage : spec.stages)
        for (int b = 0; b < stage.blocks; ++b) h = block_forward(net, stage, b, h, train);
    BackboneOutput out;
    out.feature_map = h;
    out.pooled = global_avg_pool(h);
    return out;
}

Tensor apply_mlp_head(Network& net, HeadKind kind, const Tensor& x, bool train) {
    S3L_CHECK(kind != HeadKind::Classifier, "apply_mlp_head: use apply_classifier");
    std::string base = std::string("head.") + head_kind_name(kind);
    S3L_CHECK(has_head(net, kind), "no ", head_kind_name(kind), " head attached");
    Tensor h = x;
    for (int layer = 0;; ++layer) {
        std::string p = base + "." + std::to_string(layer);
        if (!net.has(p + ".weight")) break;
        h = linear(h, net.param(p + ".weight"), net.param(p + ".bias"));
        if (net.has(p + ".bn.gamma")) {
            BnStats stats{net.param(p + ".bn.running_mean"), net.param(p + ".bn.running_var")};
            h = batch_norm(h, net.param(p + ".bn.gamma"), net.param(p + ".bn.beta"), &stats, train);
            h = relu(h);
        }
    }
    return h;
}

Tensor apply_classifier(const Network& net, const Tensor& x) {
    S3L_CHECK(has_head(net, HeadKind::Classifier), "no classifier head attached");
    return linear(x, net.param("head.classifier.0.weight"), net.param("head.classifier.0.bias"));
}

}  // namespace s3l

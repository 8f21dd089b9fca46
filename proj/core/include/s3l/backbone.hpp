#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "s3l/ops.hpp"
#include "s3l/rng.hpp"
#include "s3l/tensor.hpp"

namespace s3l {

enum class BlockKind { Basic, Bottleneck };

struct StemSpec {
    int kernel = 7;
    int stride = 2;
    int channels = 64;
    bool pool = true;  // 3x3/2 max pool after the stem conv

    bool operator==(const StemSpec&) const = default;
};

struct StageSpec {
    std::string name;  // conv2..conv5
    BlockKind kind = BlockKind::Basic;
    int blocks = 1;
    int channels = 1;  // stage output channels (bottleneck: after expansion)
    int stride = 1;

    bool operator==(const StageSpec&) const = default;
};

/// Declarative residual CNN: a stem plus ordered stages. Presets reproduce
/// the canonical ResNet-18/50 stage tables; "mini18" is the desk-scale
/// variant with a 3x3/1 stem, no stem pool, and one block per stage.
struct BackboneSpec {
    std::string preset;  // informational label; not part of identity
    StemSpec stem;
    std::vector<StageSpec> stages;

    int feature_dim() const;
    void validate() const;
    std::string to_string() const;
    uint64_t digest() const;

    static BackboneSpec make(const std::string& preset_name);

    bool same_structure(const BackboneSpec& other) const {
        return stem == other.stem && stages == other.stages;
    }
};

/// Spec without its final stage; pooled features come from the penultimate
/// stage's channels.
BackboneSpec truncate_last_stage(const BackboneSpec& spec);

enum class HeadKind { Projection, Predictor, Classifier };

const char* head_kind_name(HeadKind k);

struct HeadSpec {
    HeadKind kind = HeadKind::Classifier;
    std::vector<int> hidden;  // hidden widths; projection/predictor need >= 1
    int out_dim = 0;

    static HeadSpec projection(int hidden_width, int out_dim);
    static HeadSpec predictor(int hidden_width, int out_dim);
    static HeadSpec classifier(int classes);

    void validate() const;
};

/// Ordered name -> tensor map built from a spec. Hierarchical names are
/// stable across builds of the same spec; heads live under "head.*".
class Network {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
        bool trainable = false;
        bool buffer = false;  // BN running stats etc.; never optimized
    };

    Network() = default;
    explicit Network(BackboneSpec spec) : spec_(std::move(spec)) {}

    const BackboneSpec& spec() const { return spec_; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;
    Entry& entry(const std::string& name);

    void add(const std::string& name, Tensor t, bool trainable, bool buffer = false);
    void remove_prefix(const std::string& prefix);
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;

    void set_trainable(const std::string& name, bool trainable);

    Network clone() const;

private:
    BackboneSpec spec_;
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

/// Deterministic He-style initialization from the rng's name-keyed streams.
Network build_backbone(const BackboneSpec& spec, const SeededRng& rng);

/// Redraw every parameter under `<stage>.`; everything else is untouched.
void reinit_stage(Network& net, const std::string& stage, const SeededRng& rng);

void attach_head(Network& net, const HeadSpec& head, const SeededRng& rng);
void detach_heads(Network& net);
bool has_head(const Network& net, HeadKind kind);

struct ParamPartition {
    std::vector<std::string> trainable;
    std::vector<std::string> frozen;
};

/// Freeze every parameter whose name starts with one of the prefixes; the
/// rest stay trainable. Returns the resulting disjoint, exhaustive partition
/// (buffers excluded: they are never optimized).
ParamPartition param_groups(Network& net, const std::vector<std::string>& frozen_prefixes);

struct BackboneOutput {
    Tensor feature_map;  // last stage output, NCHW
    Tensor pooled;       // [N, feature_dim]
};

BackboneOutput forward_backbone(Network& net, const Tensor& x, bool train);

/// Projection/predictor MLP: Linear -> BN -> ReLU per hidden layer, then a
/// final Linear. `kind` must be attached.
Tensor apply_mlp_head(Network& net, HeadKind kind, const Tensor& x, bool train);
Tensor apply_classifier(const Network& net, const Tensor& x);

}  // namespace s3l

#include "s3l/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "s3l/ssl.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace s3l {

namespace {

void require_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    S3L_CONFIG_CHECK(obj.is_object(), where, ": expected an object");
    for (const auto& [key, value] : obj.items())
        S3L_CONFIG_CHECK(allowed.count(key), where, ": unknown key '", key, "'");
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(key + ": wrong type");
    }
}

LrPolicy parse_lr(const json& j, const std::string& where, int stage_epochs, double auto_base) {
    LrPolicy p;
    p.kind = LrKind::Cosine;
    p.base = auto_base;
    p.total_epochs = stage_epochs;
    if (j.is_null()) {
        p.validate();
        return p;
    }
    require_keys(j, where, {"kind", "base", "total_epochs", "step_period", "step_factor"});
    std::string kind = get_or<std::string>(j, "kind", "cosine");
    if (kind == "cosine")
        p.kind = LrKind::Cosine;
    else if (kind == "step")
        p.kind = LrKind::Step;
    else if (kind == "constant")
        p.kind = LrKind::Constant;
    else
        throw ConfigError(where + ".kind: unknown schedule '" + kind + "'");
    p.base = get_or<double>(j, "base", auto_base);
    p.total_epochs = get_or<int>(j, "total_epochs", stage_epochs);
    p.step_period = get_or<int>(j, "step_period", 40);
    p.step_factor = get_or<double>(j, "step_factor", 0.1);
    p.validate();
    return p;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    require_keys(root, "config",
                 {"seed", "output_dir", "dataset", "backbone", "ssl", "plan", "finetune", "eval"});

    ExperimentConfig cfg;
    cfg.seed = get_or<uint64_t>(root, "seed", 1);
    S3L_CONFIG_CHECK(root.contains("output_dir"), "output_dir: required");
    cfg.output_dir = root.at("output_dir").get<std::string>();

    S3L_CONFIG_CHECK(root.contains("dataset"), "dataset: required");
    {
        const json& d = root.at("dataset");
        require_keys(d, "dataset", {"root", "manifest", "synthetic", "subsample"});
        S3L_CONFIG_CHECK(d.contains("root"), "dataset.root: required");
        cfg.dataset.root = d.at("root").get<std::string>();
        cfg.dataset.manifest = get_or<std::string>(d, "manifest", "manifest.csv");
        if (d.contains("synthetic")) {
            const json& s = d.at("synthetic");
            require_keys(s, "dataset.synthetic",
                         {"classes", "per_class_train", "per_class_test", "image_size", "seed"});
            SyntheticSpec spec;
            spec.classes = get_or<int>(s, "classes", 10);
            spec.per_class_train = get_or<int>(s, "per_class_train", 20);
            spec.per_class_test = get_or<int>(s, "per_class_test", 20);
            spec.image_size = get_or<int>(s, "image_size", 32);
            spec.seed = get_or<uint64_t>(s, "seed", 7);
            spec.validate();
            cfg.dataset.synthetic = spec;
        }
        if (d.contains("subsample")) {
            const json& s = d.at("subsample");
            require_keys(s, "dataset.subsample", {"n", "seed"});
            S3L_CONFIG_CHECK(s.contains("n"), "dataset.subsample.n: required");
            cfg.dataset.subsample_n = s.at("n").get<int64_t>();
            cfg.dataset.subsample_seed = get_or<uint64_t>(s, "seed", 0);
        }
    }

    if (root.contains("backbone")) {
        const json& b = root.at("backbone");
        require_keys(b, "backbone", {"preset", "truncate"});
        cfg.backbone.preset = get_or<std::string>(b, "preset", "mini18");
        cfg.backbone.truncate = get_or<bool>(b, "truncate", false);
        BackboneSpec::make(cfg.backbone.preset);  // rejects unknown presets early
    }

    PaperHyperparams paper{};
    if (root.contains("ssl")) {
        const json& s = root.at("ssl");
        require_keys(s, "ssl",
                     {"method", "temperature", "proj_dim", "queue", "encoder_momentum",
                      "target_momentum", "weight_decay"});
        cfg.ssl.method = parse_ssl_method(get_or<std::string>(s, "method", "simclr"));
        paper = paper_hyperparams(cfg.ssl.method, cfg.backbone.preset);
        cfg.ssl.temperature = get_or<double>(s, "temperature", paper.temperature > 0
                                                                   ? paper.temperature
                                                                   : 0.1);
        cfg.ssl.proj_dim = get_or<int>(s, "proj_dim", 128);
        cfg.ssl.queue_capacity = get_or<int>(s, "queue", paper.queue > 0 ? paper.queue : 512);
        cfg.ssl.encoder_momentum = get_or<double>(s, "encoder_momentum", 0.999);
        cfg.ssl.target_momentum = get_or<double>(s, "target_momentum", 0.996);
        cfg.ssl.weight_decay = get_or<double>(s, "weight_decay", 1e-4);
        cfg.ssl.validate();
    } else {
        paper = paper_hyperparams(cfg.ssl.method, cfg.backbone.preset);
    }

    if (root.contains("plan")) {
        const json& p = root.at("plan");
        S3L_CONFIG_CHECK(p.is_array(), "plan: expected an array of stages");
        size_t idx = 0;
        for (const auto& stage_json : p) {
            ++idx;
            std::string where = "plan[" + std::to_string(idx) + "]";
            require_keys(stage_json, where, {"resolution", "epochs", "batch_size", "lr"});
            StagePlan stage;
            S3L_CONFIG_CHECK(stage_json.contains("resolution"), where, ".resolution: required");
            S3L_CONFIG_CHECK(stage_json.contains("epochs"), where, ".epochs: required");
            stage.resolution = stage_json.at("resolution").get<int>();
            stage.epochs = stage_json.at("epochs").get<int>();
            stage.batch_size = get_or<int>(stage_json, "batch_size", 32);
            // linear-scaling rule against the paper's reference batch size
            double auto_base = paper.lr * static_cast<double>(stage.batch_size) / paper.batch;
            stage.lr = parse_lr(stage_json.contains("lr") ? stage_json.at("lr") : json(),
                                where + ".lr", stage.epochs, auto_base);
            cfg.plan.push_back(stage);
        }
        std::vector<std::string> warnings;
        cfg.plan = validate_plan(cfg.plan, &warnings);
        if (cfg.ssl.method == SslMethod::MoCo)
            for (const auto& stage : cfg.plan)
                S3L_CONFIG_CHECK(cfg.ssl.queue_capacity % stage.batch_size == 0,
                                 "ssl.queue: capacity must be a multiple of plan batch sizes");
    }

    if (root.contains("finetune")) {
        const json& f = root.at("finetune");
        require_keys(f, "finetune",
                     {"epochs", "protocol", "mixup", "mixup_alpha", "batch", "resolution",
                      "weight_decay", "reset_bn_stats", "warmup_epochs", "warmup_lr"});
        cfg.finetune.epochs = get_or<int>(f, "epochs", 120);
        S3L_CONFIG_CHECK(cfg.finetune.epochs >= 0, "finetune.epochs: must be >= 0");
        std::string protocol = get_or<std::string>(f, "protocol", "cosine-0.1");
        if (protocol == "cosine-0.1")
            cfg.finetune.protocol = FinetuneProtocol::Cosine01;
        else if (protocol == "step-0.01")
            cfg.finetune.protocol = FinetuneProtocol::Step001;
        else
            throw ConfigError("finetune.protocol: unknown protocol '" + protocol + "'");
        cfg.finetune.mixup = get_or<bool>(f, "mixup", false);
        cfg.finetune.mixup_alpha = get_or<double>(f, "mixup_alpha", 1.0);
        S3L_CONFIG_CHECK(cfg.finetune.mixup_alpha > 0, "finetune.mixup_alpha: must be > 0");
        cfg.finetune.batch = get_or<int>(f, "batch", 64);
        S3L_CONFIG_CHECK(cfg.finetune.batch >= 2, "finetune.batch: must be >= 2");
        cfg.finetune.resolution = get_or<int>(f, "resolution", 32);
        S3L_CONFIG_CHECK(cfg.finetune.resolution >= 1, "finetune.resolution: must be positive");
        cfg.finetune.weight_decay = get_or<double>(f, "weight_decay", 5e-4);
        cfg.finetune.reset_bn_stats = get_or<bool>(f, "reset_bn_stats", false);
        cfg.finetune.warmup_epochs = get_or<int>(f, "warmup_epochs", 10);
        cfg.finetune.warmup_lr = get_or<double>(f, "warmup_lr", 0.1);
    }

    if (root.contains("eval")) {
        const json& e = root.at("eval");
        require_keys(e, "eval", {"epochs", "lr0", "batch", "resolution"});
        cfg.eval.epochs = get_or<int>(e, "epochs", 30);
        cfg.eval.lr0 = get_or<double>(e, "lr0", 10.0);
        S3L_CONFIG_CHECK(cfg.eval.lr0 > 0, "eval.lr0: must be > 0");
        cfg.eval.batch = get_or<int>(e, "batch", 64);
        cfg.eval.resolution = get_or<int>(e, "resolution", 32);
    }

    return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& json_path) {
    std::ifstream in(json_path);
    S3L_CONFIG_CHECK(in.good(), "config: cannot open ", json_path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

BackboneSpec ExperimentConfig::backbone_spec() const {
    BackboneSpec spec = BackboneSpec::make(backbone.preset);
    if (backbone.truncate) spec = truncate_last_stage(spec);
    return spec;
}

Manifest ExperimentConfig::resolve_dataset() const {
    fs::path manifest_path = dataset.root / dataset.manifest;
    Manifest m;
    if (fs::exists(manifest_path)) {
        m = load_manifest(manifest_path);
    } else if (dataset.synthetic) {
        m = generate_synthetic(*dataset.synthetic, dataset.root);
    } else {
        throw ConfigError("dataset: manifest not found at " + manifest_path.string() +
                          " and no synthetic spec given");
    }
    if (dataset.subsample_n)
        m = subsample(m, *dataset.subsample_n, dataset.subsample_seed);
    return m;
}

}  // namespace s3l

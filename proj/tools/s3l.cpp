// s3l: scaled-down self-supervised learning experiments on the CPU.
//
// Subcommands: synth, pretrain, finetune, lineval, flops, report.
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "s3l/checkpoint.hpp"
#include "s3l/config.hpp"
#include "s3l/cost.hpp"
#include "s3l/gradcam.hpp"
#include "s3l/report.hpp"
#include "s3l/ssl.hpp"
#include "s3l/trainer.hpp"

namespace fs = std::filesystem;
using namespace s3l;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

/// One writer per output directory; a second concurrent run fails fast.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) {
        fs::create_directories(dir);
        path_ = dir / ".lock";
        std::ifstream probe(path_);
        if (probe.good()) throw Error("output directory is locked by another run: " + dir.string());
        std::ofstream out(path_, std::ios::trunc);
        S3L_CHECK(out.good(), "cannot create lock file in ", dir.string());
        out << "s3l\n";
        held_ = true;
    }
    ~DirLock() {
        if (held_) {
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
    bool held_ = false;
};

ExperimentConfig load_config(const std::string& path) {
    ExperimentConfig cfg = ExperimentConfig::load(path);
    if (const char* env_seed = std::getenv("S3L_SEED")) {
        try {
            cfg.seed = std::stoull(env_seed);
        } catch (const std::exception&) {
            throw ConfigError("S3L_SEED: not an integer: " + std::string(env_seed));
        }
    }
    return cfg;
}

void write_run_summary(const fs::path& out_dir, const RunReport& report) {
    std::ofstream out(out_dir / "run_summary.csv", std::ios::trunc);
    S3L_CHECK(out.good(), "cannot write run_summary.csv in ", out_dir.string());
    out << runs_to_csv({report});
}

std::vector<StagePlan> parse_plan_string(const std::string& text) {
    std::vector<StagePlan> plan;
    std::istringstream is(text);
    std::string token;
    while (std::getline(is, token, ',')) {
        auto colon = token.find(':');
        S3L_CONFIG_CHECK(colon != std::string::npos, "plan: want RES:EPOCHS, got '", token, "'");
        StagePlan stage;
        stage.resolution = std::stoi(token.substr(0, colon));
        stage.epochs = std::stoi(token.substr(colon + 1));
        plan.push_back(stage);
    }
    S3L_CONFIG_CHECK(!plan.empty(), "plan: empty");
    return plan;
}

int cmd_pretrain(const std::string& config_path, const std::string& resume,
                 int stop_after_epochs) {
    ExperimentConfig cfg = load_config(config_path);
    S3L_CONFIG_CHECK(!cfg.plan.empty(), "plan: required for pretrain");
    Manifest manifest = cfg.resolve_dataset();
    InMemoryDataset data = InMemoryDataset::load(manifest);
    BackboneSpec spec = cfg.backbone_spec();

    DirLock lock(cfg.output_dir);
    PretrainOptions options;
    options.seed = cfg.seed;
    options.out_dir = cfg.output_dir;
    options.stop_after_epochs = stop_after_epochs;
    if (!resume.empty()) options.resume = resume;

    AugPolicy policy;
    PretrainRun run = pretrain(spec, cfg.plan, cfg.ssl, data, policy, options);

    RunReport report;
    report.method = ssl_method_name(cfg.ssl.method);
    report.plan = plan_to_string(cfg.plan);
    report.macs = run.weighted_macs;
    report.wall_seconds = run.wall_seconds;
    write_run_summary(cfg.output_dir, report);
    std::cout << "pretrain done: method=" << report.method << " plan=" << report.plan
              << " epochs_run=" << run.metrics.size() << " final_loss="
              << (run.metrics.empty() ? 0.0 : run.metrics.back().loss) << "\n";
    return 0;
}

int cmd_finetune(const std::string& config_path, const std::string& from, bool random_init,
                 const std::string& drop_stage, bool removed_stage) {
    ExperimentConfig cfg = load_config(config_path);
    int modes = static_cast<int>(!from.empty()) + static_cast<int>(random_init);
    S3L_CONFIG_CHECK(modes == 1, "finetune: exactly one of --from or --random-init is required");
    S3L_CONFIG_CHECK(drop_stage.empty() || !removed_stage,
                     "finetune: --drop-stage and --removed-stage are mutually exclusive");

    Manifest manifest = cfg.resolve_dataset();
    InMemoryDataset data = InMemoryDataset::load(manifest);
    BackboneSpec spec = BackboneSpec::make(cfg.backbone.preset);  // fine-tuning runs the full net
    SeededRng rng(cfg.seed);

    FinetuneSettings settings = cfg.finetune;
    settings.warmup_stage.clear();

    Network net;
    std::string method = "random-init";
    if (random_init) {
        net = build_backbone(spec, rng);
    } else {
        Checkpoint ckpt = load_checkpoint(from);
        if (removed_stage) {
            // checkpoint holds conv1..conv4 only; append a fresh final stage
            BackboneSpec truncated = truncate_last_stage(spec);
            require_digest(ckpt, truncated);
            net = build_backbone(spec, rng);
            Network loaded = build_backbone(truncated, rng);
            unpack_network(ckpt, loaded);
            for (const auto& e : loaded.entries()) net.param(e.name).copy_values_from(e.tensor);
            settings.warmup_stage = spec.stages.back().name;
        } else {
            require_digest(ckpt, spec);
            net = build_backbone(spec, rng);
            unpack_network(ckpt, net);
            if (!drop_stage.empty()) {
                reinit_stage(net, drop_stage, rng.stream("drop-stage"));
                settings.warmup_stage = drop_stage;
            }
        }
        method = removed_stage ? "removed-stage" : (!drop_stage.empty() ? "drop-stage" : "ssl-init");
    }

    DirLock lock(cfg.output_dir);
    FinetuneRun run = finetune(std::move(net), data, settings, cfg.seed);
    append_metrics_csv(cfg.output_dir / "metrics.csv", run.metrics);

    Checkpoint final_ckpt;
    final_ckpt.spec_digest = spec.digest();
    final_ckpt.rng_seed = cfg.seed;
    pack_network(final_ckpt, run.net);
    save_checkpoint(final_ckpt, cfg.output_dir / "finetuned.ckpt");

    RunReport report;
    report.method = method;
    report.plan = cfg.plan.empty() ? std::to_string(settings.resolution) + ":0"
                                   : plan_to_string(cfg.plan);
    report.macs = static_cast<double>(count_macs(spec, settings.resolution,
                                                 {HeadSpec::classifier(data.num_classes)}));
    report.wall_seconds = run.wall_seconds;
    if (settings.mixup)
        report.acc_mixup = run.best_accuracy;
    else
        report.acc_normal = run.best_accuracy;
    write_run_summary(cfg.output_dir, report);
    std::cout << "finetune done: mode=" << method << " best_acc=" << run.best_accuracy
              << " last_acc=" << run.last_accuracy << " warmup_s=" << run.warmup_seconds << "\n";
    return 0;
}

int cmd_lineval(const std::string& config_path, const std::string& from) {
    ExperimentConfig cfg = load_config(config_path);
    S3L_CONFIG_CHECK(!from.empty(), "lineval: --from checkpoint is required");
    Manifest manifest = cfg.resolve_dataset();
    InMemoryDataset data = InMemoryDataset::load(manifest);
    BackboneSpec spec = cfg.backbone_spec();

    Checkpoint ckpt = load_checkpoint(from);
    require_digest(ckpt, spec);
    SeededRng rng(cfg.seed);
    Network net = build_backbone(spec, rng);
    unpack_network(ckpt, net);

    DirLock lock(cfg.output_dir);
    LinearEvalRun run =
        linear_eval(net, data, cfg.eval.epochs, cfg.eval.lr0, cfg.eval.batch, cfg.eval.resolution,
                    cfg.seed);
    append_metrics_csv(cfg.output_dir / "metrics.csv", run.metrics);

    RunReport report;
    report.method = std::string(ssl_method_name(cfg.ssl.method)) + "-lineval";
    report.plan = cfg.plan.empty() ? "" : plan_to_string(cfg.plan);
    report.macs = static_cast<double>(count_macs(spec, cfg.eval.resolution,
                                                 {HeadSpec::classifier(data.num_classes)}));
    report.wall_seconds = run.wall_seconds;
    report.acc_normal = run.accuracy;
    write_run_summary(cfg.output_dir, report);
    std::cout << "lineval done: acc=" << run.accuracy << "\n";
    return 0;
}

int cmd_flops(const std::string& backbone, const std::string& res_list, const std::string& plan_str,
              int classes) {
    BackboneSpec spec = BackboneSpec::make(backbone);
    std::vector<HeadSpec> heads = {HeadSpec::classifier(classes)};

    std::cout << "stage,resolution,epochs,macs_m,weighted_mean_m\n";
    char buf[64];
    if (!res_list.empty()) {
        std::istringstream is(res_list);
        std::string token;
        int idx = 0;
        while (std::getline(is, token, ',')) {
            int r = std::stoi(token);
            double m = static_cast<double>(count_macs(spec, r, heads)) / 1e6;
            std::snprintf(buf, sizeof(buf), "%.2f", m);
            std::cout << ++idx << "," << r << ",," << buf << ",\n";
        }
    }
    if (!plan_str.empty()) {
        std::vector<StagePlan> plan = parse_plan_string(plan_str);
        CostReport report = plan_cost(spec, plan, heads);
        int total_epochs = 0;
        for (const auto& row : report.rows) {
            std::snprintf(buf, sizeof(buf), "%.2f", row.macs / 1e6);
            std::cout << "plan" << row.stage << "," << row.resolution << "," << row.epochs << ","
                      << buf << ",\n";
            total_epochs += row.epochs;
        }
        std::snprintf(buf, sizeof(buf), "%.2f", report.weighted_mean / 1e6);
        std::cout << "weighted,," << total_epochs << ",," << buf << "\n";
    }
    return 0;
}

int cmd_report(const std::string& dir) {
    S3L_CONFIG_CHECK(fs::is_directory(dir), "report: not a directory: ", dir);
    std::vector<fs::path> summaries;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory() && fs::exists(entry.path() / "run_summary.csv"))
            summaries.push_back(entry.path() / "run_summary.csv");
    std::sort(summaries.begin(), summaries.end());
    S3L_CONFIG_CHECK(!summaries.empty(), "report: no run_summary.csv found under ", dir);

    std::vector<RunReport> runs;
    for (const auto& p : summaries)
        for (const auto& r : parse_runs_csv(p)) runs.push_back(r);
    emit_report(runs, dir);
    std::cout << "report done: " << runs.size() << " runs -> "
              << (fs::path(dir) / "runs.csv").string() << "\n";
    return 0;
}

int cmd_synth(const std::string& out, int classes, int per_class_train, int per_class_test,
              int image_size, uint64_t seed) {
    SyntheticSpec spec;
    spec.classes = classes;
    spec.per_class_train = per_class_train;
    spec.per_class_test = per_class_test;
    spec.image_size = image_size;
    spec.seed = seed;
    Manifest m = generate_synthetic(spec, out);
    std::cout << "synth done: " << m.records.size() << " images under " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scaled-down self-supervised learning engine"};
    app.require_subcommand(1);

    std::string config_path, resume, from, drop_stage, backbone = "resnet18", res_list, plan_str,
                             report_dir, synth_out;
    bool random_init = false, removed_stage = false;
    int stop_after = -1, classes = 1000;
    int synth_classes = 10, synth_train = 20, synth_test = 20, synth_size = 32;
    uint64_t synth_seed = 7;

    auto* pre = app.add_subcommand("pretrain", "multi-stage SSL pretraining");
    pre->add_option("-c,--config", config_path, "experiment config (JSON)")->required();
    pre->add_option("--resume", resume, "checkpoint to resume from");
    pre->add_option("--stop-after-epochs", stop_after, "stop cleanly after N global epochs");

    auto* fin = app.add_subcommand("finetune", "supervised fine-tuning");
    fin->add_option("-c,--config", config_path, "experiment config (JSON)")->required();
    fin->add_option("--from", from, "pretraining checkpoint");
    fin->add_flag("--random-init", random_init, "train from scratch");
    fin->add_option("--drop-stage", drop_stage, "re-initialize this stage, then warm it up");
    fin->add_flag("--removed-stage", removed_stage,
                  "checkpoint is truncated; append a fresh final stage and warm it up");

    auto* lin = app.add_subcommand("lineval", "linear evaluation on frozen features");
    lin->add_option("-c,--config", config_path, "experiment config (JSON)")->required();
    lin->add_option("--from", from, "pretraining checkpoint")->required();

    auto* flops = app.add_subcommand("flops", "cost model (MACs per image)");
    flops->add_option("--backbone", backbone, "resnet18 | resnet50 | mini18")->required();
    flops->add_option("--res", res_list, "comma-separated resolutions, e.g. 224,112,56");
    flops->add_option("--plan", plan_str, "stage plan RES:EPOCHS[,RES:EPOCHS...]");
    flops->add_option("--classes", classes, "classifier width for the cost model");

    auto* rep = app.add_subcommand("report", "aggregate runs into runs.csv + scatter.svg");
    rep->add_option("--dir", report_dir, "directory of run output dirs")->required();

    auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--classes", synth_classes, "class count");
    synth->add_option("--per-class-train", synth_train, "train images per class");
    synth->add_option("--per-class-test", synth_test, "test images per class");
    synth->add_option("--size", synth_size, "image size in pixels");
    synth->add_option("--seed", synth_seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (pre->parsed()) return cmd_pretrain(config_path, resume, stop_after);
        if (fin->parsed())
            return cmd_finetune(config_path, from, random_init, drop_stage, removed_stage);
        if (lin->parsed()) return cmd_lineval(config_path, from);
        if (flops->parsed()) return cmd_flops(backbone, res_list, plan_str, classes);
        if (rep->parsed()) return cmd_report(report_dir);
        if (synth->parsed())
            return cmd_synth(synth_out, synth_classes, synth_train, synth_test, synth_size,
                             synth_seed);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}

#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace s3l {

/// One completed run for the time-vs-accuracy scatter. Absent accuracies are
/// negative (pretraining-only runs).
struct RunReport {
    std::string method;  // "moco" | "simclr" | "byol" | "random-init" | ...
    std::string plan;    // e.g. "16:100,32:50"
    double macs = 0;     // epoch-weighted MACs per image
    double wall_seconds = 0;
    double acc_normal = -1;
    double acc_mixup = -1;

    bool operator==(const RunReport&) const = default;
};

std::string runs_to_csv(const std::vector<RunReport>& runs);
std::vector<RunReport> parse_runs_csv(const std::filesystem::path& path);

/// Writes runs.csv plus a standalone scatter.svg (wall seconds vs accuracy,
/// one marker per run, per-method colors, inline styles only). Byte-stable
/// for identical inputs.
void emit_report(const std::vector<RunReport>& runs, const std::filesystem::path& out_dir);

}  // namespace s3l

#pragma once

#include <string>
#include <vector>

#include "s3l/common.hpp"

namespace s3l {

enum class LrKind { Cosine, Step, Constant };

struct LrPolicy {
    LrKind kind = LrKind::Cosine;
    double base = 0.1;
    int total_epochs = 100;  // cosine horizon T
    int step_period = 40;
    double step_factor = 0.1;

    void validate() const;
    double at(int epoch) const;
};

/// base * (1 + cos(pi t / T)) / 2; no warmup, floor 0.
double cosine_lr(int t, const LrPolicy& policy);
/// base * factor^floor(epoch / period).
double step_lr(int epoch, const LrPolicy& policy);

enum class StageInit { Fresh, Previous };

struct StagePlan {
    int resolution = 32;
    int epochs = 1;
    StageInit init = StageInit::Previous;
    LrPolicy lr;
    int batch_size = 32;
};

/// Normalizes and checks a pretraining curriculum: stage 1 starts fresh,
/// later stages resume the previous checkpoint, and resolutions should be
/// non-decreasing (a decrease is flagged as a warning, not an error).
std::vector<StagePlan> validate_plan(std::vector<StagePlan> stages,
                                     std::vector<std::string>* warnings = nullptr);

std::string plan_to_string(const std::vector<StagePlan>& stages);

}  // namespace s3l

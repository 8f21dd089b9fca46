#include "s3l/schedule.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace s3l {

void LrPolicy::validate() const {
    S3L_CONFIG_CHECK(base > 0, "lr: base learning rate must be positive, got ", base);
    if (kind == LrKind::Cosine)
        S3L_CONFIG_CHECK(total_epochs >= 1, "lr: cosine schedule needs total epochs >= 1");
    if (kind == LrKind::Step) {
        S3L_CONFIG_CHECK(step_period >= 1, "lr: step period must be >= 1");
        S3L_CONFIG_CHECK(step_factor > 0 && step_factor < 1,
                         "lr: step factor must lie in (0,1), got ", step_factor);
    }
}

double LrPolicy::at(int epoch) const {
    switch (kind) {
        case LrKind::Cosine: return cosine_lr(epoch, *this);
        case LrKind::Step: return step_lr(epoch, *this);
        case LrKind::Constant: return base;
    }
    return base;
}

double cosine_lr(int t, const LrPolicy& policy) {
    S3L_CHECK(t >= 0 && t <= policy.total_epochs, "cosine_lr: epoch ", t, " outside [0, ",
              policy.total_epochs, "]");
    return policy.base * 0.5 *
           (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / policy.total_epochs));
}

double step_lr(int epoch, const LrPolicy& policy) {
    S3L_CHECK(epoch >= 0, "step_lr: epoch must be non-negative");
    return policy.base * std::pow(policy.step_factor, epoch / policy.step_period);
}

std::vector<StagePlan> validate_plan(std::vector<StagePlan> stages,
                                     std::vector<std::string>* warnings) {
    S3L_CONFIG_CHECK(!stages.empty(), "plan: needs at least one stage");
    for (size_t i = 0; i < stages.size(); ++i) {
        StagePlan& s = stages[i];
        S3L_CONFIG_CHECK(s.resolution >= 1, "plan: stage ", i + 1, " resolution must be positive");
        S3L_CONFIG_CHECK(s.epochs >= 1, "plan: stage ", i + 1, " epochs must be positive");
        S3L_CONFIG_CHECK(s.batch_size >= 2, "plan: stage ", i + 1, " batch size must be >= 2");
        s.lr.validate();
        s.init = i == 0 ? StageInit::Fresh : StageInit::Previous;
        if (i > 0 && s.resolution < stages[i - 1].resolution && warnings)
            warnings->push_back(detail::concat("plan: stage ", i + 1, " resolution ", s.resolution,
                                               " decreases from ", stages[i - 1].resolution));
    }
    return stages;
}

std::string plan_to_string(const std::vector<StagePlan>& stages) {
    std::ostringstream os;
    for (size_t i = 0; i < stages.size(); ++i) {
        if (i) os << ",";
        os << stages[i].resolution << ":" << stages[i].epochs;
    }
    return os.str();
}

}  // namespace s3l

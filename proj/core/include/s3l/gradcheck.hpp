#pragma once

#include <functional>
#include <vector>

#include "s3l/tensor.hpp"

namespace s3l {

struct GradCheckReport {
    /// Worst relative error per input, |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
    std::vector<double> max_rel_err;
    double worst = 0.0;

    bool passes(double tolerance) const { return worst < tolerance; }
};

/// Central-difference check of reverse-mode gradients. `f` must map the
/// given f64 inputs to a scalar and be free of cross-call side effects on
/// anything it reads. Each listed input is probed elementwise with step h.
GradCheckReport check_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                std::vector<Tensor> inputs, double h = 1e-5);

}  // namespace s3l

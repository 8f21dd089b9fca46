#include "s3l/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace s3l {

GradCheckReport check_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                std::vector<Tensor> inputs, double h) {
    S3L_CHECK(!inputs.empty(), "check_gradients: no inputs");
    for (auto& t : inputs) {
        S3L_CHECK(t.dtype() == DType::F64, "check_gradients: inputs must be f64");
        t.set_requires_grad(true);
        t.zero_grad();
    }

    Tensor loss = f(inputs);
    S3L_CHECK(loss.numel() == 1, "check_gradients: f must be scalar-valued");
    S3L_CHECK(std::isfinite(loss.scalar_value()), "check_gradients: non-finite loss");
    loss.backward();

    GradCheckReport report;
    for (auto& input : inputs) {
        Tensor ad = input.grad();
        double worst = 0.0;
        int64_t n = input.numel();
        for (int64_t i = 0; i < n; ++i) {
            double keep = input.get(i);
            input.set(i, keep + h);
            double up;
            {
                NoGradGuard ng;
                up = f(inputs).scalar_value();
            }
            input.set(i, keep - h);
            double down;
            {
                NoGradGuard ng;
                down = f(inputs).scalar_value();
            }
            input.set(i, keep);
            S3L_CHECK(std::isfinite(up) && std::isfinite(down),
                      "check_gradients: non-finite intermediate");
            double fd = (up - down) / (2.0 * h);
            double g = ad.defined() ? ad.get(i) : 0.0;
            double err = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-8});
            worst = std::max(worst, err);
        }
        report.max_rel_err.push_back(worst);
        report.worst = std::max(report.worst, worst);
    }
    return report;
}

}  // namespace s3l

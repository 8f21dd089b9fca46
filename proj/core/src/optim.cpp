#include "s3l/optim.hpp"

#include <algorithm>
#include <cmath>

namespace s3l {

namespace {

bool decays(const std::string& name) {
    // conv/linear weights only; gamma/beta/bias are exempt
    return name.ends_with(".weight");
}

}  // namespace

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum,
              double weight_decay, const std::string& name) {
    S3L_CHECK(param.shape() == grad.shape(), "sgd_step: grad shape mismatch for ", name);
    S3L_CHECK(param.shape() == velocity.shape(), "sgd_step: velocity shape mismatch for ", name);
    S3L_CHECK(lr >= 0, "sgd_step: negative learning rate");
    double wd = decays(name) ? weight_decay : 0.0;
    int64_t n = param.numel();
    for (int64_t i = 0; i < n; ++i) {
        double g = grad.get(i);
        if (!std::isfinite(g))
            throw Error(detail::concat("sgd_step: non-finite gradient in ", name, " at element ",
                                       i, " (", g, ")"));
        g += wd * param.get(i);
        double v = momentum * velocity.get(i) + g;
        velocity.set(i, v);
        param.set(i, param.get(i) - lr * v);
    }
}

OptimState::OptimState(const Network& net, SgdConfig cfg) : cfg_(cfg) {
    for (const auto& e : net.entries())
        if (e.trainable && !e.buffer)
            velocity_.emplace_back(e.name, Tensor::zeros(e.tensor.shape(), e.tensor.dtype()));
}

void OptimState::step(Network& net, double lr) {
    for (auto& [name, vel] : velocity_) {
        Network::Entry& e = net.entry(name);
        if (!e.trainable) continue;
        Tensor g = e.tensor.grad();
        if (!g.defined()) continue;
        sgd_step(e.tensor, g, vel, lr, cfg_.momentum, cfg_.weight_decay, name);
        e.tensor.zero_grad();
    }
}

void OptimState::sync(const Network& net) {
    std::vector<std::pair<std::string, Tensor>> next;
    for (const auto& e : net.entries()) {
        if (!e.trainable || e.buffer) continue;
        auto it = std::find_if(velocity_.begin(), velocity_.end(),
                               [&](const auto& kv) { return kv.first == e.name; });
        if (it != velocity_.end() && it->second.shape() == e.tensor.shape())
            next.emplace_back(e.name, it->second);
        else
            next.emplace_back(e.name, Tensor::zeros(e.tensor.shape(), e.tensor.dtype()));
    }
    velocity_ = std::move(next);
}

void OptimState::reset_velocity() {
    for (auto& [name, vel] : velocity_) vel.fill(0.0);
}

}  // namespace s3l

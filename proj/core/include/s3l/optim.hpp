#pragma once

#include <string>
#include <utility>
#include <vector>

#include "s3l/backbone.hpp"

namespace s3l {

struct SgdConfig {
    double momentum = 0.9;
    double weight_decay = 5e-4;
};

/// SGD with momentum and decoupled-by-name weight decay: the decay term is
/// added to conv/linear weight gradients only, never to BN parameters or
/// biases. Velocity buffers exist for trainable parameters only, so frozen
/// parameters are untouched bit-for-bit.
class OptimState {
public:
    OptimState() = default;
    OptimState(const Network& net, SgdConfig cfg);

    const SgdConfig& config() const { return cfg_; }

    /// g' = g + wd*theta (weights only); v <- mu*v + g'; theta <- theta - lr*v.
    /// Consumes and clears gradients. Parameters without an accumulated
    /// gradient are skipped. Non-finite gradients abort with diagnostics.
    void step(Network& net, double lr);

    /// Drop buffers for parameters that are gone or frozen, add zeroed ones
    /// for newly trainable parameters (stage handoff, freeze changes).
    void sync(const Network& net);

    void reset_velocity();

    std::vector<std::pair<std::string, Tensor>>& velocities() { return velocity_; }
    const std::vector<std::pair<std::string, Tensor>>& velocities() const { return velocity_; }

private:
    SgdConfig cfg_;
    std::vector<std::pair<std::string, Tensor>> velocity_;
};

/// Single-tensor update used by OptimState; exposed for direct use and tests.
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum,
              double weight_decay, const std::string& name);

}  // namespace s3l

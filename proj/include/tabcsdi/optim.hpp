#pragma once

#include <string>
#include <vector>

#include "tabcsdi/tensor.hpp"

namespace tabcsdi {

// A trainable tensor. Gradients are accumulated here between tape runs and
// cleared by the optimizer step.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { std::fill(grad.vec().begin(), grad.vec().end(), real_t(0)); }
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam. Moments are kept per parameter, matched by position in
// the parameter list handed to step(); the list must be stable across steps.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(std::vector<Parameter*>& params, double lr);

    int64_t steps_taken() const { return step_; }

private:
    struct Slot {
        Tensor m, v;
    };
    AdamConfig cfg_;
    std::vector<Slot> slots_;
    int64_t step_ = 0;
};

// MultiStep decay: lr = base_lr * 0.1^k where k counts milestones
// {floor(0.25E), floor(0.5E), floor(0.75E), floor(0.9E)} with milestone <= epoch.
double lr_at_epoch(int epoch, int total_epochs, double base_lr);

} // namespace tabcsdi

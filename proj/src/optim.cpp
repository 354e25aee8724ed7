#include "tabcsdi/optim.hpp"

#include <cmath>

namespace tabcsdi {

void Adam::step(std::vector<Parameter*>& params, double lr) {
    if (slots_.empty()) {
        slots_.reserve(params.size());
        for (Parameter* p : params) slots_.push_back({Tensor(p->value.shape()), Tensor(p->value.shape())});
    }
    if (slots_.size() != params.size()) fail("adam: parameter list changed size between steps");
    ++step_;
    const double b1 = cfg_.beta1;
    const double b2 = cfg_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        Slot& s = slots_[i];
        if (!p.grad.same_shape(p.value))
            fail("adam: gradient shape ", shape_str(p.grad.shape()), " vs parameter ", shape_str(p.value.shape()),
                 " for '", p.name, "'");
        real_t* w = p.value.data();
        real_t* g = p.grad.data();
        real_t* m = s.m.data();
        real_t* v = s.v.data();
        const int64_t n = p.value.numel();
        for (int64_t j = 0; j < n; ++j) {
            const double gj = static_cast<double>(g[j]);
            if (!std::isfinite(gj)) fail("adam: non-finite gradient in parameter '", p.name, "'");
            const double mj = b1 * m[j] + (1.0 - b1) * gj;
            const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
            m[j] = static_cast<real_t>(mj);
            v[j] = static_cast<real_t>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            w[j] = static_cast<real_t>(w[j] - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
        p.zero_grad();
    }
}

double lr_at_epoch(int epoch, int total_epochs, double base_lr) {
    if (total_epochs <= 0) fail("lr_at_epoch: total_epochs must be positive, got ", total_epochs);
    if (epoch < 0 || epoch >= total_epochs)
        fail("lr_at_epoch: epoch ", epoch, " outside [0,", total_epochs, ")");
    if (base_lr <= 0) fail("lr_at_epoch: base_lr must be positive, got ", base_lr);
    const double fractions[4] = {0.25, 0.5, 0.75, 0.9};
    double lr = base_lr;
    for (double f : fractions) {
        int milestone = static_cast<int>(std::floor(f * total_epochs));
        if (epoch >= milestone) lr *= 0.1;
    }
    return lr;
}

} // namespace tabcsdi

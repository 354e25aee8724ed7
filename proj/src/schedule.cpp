#include "tabcsdi/schedule.hpp"

#include <cmath>

namespace tabcsdi {

NoiseSchedule NoiseSchedule::build(int T, double beta_min, double beta_max) {
    if (T < 2) fail("schedule: T must be >= 2, got ", T);
    if (!(beta_min > 0.0) || !(beta_min < beta_max) || !(beta_max < 1.0))
        fail("schedule: need 0 < beta_min < beta_max < 1, got ", beta_min, ", ", beta_max);
    NoiseSchedule s;
    s.T = T;
    s.beta_min = beta_min;
    s.beta_max = beta_max;
    s.beta_.resize(static_cast<size_t>(T));
    s.alpha_.resize(static_cast<size_t>(T));
    s.alpha_bar_.resize(static_cast<size_t>(T));
    s.sigma_.resize(static_cast<size_t>(T));
    const double r0 = std::sqrt(beta_min);
    const double r1 = std::sqrt(beta_max);
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
        double r = r0 + (static_cast<double>(t - 1) / (T - 1)) * (r1 - r0);
        double b = r * r;
        s.beta_[static_cast<size_t>(t - 1)] = b;
        s.alpha_[static_cast<size_t>(t - 1)] = 1.0 - b;
        prod *= 1.0 - b;
        s.alpha_bar_[static_cast<size_t>(t - 1)] = prod;
    }
    for (int t = 1; t <= T; ++t) {
        double prev = s.alpha_bar(t - 1); // alpha_bar(0) = 1 makes sigma(1) = 0
        double cur = s.alpha_bar(t);
        s.sigma_[static_cast<size_t>(t - 1)] = std::sqrt((1.0 - prev) / (1.0 - cur) * s.beta(t));
    }
    return s;
}

} // namespace tabcsdi

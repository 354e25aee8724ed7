#pragma once

#include <vector>

#include "tabcsdi/common.hpp"

namespace tabcsdi {

// Forward-process schedule, quadratic in sqrt(beta) between beta_min and
// beta_max. Arrays are indexed by t in 1..T via the accessors; sigma follows
// the posterior-variance choice with alpha_bar(0) := 1, so sigma(1) == 0.
struct NoiseSchedule {
    int T = 0;
    double beta_min = 0.0;
    double beta_max = 0.0;
    std::vector<double> beta_;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;
    std::vector<double> sigma_;

    static NoiseSchedule build(int T, double beta_min, double beta_max);

    double beta(int t) const { return beta_[static_cast<size_t>(t - 1)]; }
    double alpha(int t) const { return alpha_[static_cast<size_t>(t - 1)]; }
    double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_[static_cast<size_t>(t - 1)]; }
    double sigma(int t) const { return sigma_[static_cast<size_t>(t - 1)]; }

    void check_t(int t) const {
        if (t < 1 || t > T) fail("schedule: t=", t, " outside [1,", T, "]");
    }
};

} // namespace tabcsdi

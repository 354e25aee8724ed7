#pragma once

#include <functional>
#include <vector>

#include "tabcsdi/rng.hpp"
#include "tabcsdi/schedule.hpp"
#include "tabcsdi/tape.hpp"
#include "tabcsdi/tensor.hpp"

namespace tabcsdi {

// Inference-side noise predictor. Inputs are (noisy target values, clean
// conditional values, conditional mask), all [rows, width], with a diffusion
// step per row; returns eps-hat of the same shape.
using EpsilonFn =
    std::function<Tensor(const Tensor& noisy, const Tensor& cond, const Tensor& cond_mask, const std::vector<int>& t)>;

// Training-side noise predictor that participates in the tape.
class TapedDenoiser {
public:
    virtual ~TapedDenoiser() = default;
    virtual int forward(Tape& tape, int noisy_id, int cond_id, const Tensor& cond_mask,
                        const std::vector<int>& t) = 0;
};

// Closed-form forward noising: x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps,
// with t given per row.
Tensor q_sample(const Tensor& x0, const std::vector<int>& t, const NoiseSchedule& ns, const Tensor& eps);

// Training-time target selection: per row draw keep-ratio r ~ U[0,1]; each
// observed cell stays conditional with probability r. Rows that end up with
// zero targets redraw once, then force one random observed cell to target.
Tensor self_mask(const Tensor& observed, Rng& rng);

// Builds the eps-prediction objective on the tape and returns the loss node.
// Masks are in encoded space; target cells are observed & !cond. The overload
// with explicit (t, eps) exists for finite-difference tests.
int build_training_loss(Tape& tape, int x0_id, const Tensor& observed, const Tensor& cond, const NoiseSchedule& ns,
                        TapedDenoiser& denoiser, Rng& rng);
int build_training_loss(Tape& tape, int x0_id, const Tensor& observed, const Tensor& cond, const NoiseSchedule& ns,
                        TapedDenoiser& denoiser, const std::vector<int>& t, const Tensor& eps);

// One ancestral step on target cells; conditional cells pass through with
// their clean x0 values bit-exactly.
Tensor p_sample_step(const Tensor& x_t, int t, const Tensor& x0, const Tensor& cond_mask, const Tensor& target_mask,
                     const NoiseSchedule& ns, const EpsilonFn& eps_fn, Rng& rng);

// Full reverse chains from x_T ~ N(0,I) on target cells, aggregated per cell
// by the median across samples.
Tensor impute_encoded(const Tensor& x0, const Tensor& cond_mask, const Tensor& target_mask, const NoiseSchedule& ns,
                      const EpsilonFn& eps_fn, int n_samples, uint64_t seed);
Tensor impute_encoded_with_seeds(const Tensor& x0, const Tensor& cond_mask, const Tensor& target_mask,
                                 const NoiseSchedule& ns, const EpsilonFn& eps_fn,
                                 const std::vector<uint64_t>& sample_seeds);

} // namespace tabcsdi

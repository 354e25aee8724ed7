#include "tabcsdi/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "tabcsdi/threading.hpp"

namespace tabcsdi {

Tensor q_sample(const Tensor& x0, const std::vector<int>& t, const NoiseSchedule& ns, const Tensor& eps) {
    if (!x0.same_shape(eps)) fail("q_sample: x0 ", shape_str(x0.shape()), " vs eps ", shape_str(eps.shape()));
    int rows = x0.dim(0);
    int width = x0.dim(1);
    if (static_cast<int>(t.size()) != rows) fail("q_sample: ", t.size(), " step indices for ", rows, " rows");
    Tensor out = Tensor::uninit(x0.shape());
    for (int r = 0; r < rows; ++r) {
        ns.check_t(t[static_cast<size_t>(r)]);
        double ab = ns.alpha_bar(t[static_cast<size_t>(r)]);
        real_t a = static_cast<real_t>(std::sqrt(ab));
        real_t b = static_cast<real_t>(std::sqrt(1.0 - ab));
        for (int k = 0; k < width; ++k) out.at(r, k) = a * x0.at(r, k) + b * eps.at(r, k);
    }
    return out;
}

Tensor self_mask(const Tensor& observed, Rng& rng) {
    int rows = observed.dim(0);
    int cols = observed.dim(1);
    Tensor cond(observed.shape());
    std::vector<int> obs_cells;
    for (int r = 0; r < rows; ++r) {
        obs_cells.clear();
        for (int c = 0; c < cols; ++c)
            if (observed.at(r, c) != real_t(0)) obs_cells.push_back(c);
        if (obs_cells.empty()) continue;
        int targets = 0;
        for (int attempt = 0; attempt < 2; ++attempt) {
            targets = 0;
            double keep = rng.uniform();
            for (int c : obs_cells) {
                bool stay = rng.uniform() < keep;
                cond.at(r, c) = stay ? real_t(1) : real_t(0);
                if (!stay) ++targets;
            }
            if (targets > 0) break;
        }
        if (targets == 0) {
            int pick = obs_cells[static_cast<size_t>(rng.integer(obs_cells.size()))];
            cond.at(r, pick) = real_t(0);
        }
    }
    return cond;
}

namespace {

struct Draws {
    std::vector<int> t;
    Tensor eps;
};

Draws draw(int rows, int width, const NoiseSchedule& ns, Rng& rng) {
    Draws d;
    d.t.resize(static_cast<size_t>(rows));
    for (int r = 0; r < rows; ++r) d.t[static_cast<size_t>(r)] = static_cast<int>(rng.integer(static_cast<uint64_t>(ns.T))) + 1;
    d.eps = Tensor::randn({rows, width}, rng);
    return d;
}

} // namespace

int build_training_loss(Tape& tape, int x0_id, const Tensor& observed, const Tensor& cond, const NoiseSchedule& ns,
                        TapedDenoiser& denoiser, const std::vector<int>& t, const Tensor& eps) {
    const Tensor& x0 = tape.val(x0_id);
    int rows = x0.dim(0);
    int width = x0.dim(1);
    if (!observed.same_shape(x0) || !cond.same_shape(x0))
        fail("training_loss: mask shapes ", shape_str(observed.shape()), "/", shape_str(cond.shape()), " vs x0 ",
             shape_str(x0.shape()));

    Tensor target = Tensor::uninit(x0.shape());
    int64_t n_target = 0;
    for (int64_t i = 0; i < target.numel(); ++i) {
        if (cond[i] != real_t(0) && observed[i] == real_t(0))
            fail("training_loss: conditional mask selects an unobserved cell");
        target[i] = observed[i] != real_t(0) && cond[i] == real_t(0) ? real_t(1) : real_t(0);
        if (target[i] != real_t(0)) ++n_target;
    }
    if (n_target == 0) fail("training_loss: batch has zero target cells");

    Tensor coef_a = Tensor::uninit({rows, 1});
    Tensor noise_term = Tensor::uninit({rows, width});
    for (int r = 0; r < rows; ++r) {
        ns.check_t(t[static_cast<size_t>(r)]);
        double ab = ns.alpha_bar(t[static_cast<size_t>(r)]);
        coef_a.at(r, 0) = static_cast<real_t>(std::sqrt(ab));
        real_t b = static_cast<real_t>(std::sqrt(1.0 - ab));
        for (int k = 0; k < width; ++k) noise_term.at(r, k) = b * eps.at(r, k);
    }

    int x_t = tape.add(tape.mul(x0_id, tape.leaf(std::move(coef_a))), tape.leaf(std::move(noise_term)));
    int noisy = tape.mul(x_t, tape.leaf(target));
    int cond_vals = tape.mul(x0_id, tape.leaf(cond));
    int eps_hat = denoiser.forward(tape, noisy, cond_vals, cond, t);
    return tape.masked_mse(eps_hat, eps, target);
}

int build_training_loss(Tape& tape, int x0_id, const Tensor& observed, const Tensor& cond, const NoiseSchedule& ns,
                        TapedDenoiser& denoiser, Rng& rng) {
    const Tensor& x0 = tape.val(x0_id);
    Draws d = draw(x0.dim(0), x0.dim(1), ns, rng);
    return build_training_loss(tape, x0_id, observed, cond, ns, denoiser, d.t, d.eps);
}

Tensor p_sample_step(const Tensor& x_t, int t, const Tensor& x0, const Tensor& cond_mask, const Tensor& target_mask,
                     const NoiseSchedule& ns, const EpsilonFn& eps_fn, Rng& rng) {
    ns.check_t(t);
    int rows = x_t.dim(0);
    int width = x_t.dim(1);
    Tensor noisy = Tensor::uninit(x_t.shape());
    Tensor cond_vals = Tensor::uninit(x_t.shape());
    for (int64_t i = 0; i < x_t.numel(); ++i) {
        noisy[i] = x_t[i] * target_mask[i];
        cond_vals[i] = x0[i] * cond_mask[i];
    }
    Tensor eps_hat = eps_fn(noisy, cond_vals, cond_mask, std::vector<int>(static_cast<size_t>(rows), t));
    if (!eps_hat.same_shape(x_t))
        fail("p_sample_step: eps-hat ", shape_str(eps_hat.shape()), " vs state ", shape_str(x_t.shape()));

    const real_t inv_sqrt_alpha = static_cast<real_t>(1.0 / std::sqrt(ns.alpha(t)));
    const real_t eps_coef = static_cast<real_t>(ns.beta(t) / std::sqrt(1.0 - ns.alpha_bar(t)));
    const real_t sig = static_cast<real_t>(ns.sigma(t));

    Tensor out = x_t;
    for (int r = 0; r < rows; ++r) {
        for (int k = 0; k < width; ++k) {
            int64_t i = static_cast<int64_t>(r) * width + k;
            if (target_mask[i] != real_t(0)) {
                real_t mean = inv_sqrt_alpha * (x_t[i] - eps_coef * eps_hat[i]);
                real_t z = t > 1 ? static_cast<real_t>(rng.normal()) : real_t(0);
                out[i] = mean + sig * z;
            }
            if (cond_mask[i] != real_t(0)) out[i] = x0[i]; // conditional cells are never noised
        }
    }
    return out;
}

Tensor impute_encoded_with_seeds(const Tensor& x0, const Tensor& cond_mask, const Tensor& target_mask,
                                 const NoiseSchedule& ns, const EpsilonFn& eps_fn,
                                 const std::vector<uint64_t>& sample_seeds) {
    if (sample_seeds.empty()) fail("impute: need at least one sample");
    int rows = x0.dim(0);
    int width = x0.dim(1);
    // chains are independent given a frozen denoiser and carry their own rng
    // streams, so running them in parallel keeps results seed-deterministic
    std::vector<Tensor> samples(sample_seeds.size());
    std::mutex err_mutex;
    std::string first_error;
    parallel_for(static_cast<int64_t>(sample_seeds.size()), [&](int64_t s0, int64_t s1) {
        for (int64_t s = s0; s < s1; ++s) {
            try {
                Rng rng(sample_seeds[static_cast<size_t>(s)]);
                Tensor x(x0.shape());
                for (int64_t i = 0; i < x.numel(); ++i) {
                    if (target_mask[i] != real_t(0))
                        x[i] = static_cast<real_t>(rng.normal());
                    else if (cond_mask[i] != real_t(0))
                        x[i] = x0[i];
                }
                for (int t = ns.T; t >= 1; --t)
                    x = p_sample_step(x, t, x0, cond_mask, target_mask, ns, eps_fn, rng);
                samples[static_cast<size_t>(s)] = std::move(x);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lk(err_mutex);
                if (first_error.empty()) first_error = e.what();
            }
        }
    });
    if (!first_error.empty()) fail("impute: reverse chain failed: ", first_error);
    if (samples.size() == 1) return samples[0];

    Tensor out(x0.shape());
    std::vector<real_t> cell(samples.size());
    for (int64_t i = 0; i < static_cast<int64_t>(rows) * width; ++i) {
        for (size_t s = 0; s < samples.size(); ++s) cell[s] = samples[s][i];
        std::sort(cell.begin(), cell.end());
        size_t m = cell.size() / 2;
        out[i] = cell.size() % 2 ? cell[m] : static_cast<real_t>((static_cast<double>(cell[m - 1]) + cell[m]) / 2.0);
    }
    return out;
}

Tensor impute_encoded(const Tensor& x0, const Tensor& cond_mask, const Tensor& target_mask, const NoiseSchedule& ns,
                      const EpsilonFn& eps_fn, int n_samples, uint64_t seed) {
    if (n_samples < 1) fail("impute: n_samples must be >= 1, got ", n_samples);
    std::vector<uint64_t> seeds(static_cast<size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s) seeds[static_cast<size_t>(s)] = derive_seed(seed, "chain", static_cast<uint64_t>(s));
    return impute_encoded_with_seeds(x0, cond_mask, target_mask, ns, eps_fn, seeds);
}

} // namespace tabcsdi

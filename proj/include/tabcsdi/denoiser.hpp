#pragma once

#include <string>
#include <vector>

#include "tabcsdi/diffusion.hpp"
#include "tabcsdi/optim.hpp"
#include "tabcsdi/tape.hpp"

namespace tabcsdi {

struct DenoiserConfig {
    int layers = 4;
    int channels = 64;
    int heads = 4;
    int diffusion_emb_dim = 128;
    int feature_emb_dim = 64;

    void validate() const;
};

// Fixed sinusoidal step embedding, one row per batch row, interleaved
// sin/cos with frequencies 10^(-4k/(dim/2-1)).
Tensor diffusion_embedding(const std::vector<int>& t, int dim);

// Captures per-layer attention weights [B, H, K, K] from a forward pass.
struct AttentionProbe {
    std::vector<Tensor> layer_weights;
};

// The eps-predictor: per encoded column a token built from (noisy value,
// conditional value, mask flag), plus learned feature-position embeddings and
// the diffusion-step embedding; L blocks of residual self-attention,
// feed-forward, and MLP sub-modules; a zero-initialized linear head maps each
// token back to one scalar.
class Denoiser : public TapedDenoiser {
public:
    Denoiser(int encoded_width, DenoiserConfig cfg, uint64_t init_seed);

    int encoded_width() const { return width_; }
    const DenoiserConfig& config() const { return cfg_; }

    // Builds the forward graph with trainable parameter leaves and remembers
    // the binding for harvest_grads.
    int forward(Tape& tape, int noisy_id, int cond_id, const Tensor& cond_mask, const std::vector<int>& t) override;

    // Inference path on a throwaway tape (no gradients recorded).
    Tensor predict(const Tensor& noisy, const Tensor& cond, const Tensor& cond_mask, const std::vector<int>& t,
                   AttentionProbe* probe = nullptr);

    EpsilonFn as_epsilon_fn();

    std::vector<Parameter*> parameters();
    const std::vector<Parameter>& parameters_const() const { return params_; }
    Parameter& parameter(const std::string& name);

    // Adds d(loss)/d(param) from the most recent trainable forward into each
    // Parameter::grad.
    void harvest_grads(Tape& tape);

    int64_t parameter_count() const;

private:
    int build(Tape& tape, int noisy_id, int cond_id, const Tensor& cond_mask, const std::vector<int>& t,
              bool trainable, AttentionProbe* probe);

    int width_ = 0;
    DenoiserConfig cfg_;
    std::vector<Parameter> params_;
    std::vector<int> binding_; // leaf ids of the last trainable forward
};

} // namespace tabcsdi

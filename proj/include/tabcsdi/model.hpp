#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tabcsdi/baselines.hpp"
#include "tabcsdi/denoiser.hpp"
#include "tabcsdi/encoders.hpp"
#include "tabcsdi/evaluation.hpp"
#include "tabcsdi/schedule.hpp"

namespace tabcsdi {

struct DiffusionConfig {
    int steps = 150;
    double beta_min = 1e-4;
    double beta_max = 0.5;
    int n_samples = 50;
};

struct TrainingConfig {
    int epochs = 1000;
    int batch_size = 64;
    double base_lr = 0.0005;
};

struct ModelConfig {
    Scheme scheme = Scheme::onehot;
    int ft_embed_dim = 8;
    DenoiserConfig denoiser;
    DiffusionConfig diffusion;
    TrainingConfig training;
};

// The conditional diffusion imputer: encoding spec + (optional) tokenizer +
// denoiser + schedule, with training and sampling loops.
class TabCSDIModel {
public:
    TabCSDIModel(TableSchema schema, ModelConfig cfg, uint64_t init_seed);

    // Trains on the observed cells of `train` (values already normalized).
    // Returns mean loss per epoch. `on_epoch(epoch, loss, lr)` is optional.
    std::vector<double> train(const MaskedTable& train, uint64_t train_seed,
                              const std::function<void(int, double, double)>& on_epoch = {});

    // Generates every unobserved cell of `table`; returns a full values matrix
    // in normalized space (categoricals as indices).
    std::vector<double> impute(const MaskedTable& table, uint64_t sampler_seed, int n_samples = 0);

    const TableSchema& schema() const { return schema_; }
    const ModelConfig& config() const { return cfg_; }
    const EncodingSpec& spec() const { return spec_; }
    const NoiseSchedule& noise_schedule() const { return ns_; }
    Denoiser& denoiser() { return denoiser_; }
    const Denoiser& denoiser() const { return denoiser_; }
    TokenizerParams* tokenizer() { return cfg_.scheme == Scheme::ft ? &tokenizer_ : nullptr; }
    const TokenizerParams* tokenizer() const { return cfg_.scheme == Scheme::ft ? &tokenizer_ : nullptr; }

    std::optional<NormalizationParams> normalization; // set by training commands, stored in checkpoints

private:
    TableSchema schema_;
    ModelConfig cfg_;
    EncodingSpec spec_;
    NoiseSchedule ns_;
    TokenizerParams tokenizer_; // unused unless scheme == ft
    Denoiser denoiser_;
};

// Harness adapters.
class MeanModeImputer : public Imputer {
public:
    std::string name() const override { return "mean_mode"; }
    std::vector<double> fit_impute(const MaskedTable& train, const MaskedTable& test, const TableSchema& schema,
                                   uint64_t seed) override;
};

class TabCSDIImputer : public Imputer {
public:
    explicit TabCSDIImputer(ModelConfig cfg) : cfg_(std::move(cfg)) {}
    std::string name() const override { return "tabcsdi"; }
    std::vector<double> fit_impute(const MaskedTable& train, const MaskedTable& test, const TableSchema& schema,
                                   uint64_t seed) override;

private:
    ModelConfig cfg_;
};

} // namespace tabcsdi

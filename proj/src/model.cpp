#include "tabcsdi/model.hpp"

#include <algorithm>
#include <cmath>

namespace tabcsdi {

namespace {

EncodingSpec make_spec(const TableSchema& schema, const ModelConfig& cfg) {
    return EncodingSpec::make(schema, cfg.scheme, cfg.scheme == Scheme::ft ? cfg.ft_embed_dim : 0);
}

TokenizerParams make_tokenizer(const TableSchema& schema, const ModelConfig& cfg, uint64_t init_seed) {
    if (cfg.scheme != Scheme::ft) return {};
    Rng rng(derive_seed(init_seed, "tokenizer"));
    return TokenizerParams::init(schema, cfg.ft_embed_dim, rng);
}

Tensor mask_tensor(const std::vector<uint8_t>& mask, int rows, int cols) {
    Tensor out({rows, cols});
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = mask[static_cast<size_t>(i)] ? real_t(1) : real_t(0);
    return out;
}

} // namespace

TabCSDIModel::TabCSDIModel(TableSchema schema, ModelConfig cfg, uint64_t init_seed)
    : schema_(std::move(schema)), cfg_(cfg), spec_(make_spec(schema_, cfg_)),
      ns_(NoiseSchedule::build(cfg_.diffusion.steps, cfg_.diffusion.beta_min, cfg_.diffusion.beta_max)),
      tokenizer_(make_tokenizer(schema_, cfg_, init_seed)),
      denoiser_(spec_.encoded_width, cfg_.denoiser, derive_seed(init_seed, "denoiser")) {
    schema_.validate();
}

std::vector<double> TabCSDIModel::train(const MaskedTable& train, uint64_t train_seed,
                                        const std::function<void(int, double, double)>& on_epoch) {
    if (train.rows < 1) fail("train: empty table");
    const TrainingConfig& tc = cfg_.training;
    if (tc.epochs < 1 || tc.batch_size < 1 || tc.base_lr <= 0)
        fail("train: invalid training config (epochs ", tc.epochs, ", batch ", tc.batch_size, ", lr ", tc.base_lr,
             ")");

    std::vector<Parameter*> params = denoiser_.parameters();
    std::vector<Parameter*> tok_params;
    if (cfg_.scheme == Scheme::ft) {
        tok_params = tokenizer_.parameters();
        params.insert(params.end(), tok_params.begin(), tok_params.end());
    }
    Adam adam;

    Rng rng(derive_seed(train_seed, "train"));
    std::vector<int> order(static_cast<size_t>(train.rows));
    for (int i = 0; i < train.rows; ++i) order[static_cast<size_t>(i)] = i;

    std::vector<double> epoch_losses;
    epoch_losses.reserve(static_cast<size_t>(tc.epochs));
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        const double lr = lr_at_epoch(epoch, tc.epochs, tc.base_lr);
        for (int i = train.rows - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)], order[rng.integer(static_cast<uint64_t>(i) + 1)]);

        double loss_sum = 0;
        int steps = 0;
        for (int begin = 0; begin < train.rows; begin += tc.batch_size) {
            int end = std::min(train.rows, begin + tc.batch_size);
            std::vector<int> rows(order.begin() + begin, order.begin() + end);
            MaskedTable batch = take_rows(train, rows);
            if (batch.count_observed() == 0) continue;

            Tensor obs_orig = mask_tensor(batch.observed, batch.rows, batch.cols);
            Tensor cond_orig = self_mask(obs_orig, rng);
            Tensor obs_enc = broadcast_mask(batch.observed, batch.rows, batch.cols, spec_);
            std::vector<uint8_t> cond_cells(static_cast<size_t>(batch.rows) * batch.cols);
            for (int64_t i = 0; i < cond_orig.numel(); ++i)
                cond_cells[static_cast<size_t>(i)] = cond_orig[i] != real_t(0) ? 1 : 0;
            Tensor cond_enc = broadcast_mask(cond_cells, batch.rows, batch.cols, spec_);

            Tape tape;
            int x0;
            std::vector<int> tok_leaves;
            if (cfg_.scheme == Scheme::ft) {
                for (auto& p : tokenizer_.columns) tok_leaves.push_back(tape.leaf(p.value, true));
                x0 = encode_table_on_tape(tape, batch, schema_, spec_, tokenizer_, tok_leaves);
            } else {
                x0 = tape.leaf(encode_table(batch, schema_, spec_).x);
            }
            int loss_id = build_training_loss(tape, x0, obs_enc, cond_enc, ns_, denoiser_, rng);
            double loss = static_cast<double>(tape.val(loss_id)[0]);
            if (!std::isfinite(loss))
                fail("train: non-finite loss at epoch ", epoch, ", step ", steps, " (seed ", train_seed, ")");
            tape.backward(loss_id);
            denoiser_.harvest_grads(tape);
            for (size_t p = 0; p < tok_leaves.size(); ++p) {
                const Tensor& g = tape.grad(tok_leaves[p]);
                real_t* dst = tokenizer_.columns[p].grad.data();
                for (int64_t j = 0; j < g.numel(); ++j) dst[j] += g[j];
            }
            adam.step(params, lr);
            if (cfg_.scheme == Scheme::ft) tokenizer_.clamp_numeric(schema_);
            loss_sum += loss;
            ++steps;
        }
        if (steps == 0) fail("train: no usable batches (every row fully missing?)");
        double mean_loss = loss_sum / steps;
        epoch_losses.push_back(mean_loss);
        if (on_epoch) on_epoch(epoch, mean_loss, lr);
    }
    return epoch_losses;
}

std::vector<double> TabCSDIModel::impute(const MaskedTable& table, uint64_t sampler_seed, int n_samples) {
    if (n_samples <= 0) n_samples = cfg_.diffusion.n_samples;
    const TokenizerParams* tok = tokenizer();
    EncodedTable enc = encode_table(table, schema_, spec_, tok);
    // at inference every unobserved cell is a generation target
    Tensor target(enc.observed.shape());
    for (int64_t i = 0; i < target.numel(); ++i) target[i] = enc.observed[i] != real_t(0) ? real_t(0) : real_t(1);

    EpsilonFn fn = denoiser_.as_epsilon_fn();
    Tensor med = impute_encoded(enc.x, enc.observed, target, ns_, fn, n_samples, sampler_seed);
    std::vector<double> decoded = decode_table(med, schema_, spec_, tok);

    std::vector<double> out(table.values);
    for (int r = 0; r < table.rows; ++r)
        for (int c = 0; c < table.cols; ++c)
            if (!table.is_observed(r, c)) out[table.idx(r, c)] = decoded[static_cast<size_t>(r) * table.cols + c];
    return out;
}

std::vector<double> MeanModeImputer::fit_impute(const MaskedTable& train, const MaskedTable& test,
                                                const TableSchema& schema, uint64_t) {
    return MeanModeModel::fit(train, schema).transform(test);
}

std::vector<double> TabCSDIImputer::fit_impute(const MaskedTable& train, const MaskedTable& test,
                                               const TableSchema& schema, uint64_t seed) {
    TabCSDIModel model(schema, cfg_, derive_seed(seed, "init"));
    model.train(train, derive_seed(seed, "fit"));
    return model.impute(test, derive_seed(seed, "sampler"));
}

} // namespace tabcsdi

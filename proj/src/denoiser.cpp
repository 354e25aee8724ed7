#include "tabcsdi/denoiser.hpp"

#include <cmath>
#include <unordered_map>

namespace tabcsdi {

void DenoiserConfig::validate() const {
    if (layers < 1 || channels < 1 || heads < 1 || diffusion_emb_dim < 1 || feature_emb_dim < 1)
        fail("denoiser config: all dimensions must be >= 1");
    if (channels % heads != 0) fail("denoiser config: channels ", channels, " not divisible by heads ", heads);
    if (diffusion_emb_dim % 2 != 0) fail("denoiser config: diffusion_emb_dim must be even");
}

Tensor diffusion_embedding(const std::vector<int>& t, int dim) {
    if (dim < 2 || dim % 2 != 0) fail("diffusion_embedding: dim must be even and >= 2, got ", dim);
    int half = dim / 2;
    Tensor out = Tensor::uninit({static_cast<int>(t.size()), dim});
    for (size_t r = 0; r < t.size(); ++r) {
        if (t[r] < 1) fail("diffusion_embedding: t must be >= 1, got ", t[r]);
        for (int k = 0; k < half; ++k) {
            double freq = half == 1 ? 1.0 : std::pow(10.0, -4.0 * k / (half - 1));
            double arg = t[r] * freq;
            out.at(static_cast<int>(r), 2 * k) = static_cast<real_t>(std::sin(arg));
            out.at(static_cast<int>(r), 2 * k + 1) = static_cast<real_t>(std::cos(arg));
        }
    }
    return out;
}

namespace {

Tensor linear_init(int fan_in, int fan_out, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::rand_uniform({fan_in, fan_out}, rng, -bound, bound);
}

Tensor bias_init(int fan_in, int fan_out, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::rand_uniform({fan_out}, rng, -bound, bound);
}

} // namespace

Denoiser::Denoiser(int encoded_width, DenoiserConfig cfg, uint64_t init_seed) : width_(encoded_width), cfg_(cfg) {
    cfg_.validate();
    if (width_ < 1) fail("denoiser: encoded width must be >= 1, got ", width_);
    Rng rng(init_seed);
    const int C = cfg_.channels;
    const int E = cfg_.feature_emb_dim;
    const int D = cfg_.diffusion_emb_dim;
    const int F = 4 * C;

    auto add_linear = [&](const std::string& name, int in, int out) {
        params_.emplace_back(name + ".w", linear_init(in, out, rng));
        params_.emplace_back(name + ".b", bias_init(in, out, rng));
    };

    add_linear("in_proj", 3, C);
    params_.emplace_back("feat_emb", Tensor::randn({width_, E}, rng));
    add_linear("feat_proj", E, C);
    add_linear("step_mlp1", D, D);
    add_linear("step_mlp2", D, C);
    for (int l = 0; l < cfg_.layers; ++l) {
        std::string p = "layer" + std::to_string(l) + ".";
        params_.emplace_back(p + "ln1.g", Tensor::full({C}, 1));
        params_.emplace_back(p + "ln1.b", Tensor({C}));
        add_linear(p + "attn.q", C, C);
        add_linear(p + "attn.k", C, C);
        add_linear(p + "attn.v", C, C);
        add_linear(p + "attn.o", C, C);
        params_.emplace_back(p + "ln2.g", Tensor::full({C}, 1));
        params_.emplace_back(p + "ln2.b", Tensor({C}));
        add_linear(p + "ffn1", C, F);
        add_linear(p + "ffn2", F, C);
        params_.emplace_back(p + "ln3.g", Tensor::full({C}, 1));
        params_.emplace_back(p + "ln3.b", Tensor({C}));
        add_linear(p + "mlp1", C, C);
        add_linear(p + "mlp2", C, C);
    }
    // zero-initialized head keeps eps-hat at 0 before the first update
    params_.emplace_back("out_proj.w", Tensor({C, 1}));
    params_.emplace_back("out_proj.b", Tensor({1}));
}

std::vector<Parameter*> Denoiser::parameters() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
}

Parameter& Denoiser::parameter(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return p;
    fail("denoiser: no parameter named '", name, "'");
}

int64_t Denoiser::parameter_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
}

int Denoiser::forward(Tape& tape, int noisy_id, int cond_id, const Tensor& cond_mask, const std::vector<int>& t) {
    return build(tape, noisy_id, cond_id, cond_mask, t, /*trainable=*/true, nullptr);
}

Tensor Denoiser::predict(const Tensor& noisy, const Tensor& cond, const Tensor& cond_mask, const std::vector<int>& t,
                         AttentionProbe* probe) {
    Tape tape;
    int noisy_id = tape.leaf(noisy);
    int cond_id = tape.leaf(cond);
    int out = build(tape, noisy_id, cond_id, cond_mask, t, /*trainable=*/false, probe);
    return tape.val(out);
}

EpsilonFn Denoiser::as_epsilon_fn() {
    return [this](const Tensor& noisy, const Tensor& cond, const Tensor& mask, const std::vector<int>& t) {
        return predict(noisy, cond, mask, t);
    };
}

void Denoiser::harvest_grads(Tape& tape) {
    if (binding_.size() != params_.size()) fail("denoiser: no trainable forward recorded on this tape");
    for (size_t i = 0; i < params_.size(); ++i) {
        const Tensor& g = tape.grad(binding_[i]);
        real_t* dst = params_[i].grad.data();
        const real_t* src = g.data();
        for (int64_t j = 0; j < g.numel(); ++j) dst[j] += src[j];
    }
}

int Denoiser::build(Tape& tape, int noisy_id, int cond_id, const Tensor& cond_mask, const std::vector<int>& t,
                    bool trainable, AttentionProbe* probe) {
    const Tensor& nv = tape.val(noisy_id);
    if (nv.ndim() != 2 || nv.dim(1) != width_)
        fail("denoiser: input ", shape_str(nv.shape()), " vs encoded width ", width_);
    const int B = nv.dim(0);
    const int K = width_;
    const int C = cfg_.channels;
    const int H = cfg_.heads;
    const int dh = C / H;
    if (static_cast<int>(t.size()) != B) fail("denoiser: ", t.size(), " step values for batch ", B);

    std::unordered_map<std::string, int> id;
    std::vector<int> bind(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        bind[i] = tape.leaf(params_[i].value, trainable);
        id[params_[i].name] = bind[i];
    }
    if (trainable) binding_ = std::move(bind);

    auto linear = [&](int x, const std::string& name) {
        return tape.add(tape.matmul(x, id[name + ".w"]), id[name + ".b"]);
    };

    // token = proj([noisy, cond, mask]) + feature embedding + step embedding
    int tokens3 = tape.concat_lastdim({tape.reshape(noisy_id, {B, K, 1}), tape.reshape(cond_id, {B, K, 1}),
                                       tape.leaf(Tensor({B, K, 1}, cond_mask.vec()))});
    int h = linear(tokens3, "in_proj");
    int femb = linear(id["feat_emb"], "feat_proj"); // [K, C] broadcasts over batch
    h = tape.add(h, femb);
    int step = tape.leaf(diffusion_embedding(t, cfg_.diffusion_emb_dim));
    step = tape.silu(linear(step, "step_mlp1"));
    step = tape.silu(linear(step, "step_mlp2"));
    h = tape.add(h, tape.reshape(step, {B, 1, C}));

    const real_t attn_scale = static_cast<real_t>(1.0 / std::sqrt(static_cast<double>(dh)));
    for (int l = 0; l < cfg_.layers; ++l) {
        std::string p = "layer" + std::to_string(l) + ".";
        // self-attention sub-module
        int x = tape.layer_norm(h, id[p + "ln1.g"], id[p + "ln1.b"]);
        auto heads_of = [&](int q) {
            return tape.transpose(tape.reshape(q, {B, K, H, dh}), 1, 2); // [B, H, K, dh]
        };
        int q = heads_of(linear(x, p + "attn.q"));
        int k = heads_of(linear(x, p + "attn.k"));
        int v = heads_of(linear(x, p + "attn.v"));
        int scores = tape.scale(tape.matmul(q, tape.transpose(k, 2, 3)), attn_scale);
        int attn = tape.softmax_lastdim(scores);
        if (probe) probe->layer_weights.push_back(tape.val(attn));
        int ctx = tape.reshape(tape.transpose(tape.matmul(attn, v), 1, 2), {B, K, C});
        h = tape.add(h, linear(ctx, p + "attn.o"));
        // feed-forward sub-module (x4 width)
        x = tape.layer_norm(h, id[p + "ln2.g"], id[p + "ln2.b"]);
        h = tape.add(h, linear(tape.silu(linear(x, p + "ffn1")), p + "ffn2"));
        // parallel MLP sub-module
        x = tape.layer_norm(h, id[p + "ln3.g"], id[p + "ln3.b"]);
        h = tape.add(h, linear(tape.silu(linear(x, p + "mlp1")), p + "mlp2"));
    }

    int out = linear(h, "out_proj"); // [B, K, 1]
    return tape.reshape(out, {B, K});
}

} // namespace tabcsdi

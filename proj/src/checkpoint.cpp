#include "tabcsdi/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace tabcsdi {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'B', 'C', 'S', 'D', 'I', '0', '1'};

void write_u64(std::ostream& out, uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); }
void write_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); }

uint64_t read_u64(std::istream& in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

uint32_t read_u32(std::istream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) write_u32(out, static_cast<uint32_t>(t.dim(i)));
    for (int64_t i = 0; i < t.numel(); ++i) {
        double v = static_cast<double>(t[i]);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

struct NamedTensor {
    std::string name;
    Tensor value;
};

NamedTensor read_tensor(std::istream& in) {
    NamedTensor nt;
    uint32_t name_len = read_u32(in);
    nt.name.resize(name_len);
    in.read(nt.name.data(), name_len);
    uint32_t ndim = read_u32(in);
    std::vector<int> shape(ndim);
    for (uint32_t i = 0; i < ndim; ++i) shape[i] = static_cast<int>(read_u32(in));
    Tensor t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        t[i] = static_cast<real_t>(v);
    }
    nt.value = std::move(t);
    if (!in) fail("checkpoint: truncated tensor record for '", nt.name, "'");
    return nt;
}

json model_config_json(const ModelConfig& m) {
    return json{{"encoding", scheme_to_string(m.scheme)},
                {"ft_embed_dim", m.ft_embed_dim},
                {"denoiser",
                 {{"layers", m.denoiser.layers},
                  {"channels", m.denoiser.channels},
                  {"heads", m.denoiser.heads},
                  {"diffusion_emb_dim", m.denoiser.diffusion_emb_dim},
                  {"feature_emb_dim", m.denoiser.feature_emb_dim}}},
                {"diffusion",
                 {{"steps", m.diffusion.steps},
                  {"beta_min", m.diffusion.beta_min},
                  {"beta_max", m.diffusion.beta_max},
                  {"n_samples", m.diffusion.n_samples}}},
                {"training",
                 {{"epochs", m.training.epochs},
                  {"batch_size", m.training.batch_size},
                  {"base_lr", m.training.base_lr}}}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig m;
    m.scheme = scheme_from_string(j.at("encoding").get<std::string>());
    m.ft_embed_dim = j.at("ft_embed_dim").get<int>();
    const json& n = j.at("denoiser");
    m.denoiser.layers = n.at("layers").get<int>();
    m.denoiser.channels = n.at("channels").get<int>();
    m.denoiser.heads = n.at("heads").get<int>();
    m.denoiser.diffusion_emb_dim = n.at("diffusion_emb_dim").get<int>();
    m.denoiser.feature_emb_dim = n.at("feature_emb_dim").get<int>();
    const json& d = j.at("diffusion");
    m.diffusion.steps = d.at("steps").get<int>();
    m.diffusion.beta_min = d.at("beta_min").get<double>();
    m.diffusion.beta_max = d.at("beta_max").get<double>();
    m.diffusion.n_samples = d.at("n_samples").get<int>();
    const json& t = j.at("training");
    m.training.epochs = t.at("epochs").get<int>();
    m.training.batch_size = t.at("batch_size").get<int>();
    m.training.base_lr = t.at("base_lr").get<double>();
    return m;
}

} // namespace

void save_checkpoint(const std::string& path, const TabCSDIModel& model, const std::string& fingerprint_json) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("checkpoint: cannot write '", path, "'");

    json header;
    header["format"] = 1;
    header["schema"] = json::parse(model.schema().to_json_text());
    header["schema_hash"] = model.schema().hash();
    header["model"] = model_config_json(model.config());
    if (model.normalization) {
        json norm = json::array();
        for (const auto& r : model.normalization->per_column) {
            if (r)
                norm.push_back(json{{"min", r->min}, {"max", r->max}});
            else
                norm.push_back(nullptr);
        }
        header["normalization"] = std::move(norm);
    }
    header["fingerprint"] = fingerprint_json.empty() ? json(nullptr) : json::parse(fingerprint_json);
    std::string header_text = header.dump();

    out.write(kMagic, sizeof(kMagic));
    write_u64(out, header_text.size());
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

    const auto& dn_params = model.denoiser().parameters_const();
    const TokenizerParams* tok = model.tokenizer();
    write_u64(out, dn_params.size() + (tok ? tok->columns.size() : 0));
    for (const auto& p : dn_params) write_tensor(out, "denoiser." + p.name, p.value);
    if (tok)
        for (const auto& p : tok->columns) write_tensor(out, p.name, p.value);
    if (!out) fail("checkpoint: write to '", path, "' failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("checkpoint: cannot open '", path, "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        fail("checkpoint: '", path, "' is not a checkpoint file");
    uint64_t header_len = read_u64(in);
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!in) fail("checkpoint: truncated header in '", path, "'");

    json header = json::parse(header_text);
    if (header.at("format").get<int>() != 1) fail("checkpoint: unsupported format version");
    TableSchema schema = TableSchema::from_json_text(header.at("schema").dump());
    ModelConfig cfg = model_config_from_json(header.at("model"));

    LoadedCheckpoint loaded;
    loaded.model = std::make_unique<TabCSDIModel>(schema, cfg, /*init_seed=*/0);
    if (header.contains("normalization")) {
        NormalizationParams norm;
        for (const auto& r : header.at("normalization")) {
            if (r.is_null())
                norm.per_column.push_back(std::nullopt);
            else
                norm.per_column.push_back(
                    NormalizationParams::Range{r.at("min").get<double>(), r.at("max").get<double>()});
        }
        loaded.model->normalization = std::move(norm);
    }
    if (!header.at("fingerprint").is_null()) loaded.fingerprint_json = header.at("fingerprint").dump();

    uint64_t n_tensors = read_u64(in);
    uint64_t filled = 0;
    for (uint64_t i = 0; i < n_tensors; ++i) {
        NamedTensor nt = read_tensor(in);
        Parameter* dst = nullptr;
        if (nt.name.rfind("denoiser.", 0) == 0) {
            dst = &loaded.model->denoiser().parameter(nt.name.substr(9));
        } else if (TokenizerParams* tok = loaded.model->tokenizer()) {
            for (auto& p : tok->columns)
                if (p.name == nt.name) {
                    dst = &p;
                    break;
                }
        }
        if (!dst) fail("checkpoint: unexpected tensor '", nt.name, "'");
        if (!dst->value.same_shape(nt.value))
            fail("checkpoint: tensor '", nt.name, "' has shape ", shape_str(nt.value.shape()), ", expected ",
                 shape_str(dst->value.shape()));
        dst->value = std::move(nt.value);
        ++filled;
    }
    uint64_t expected = loaded.model->denoiser().parameters_const().size() +
                        (loaded.model->tokenizer() ? loaded.model->tokenizer()->columns.size() : 0);
    if (filled != expected) fail("checkpoint: ", filled, " tensors loaded, model needs ", expected);
    return loaded;
}

} // namespace tabcsdi

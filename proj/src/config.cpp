#include "tabcsdi/config.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace tabcsdi {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const char* where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) fail("config: unknown key '", it.key(), "' in ", where);
    }
}

std::string resolve(const std::string& base_dir, const std::string& path) {
    fs::path p(path);
    if (p.is_absolute() || base_dir.empty()) return path;
    return (fs::path(base_dir) / p).lexically_normal().string();
}

} // namespace

RunConfig RunConfig::from_json_text(const std::string& text, const std::string& base_dir) {
    json j = json::parse(text);
    reject_unknown_keys(j,
                        {"dataset", "split_fraction", "mcar_rate", "seeds", "imputer", "encoding", "ft_embed_dim",
                         "denoiser", "diffusion", "training", "output_dir", "threads"},
                        "top level");
    RunConfig c;
    if (!j.contains("dataset")) fail("config: missing 'dataset' section");
    const json& d = j["dataset"];
    reject_unknown_keys(d, {"name", "csv", "schema", "missing_sentinel"}, "dataset");
    c.csv_path = resolve(base_dir, d.at("csv").get<std::string>());
    c.schema_path = resolve(base_dir, d.at("schema").get<std::string>());
    c.dataset_name = d.value("name", fs::path(c.csv_path).stem().string());
    if (d.contains("missing_sentinel")) c.sentinel_override = d["missing_sentinel"].get<std::string>();

    c.split_fraction = j.value("split_fraction", c.split_fraction);
    c.mcar_rate = j.value("mcar_rate", c.mcar_rate);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<uint64_t>>();
    c.imputer = j.value("imputer", c.imputer);
    if (j.contains("encoding")) c.model.scheme = scheme_from_string(j["encoding"].get<std::string>());
    c.model.ft_embed_dim = j.value("ft_embed_dim", c.model.ft_embed_dim);
    if (j.contains("denoiser")) {
        const json& n = j["denoiser"];
        reject_unknown_keys(n, {"layers", "channels", "heads", "diffusion_emb_dim", "feature_emb_dim"}, "denoiser");
        c.model.denoiser.layers = n.value("layers", c.model.denoiser.layers);
        c.model.denoiser.channels = n.value("channels", c.model.denoiser.channels);
        c.model.denoiser.heads = n.value("heads", c.model.denoiser.heads);
        c.model.denoiser.diffusion_emb_dim = n.value("diffusion_emb_dim", c.model.denoiser.diffusion_emb_dim);
        c.model.denoiser.feature_emb_dim = n.value("feature_emb_dim", c.model.denoiser.feature_emb_dim);
    }
    if (j.contains("diffusion")) {
        const json& n = j["diffusion"];
        reject_unknown_keys(n, {"steps", "beta_min", "beta_max", "n_samples"}, "diffusion");
        c.model.diffusion.steps = n.value("steps", c.model.diffusion.steps);
        c.model.diffusion.beta_min = n.value("beta_min", c.model.diffusion.beta_min);
        c.model.diffusion.beta_max = n.value("beta_max", c.model.diffusion.beta_max);
        c.model.diffusion.n_samples = n.value("n_samples", c.model.diffusion.n_samples);
    }
    if (j.contains("training")) {
        const json& n = j["training"];
        reject_unknown_keys(n, {"epochs", "batch_size", "base_lr"}, "training");
        c.model.training.epochs = n.value("epochs", c.model.training.epochs);
        c.model.training.batch_size = n.value("batch_size", c.model.training.batch_size);
        c.model.training.base_lr = n.value("base_lr", c.model.training.base_lr);
    }
    c.output_dir = resolve(base_dir, j.value("output_dir", c.output_dir));
    c.threads = j.value("threads", c.threads);
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("config: cannot open '", path, "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    RunConfig c;
    try {
        c = from_json_text(text, fs::path(path).parent_path().string());
    } catch (const json::exception& e) {
        fail("config: failed to parse '", path, "': ", e.what());
    }
    if (!fs::exists(c.csv_path))
        fail("config: dataset csv '", c.csv_path, "' not found (datasets are user-supplied, see README)");
    if (!fs::exists(c.schema_path)) fail("config: schema file '", c.schema_path, "' not found");
    return c;
}

void RunConfig::validate() const {
    if (split_fraction <= 0.0 || split_fraction >= 1.0)
        fail("config: split_fraction ", split_fraction, " outside (0,1)");
    if (mcar_rate < 0.0 || mcar_rate > 1.0) fail("config: mcar_rate ", mcar_rate, " outside [0,1]");
    if (seeds.empty()) fail("config: seed list is empty");
    if (imputer != "mean_mode" && imputer != "tabcsdi")
        fail("config: imputer must be mean_mode | tabcsdi, got '", imputer, "'");
    if (model.diffusion.steps < 2) fail("config: diffusion.steps must be >= 2");
    if (model.diffusion.n_samples < 1) fail("config: diffusion.n_samples must be >= 1");
    if (model.training.epochs < 1) fail("config: training.epochs must be >= 1");
    if (model.training.batch_size < 1) fail("config: training.batch_size must be >= 1");
    if (model.training.base_lr <= 0) fail("config: training.base_lr must be positive");
    if (threads < 0) fail("config: threads must be >= 0");
    model.denoiser.validate();
}

void RunConfig::reseed(uint64_t master) {
    for (size_t i = 0; i < seeds.size(); ++i) seeds[i] = derive_seed(master, "rep", i);
}

} // namespace tabcsdi

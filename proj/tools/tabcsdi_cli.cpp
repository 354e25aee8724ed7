#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"

#include "tabcsdi/checkpoint.hpp"
#include "tabcsdi/config.hpp"
#include "tabcsdi/threading.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tabcsdi;

namespace {

void apply_threads(int threads) {
    if (threads > 0) set_num_threads(threads);
}

TableSchema load_schema_for(const RunConfig& cfg) {
    TableSchema schema = TableSchema::load(cfg.schema_path);
    if (cfg.sentinel_override) schema.missing_sentinel = *cfg.sentinel_override;
    return schema;
}

json fingerprint_json(const RunConfig& cfg) {
    return json{{"dataset", cfg.dataset_name},
                {"csv", cfg.csv_path},
                {"imputer", cfg.imputer},
                {"encoding", scheme_to_string(cfg.model.scheme)},
                {"split_fraction", cfg.split_fraction},
                {"mcar_rate", cfg.mcar_rate},
                {"seeds", cfg.seeds}};
}

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

int cmd_train(const std::string& config_path, std::optional<uint64_t> seed_override) {
    RunConfig cfg = RunConfig::load(config_path);
    if (seed_override) cfg.reseed(*seed_override);
    apply_threads(cfg.threads);
    TableSchema schema = load_schema_for(cfg);
    MaskedTable table = load_csv(cfg.csv_path, schema);

    NormalizationParams norm = fit_minmax(table, schema);
    apply_minmax(table, schema, norm);

    uint64_t master = cfg.seeds.front();
    TabCSDIModel model(schema, cfg.model, derive_seed(master, "init"));
    model.normalization = norm;

    fs::create_directories(cfg.output_dir);
    std::ofstream log(fs::path(cfg.output_dir) / "training_log.csv");
    log << "epoch,loss,lr\n";
    int print_every = std::max(1, cfg.model.training.epochs / 20);
    model.train(table, derive_seed(master, "fit"), [&](int epoch, double loss, double lr) {
        log << epoch << ',' << loss << ',' << lr << '\n';
        if (epoch % print_every == 0 || epoch + 1 == cfg.model.training.epochs)
            std::cout << "epoch " << epoch << "  loss " << loss << "  lr " << lr << std::endl;
    });

    json fp = fingerprint_json(cfg);
    fp["master_seed"] = master;
    std::string ckpt = (fs::path(cfg.output_dir) / (cfg.dataset_name + ".ckpt")).string();
    save_checkpoint(ckpt, model, fp.dump());
    std::cout << "checkpoint written to " << ckpt << std::endl;
    return 0;
}

int cmd_impute(const std::string& ckpt_path, const std::string& in_csv, const std::string& out_csv,
               std::optional<uint64_t> seed_override, int n_samples) {
    LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
    TabCSDIModel& model = *loaded.model;
    const TableSchema& schema = model.schema();
    if (!model.normalization) fail("impute: checkpoint carries no normalization parameters");

    MaskedTable table = load_csv(in_csv, schema);
    apply_minmax(table, schema, *model.normalization);

    uint64_t seed = seed_override ? *seed_override : 1;
    std::vector<double> values = model.impute(table, derive_seed(seed, "sampler"), n_samples);

    // rewrite the file, replacing only sentinel cells; observed cells keep
    // their original bytes
    std::ifstream in(in_csv);
    if (!in) fail("impute: cannot reopen '", in_csv, "'");
    std::ofstream out(out_csv);
    if (!out) fail("impute: cannot write '", out_csv, "'");
    std::string line;
    std::getline(in, line);
    out << line << '\n';
    int r = 0;
    while (std::getline(in, line)) {
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        // raw split keeps quoting verbatim so untouched cells stay byte-exact
        std::vector<std::string> fields = split_csv_line_raw(line);
        for (int c = 0; c < table.cols; ++c) {
            if (table.is_observed(r, c)) continue;
            double v = values[table.idx(r, c)];
            const auto& col = schema.columns[static_cast<size_t>(c)];
            if (col.is_categorical()) {
                int idx = static_cast<int>(std::llround(v));
                idx = std::clamp(idx, 0, col.cardinality() - 1);
                fields[static_cast<size_t>(c)] = csv_escape(col.categories[static_cast<size_t>(idx)]);
            } else {
                fields[static_cast<size_t>(c)] = format_double(model.normalization->invert(c, v));
            }
        }
        for (size_t c = 0; c < fields.size(); ++c) {
            if (c) out << ',';
            out << fields[c];
        }
        out << '\n';
        ++r;
    }
    if (r != table.rows) fail("impute: row count changed while rewriting (", r, " vs ", table.rows, ")");

    // sidecar keeps the CSV clean while still recording provenance
    json meta;
    meta["checkpoint"] = ckpt_path;
    meta["input"] = in_csv;
    meta["sampler_seed"] = seed;
    meta["n_samples"] = n_samples > 0 ? n_samples : model.config().diffusion.n_samples;
    meta["fingerprint"] =
        loaded.fingerprint_json.empty() ? json(nullptr) : json::parse(loaded.fingerprint_json);
    std::ofstream(out_csv + ".meta.json") << meta.dump(2) << '\n';
    std::cout << "imputed csv written to " << out_csv << std::endl;
    return 0;
}

std::unique_ptr<Imputer> make_imputer(const RunConfig& cfg, const std::string& which) {
    if (which == "mean_mode") return std::make_unique<MeanModeImputer>();
    if (which == "tabcsdi") return std::make_unique<TabCSDIImputer>(cfg.model);
    fail("imputer must be mean_mode | tabcsdi, got '", which, "'");
}

MetricsReport run_one(const RunConfig& cfg, const std::string& which) {
    TableSchema schema = load_schema_for(cfg);
    MaskedTable table = load_csv(cfg.csv_path, schema);
    auto imputer = make_imputer(cfg, which);
    ExperimentConfig ec{cfg.split_fraction, cfg.mcar_rate, cfg.seeds};
    MetricsReport report = run_experiment(table, schema, *imputer, ec, cfg.dataset_name);
    if (which == "tabcsdi") report.detail = scheme_to_string(cfg.model.scheme);
    return report;
}

int cmd_evaluate(const std::string& config_path, std::optional<uint64_t> seed_override) {
    RunConfig cfg = RunConfig::load(config_path);
    if (seed_override) cfg.reseed(*seed_override);
    apply_threads(cfg.threads);
    MetricsReport report = run_one(cfg, cfg.imputer);
    fs::create_directories(cfg.output_dir);
    std::string path = (fs::path(cfg.output_dir) / (cfg.dataset_name + "_" + cfg.imputer + "_report.json")).string();
    report.save(path);
    std::cout << render_table({report}) << "report written to " << path << std::endl;
    return 0;
}

int cmd_benchmark(const std::string& config_path, std::optional<uint64_t> seed_override) {
    RunConfig cfg = RunConfig::load(config_path);
    if (seed_override) cfg.reseed(*seed_override);
    apply_threads(cfg.threads);
    std::vector<MetricsReport> reports;
    for (const std::string which : {"mean_mode", "tabcsdi"}) {
        reports.push_back(run_one(cfg, which));
        fs::create_directories(cfg.output_dir);
        std::string path = (fs::path(cfg.output_dir) / (cfg.dataset_name + "_" + which + "_report.json")).string();
        reports.back().save(path);
    }
    std::string table_path = (fs::path(cfg.output_dir) / (cfg.dataset_name + "_comparison.txt")).string();
    std::string table = render_table(reports);
    std::ofstream(table_path) << table;
    std::cout << table << "reports written to " << cfg.output_dir << std::endl;
    return 0;
}

int cmd_infer_schema(const std::string& in_csv, const std::string& out_path, const std::string& sentinel,
                     const std::vector<std::string>& force_categorical) {
    std::ifstream in(in_csv);
    if (!in) fail("infer-schema: cannot open '", in_csv, "'");
    std::string line;
    if (!std::getline(in, line)) fail("infer-schema: '", in_csv, "' is empty");
    std::vector<std::string> names = split_csv_line(line, 1);
    size_t ncols = names.size();
    std::vector<bool> numeric(ncols, true);
    std::vector<std::set<std::string>> labels(ncols);
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        std::vector<std::string> fields = split_csv_line(line, line_no);
        if (fields.size() != ncols)
            fail("infer-schema: line ", line_no, " has ", fields.size(), " fields, expected ", ncols);
        for (size_t c = 0; c < ncols; ++c) {
            const std::string& cell = fields[c];
            if (cell == sentinel) continue;
            char* end = nullptr;
            std::strtod(cell.c_str(), &end);
            bool is_num = end && *end == '\0' && end != cell.c_str();
            if (!is_num) numeric[c] = false;
            labels[c].insert(cell);
        }
    }
    TableSchema schema;
    schema.missing_sentinel = sentinel;
    for (size_t c = 0; c < ncols; ++c) {
        ColumnSchema col;
        col.name = names[c];
        bool forced = std::find(force_categorical.begin(), force_categorical.end(), col.name) !=
                      force_categorical.end();
        if (numeric[c] && !forced) {
            col.kind = ColumnKind::numerical;
        } else {
            col.kind = ColumnKind::categorical;
            col.categories.assign(labels[c].begin(), labels[c].end()); // sorted order
        }
        schema.columns.push_back(std::move(col));
    }
    schema.validate();
    schema.save(out_path);
    std::cout << "schema written to " << out_path << std::endl;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tabcsdi - conditional diffusion imputer for mixed tabular data"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, in_csv, out_csv, out_path, sentinel;
    std::vector<std::string> force_categorical;
    std::optional<uint64_t> seed;
    int n_samples = 0;

    auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
    train->add_option("--config", config_path, "run config file")->required();
    train->add_option("--seed", seed, "master seed override");

    auto* impute = app.add_subcommand("impute", "fill missing cells of a csv using a checkpoint");
    impute->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    impute->add_option("--in", in_csv, "input csv")->required();
    impute->add_option("--out", out_csv, "output csv")->required();
    impute->add_option("--seed", seed, "sampler seed override");
    impute->add_option("--samples", n_samples, "reverse-chain samples per cell (default: from checkpoint)");

    auto* evaluate = app.add_subcommand("evaluate", "run the repetition protocol for the configured imputer");
    evaluate->add_option("--config", config_path, "run config file")->required();
    evaluate->add_option("--seed", seed, "master seed override (re-derives the seed list)");

    auto* benchmark = app.add_subcommand("benchmark", "compare mean_mode and tabcsdi under shared seeds");
    benchmark->add_option("--config", config_path, "run config file")->required();
    benchmark->add_option("--seed", seed, "master seed override (re-derives the seed list)");

    auto* infer = app.add_subcommand("infer-schema", "guess a schema file from a csv");
    infer->add_option("--in", in_csv, "input csv")->required();
    infer->add_option("--out", out_path, "schema output path")->required();
    infer->add_option("--sentinel", sentinel, "missing-value sentinel (default: empty string)");
    infer->add_option("--categorical", force_categorical, "column names to force categorical");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(train)) return cmd_train(config_path, seed);
        if (app.got_subcommand(impute)) return cmd_impute(ckpt_path, in_csv, out_csv, seed, n_samples);
        if (app.got_subcommand(evaluate)) return cmd_evaluate(config_path, seed);
        if (app.got_subcommand(benchmark)) return cmd_benchmark(config_path, seed);
        if (app.got_subcommand(infer)) return cmd_infer_schema(in_csv, out_path, sentinel, force_categorical);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}

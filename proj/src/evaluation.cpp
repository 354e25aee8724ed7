#include "tabcsdi/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "json.hpp"

namespace tabcsdi {

using nlohmann::json;

double rmse(const std::vector<double>& predictions, const std::vector<double>& truths) {
    if (predictions.size() != truths.size())
        fail("rmse: ", predictions.size(), " predictions vs ", truths.size(), " truths");
    if (predictions.empty()) fail("rmse: zero target cells");
    double acc = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        double d = predictions[i] - truths[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(predictions.size()));
}

double error_rate(const std::vector<double>& predictions, const std::vector<double>& truths) {
    if (predictions.size() != truths.size())
        fail("error_rate: ", predictions.size(), " predictions vs ", truths.size(), " truths");
    if (predictions.empty()) fail("error_rate: zero target cells");
    int64_t wrong = 0;
    for (size_t i = 0; i < predictions.size(); ++i)
        if (std::llround(predictions[i]) != std::llround(truths[i])) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(predictions.size());
}

RepetitionMetrics score_predictions(const MaskedTable& table, const TableSchema& schema,
                                    const std::vector<double>& predictions, uint64_t seed) {
    if (predictions.size() != table.values.size())
        fail("score: ", predictions.size(), " predictions for ", table.values.size(), " cells");
    RepetitionMetrics rep;
    rep.seed = seed;
    std::vector<double> num_pred, num_truth, cat_pred, cat_truth;
    rep.per_feature.resize(static_cast<size_t>(table.cols));
    for (int c = 0; c < table.cols; ++c) {
        const bool categorical = schema.columns[static_cast<size_t>(c)].is_categorical();
        std::vector<double> fp, ft;
        for (int r = 0; r < table.rows; ++r) {
            size_t i = table.idx(r, c);
            if (!table.target[i]) continue;
            fp.push_back(predictions[i]);
            ft.push_back(table.truth[i]);
        }
        if (fp.empty()) continue;
        if (categorical) {
            rep.per_feature[static_cast<size_t>(c)] = error_rate(fp, ft);
            cat_pred.insert(cat_pred.end(), fp.begin(), fp.end());
            cat_truth.insert(cat_truth.end(), ft.begin(), ft.end());
        } else {
            rep.per_feature[static_cast<size_t>(c)] = rmse(fp, ft);
            num_pred.insert(num_pred.end(), fp.begin(), fp.end());
            num_truth.insert(num_truth.end(), ft.begin(), ft.end());
        }
    }
    rep.numeric_cells = static_cast<int64_t>(num_pred.size());
    rep.categorical_cells = static_cast<int64_t>(cat_pred.size());
    if (!num_pred.empty()) rep.pooled_rmse = rmse(num_pred, num_truth);
    if (!cat_pred.empty()) rep.pooled_err = error_rate(cat_pred, cat_truth);
    return rep;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& xs) {
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size() - 1); // sample std
    return {mean, std::sqrt(var)};
}

std::string fmt_cell(std::optional<double> mean, std::optional<double> std) {
    if (!mean) return "-";
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << *mean << " (" << (std ? *std : 0.0) << ")";
    return os.str();
}

} // namespace

std::string MetricsReport::rmse_cell() const { return fmt_cell(rmse_mean, rmse_std); }
std::string MetricsReport::err_cell() const { return fmt_cell(err_mean, err_std); }

std::string MetricsReport::to_json_text() const {
    json j;
    j["dataset"] = dataset;
    j["imputer"] = imputer;
    if (!detail.empty()) j["detail"] = detail;
    j["fingerprint"] = {{"train_fraction", config.train_fraction},
                        {"mcar_rate", config.mcar_rate},
                        {"seeds", config.seeds}};
    json reps = json::array();
    for (const auto& r : repetitions) {
        json jr;
        jr["seed"] = r.seed;
        jr["numeric_cells"] = r.numeric_cells;
        jr["categorical_cells"] = r.categorical_cells;
        if (r.pooled_rmse) jr["pooled_rmse"] = *r.pooled_rmse;
        if (r.pooled_err) jr["pooled_err"] = *r.pooled_err;
        json pf = json::array();
        for (const auto& f : r.per_feature) {
            if (f)
                pf.push_back(*f);
            else
                pf.push_back(nullptr);
        }
        jr["per_feature"] = std::move(pf);
        reps.push_back(std::move(jr));
    }
    j["repetitions"] = std::move(reps);
    if (rmse_mean) j["rmse"] = {{"mean", *rmse_mean}, {"std", rmse_std ? *rmse_std : 0.0}};
    if (err_mean) j["err"] = {{"mean", *err_mean}, {"std", err_std ? *err_std : 0.0}};
    return j.dump(2);
}

void MetricsReport::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) fail("report: cannot write '", path, "'");
    out << to_json_text() << '\n';
}

MetricsReport run_experiment(const MaskedTable& full, const TableSchema& schema, Imputer& imputer,
                             const ExperimentConfig& config, const std::string& dataset_name) {
    if (config.seeds.size() < 2) fail("run_experiment: need >= 2 seeds for the std to be defined");
    MetricsReport report;
    report.dataset = dataset_name;
    report.imputer = imputer.name();
    report.config = config;
    for (uint64_t seed : config.seeds) {
        try {
            auto [train, test] = split_rows(full, config.train_fraction, derive_seed(seed, "split"));
            train = inject_mcar(train, config.mcar_rate, derive_seed(seed, "mcar", 0));
            test = inject_mcar(test, config.mcar_rate, derive_seed(seed, "mcar", 1));
            NormalizationParams norm = fit_minmax(train, schema);
            apply_minmax(train, schema, norm);
            apply_minmax(test, schema, norm);
            auto preds = imputer.fit_impute(train, test, schema, derive_seed(seed, "imputer"));
            report.repetitions.push_back(score_predictions(test, schema, preds, seed));
        } catch (const std::exception& e) {
            fail("run_experiment: repetition with seed ", seed, " failed: ", e.what());
        }
    }
    std::vector<double> rmses, errs;
    for (const auto& r : report.repetitions) {
        if (r.pooled_rmse) rmses.push_back(*r.pooled_rmse);
        if (r.pooled_err) errs.push_back(*r.pooled_err);
    }
    if (rmses.size() == report.repetitions.size()) {
        auto [m, s] = mean_std(rmses);
        report.rmse_mean = m;
        report.rmse_std = s;
    }
    if (errs.size() == report.repetitions.size()) {
        auto [m, s] = mean_std(errs);
        report.err_mean = m;
        report.err_std = s;
    }
    return report;
}

std::string render_table(const std::vector<MetricsReport>& reports) {
    size_t w0 = 8, w1 = 14;
    for (const auto& r : reports) {
        std::string name = r.imputer + (r.detail.empty() ? "" : " / " + r.detail);
        w0 = std::max(w0, name.size());
        w1 = std::max(w1, r.rmse_cell().size());
    }
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(w0) + 2) << "method" << std::setw(static_cast<int>(w1) + 2)
       << "RMSE" << "Err\n";
    for (const auto& r : reports) {
        std::string name = r.imputer + (r.detail.empty() ? "" : " / " + r.detail);
        os << std::left << std::setw(static_cast<int>(w0) + 2) << name << std::setw(static_cast<int>(w1) + 2)
           << r.rmse_cell() << r.err_cell() << '\n';
    }
    return os.str();
}

} // namespace tabcsdi

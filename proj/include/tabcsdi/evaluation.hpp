#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tabcsdi/table.hpp"

namespace tabcsdi {

// sqrt(sum((pred - truth)^2) / n) over the given cells
double rmse(const std::vector<double>& predictions, const std::vector<double>& truths);

// fraction of mismatched categories
double error_rate(const std::vector<double>& predictions, const std::vector<double>& truths);

// An imputation method under evaluation. One instance is fitted per
// repetition; fit_impute returns predictions for every cell of `test` in
// normalized space (categoricals as indices).
class Imputer {
public:
    virtual ~Imputer() = default;
    virtual std::string name() const = 0;
    virtual std::vector<double> fit_impute(const MaskedTable& train, const MaskedTable& test,
                                           const TableSchema& schema, uint64_t seed) = 0;
};

struct ExperimentConfig {
    double train_fraction = 0.8;
    double mcar_rate = 0.2;
    std::vector<uint64_t> seeds;
};

struct RepetitionMetrics {
    uint64_t seed = 0;
    std::optional<double> pooled_rmse; // absent when the dataset has no numerical targets
    std::optional<double> pooled_err;  // absent when the dataset has no categorical targets
    int64_t numeric_cells = 0;
    int64_t categorical_cells = 0;
    std::vector<std::optional<double>> per_feature; // RMSE(j) or Err(j) per column
};

struct MetricsReport {
    std::string dataset;
    std::string imputer;
    std::string detail; // encoding scheme etc., free-form fingerprint element
    ExperimentConfig config;
    std::vector<RepetitionMetrics> repetitions;
    std::optional<double> rmse_mean, rmse_std;
    std::optional<double> err_mean, err_std;

    // "0.263 (0.009)"-style cells; "-" when a metric does not apply
    std::string rmse_cell() const;
    std::string err_cell() const;
    std::string to_json_text() const;
    void save(const std::string& path) const;
};

// Scores predictions on the target cells of `table` (already normalized).
RepetitionMetrics score_predictions(const MaskedTable& table, const TableSchema& schema,
                                    const std::vector<double>& predictions, uint64_t seed);

// Full repetition protocol: per seed, split -> inject MCAR -> normalize on the
// train split -> fit/impute -> score on test targets; aggregates mean and
// sample std across seeds.
MetricsReport run_experiment(const MaskedTable& full, const TableSchema& schema, Imputer& imputer,
                             const ExperimentConfig& config, const std::string& dataset_name);

// Renders reports as an aligned "mean (std)" comparison table.
std::string render_table(const std::vector<MetricsReport>& reports);

} // namespace tabcsdi

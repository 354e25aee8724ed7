#include "tabcsdi/baselines.hpp"

namespace tabcsdi {

MeanModeModel MeanModeModel::fit(const MaskedTable& train, const TableSchema& schema) {
    if (train.cols != schema.ncols())
        fail("mean_mode: table has ", train.cols, " columns, schema ", schema.ncols());
    MeanModeModel m;
    m.stat.resize(static_cast<size_t>(train.cols), 0.0);
    for (int c = 0; c < train.cols; ++c) {
        const auto& col = schema.columns[static_cast<size_t>(c)];
        if (col.is_categorical()) {
            std::vector<int64_t> counts(static_cast<size_t>(col.cardinality()), 0);
            int64_t seen = 0;
            for (int r = 0; r < train.rows; ++r) {
                if (!train.is_observed(r, c)) continue;
                ++counts[static_cast<size_t>(static_cast<int>(train.value(r, c)))];
                ++seen;
            }
            if (seen == 0) fail("mean_mode: column '", col.name, "' has no observed training values");
            int best = 0;
            for (int k = 1; k < col.cardinality(); ++k)
                if (counts[static_cast<size_t>(k)] > counts[static_cast<size_t>(best)]) best = k;
            m.stat[static_cast<size_t>(c)] = best;
        } else {
            double sum = 0;
            int64_t seen = 0;
            for (int r = 0; r < train.rows; ++r) {
                if (!train.is_observed(r, c)) continue;
                sum += train.value(r, c);
                ++seen;
            }
            if (seen == 0) fail("mean_mode: column '", col.name, "' has no observed training values");
            m.stat[static_cast<size_t>(c)] = sum / static_cast<double>(seen);
        }
    }
    return m;
}

std::vector<double> MeanModeModel::transform(const MaskedTable& table) const {
    if (static_cast<size_t>(table.cols) != stat.size())
        fail("mean_mode: table has ", table.cols, " columns, model fitted on ", stat.size());
    std::vector<double> out(table.values);
    for (int r = 0; r < table.rows; ++r)
        for (int c = 0; c < table.cols; ++c)
            if (!table.is_observed(r, c)) out[table.idx(r, c)] = stat[static_cast<size_t>(c)];
    return out;
}

} // namespace tabcsdi

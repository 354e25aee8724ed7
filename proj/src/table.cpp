#include "tabcsdi/table.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_map>

namespace tabcsdi {

int64_t MaskedTable::count_observed() const {
    int64_t n = 0;
    for (uint8_t v : observed) n += v;
    return n;
}

int64_t MaskedTable::count_target() const {
    int64_t n = 0;
    for (uint8_t v : target) n += v;
    return n;
}

void MaskedTable::check_invariants() const {
    for (size_t i = 0; i < observed.size(); ++i)
        if (observed[i] && target[i]) fail("masked table: cell ", i, " is both observed and target");
}

double NormalizationParams::apply(int col, double x) const {
    const auto& r = per_column[static_cast<size_t>(col)];
    if (!r) return x;
    if (r->max == r->min) return 0.0;
    return (x - r->min) / (r->max - r->min);
}

double NormalizationParams::invert(int col, double x) const {
    const auto& r = per_column[static_cast<size_t>(col)];
    if (!r) return x;
    if (r->max == r->min) return r->min;
    return r->min + x * (r->max - r->min);
}

// Embedded newlines in quoted fields are not supported.
std::vector<std::string> split_csv_line(const std::string& line, int line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c == '\r' && i + 1 == line.size()) {
            // trailing CR from CRLF files
        } else {
            cur += c;
        }
    }
    if (in_quotes) fail("csv: unterminated quote on line ", line_no);
    fields.push_back(std::move(cur));
    return fields;
}

std::vector<std::string> split_csv_line_raw(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (c == '"') in_quotes = !in_quotes;
        if (c == ',' && !in_quotes) {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (!(c == '\r' && i + 1 == line.size())) {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

namespace {

double parse_number(const std::string& s, const std::string& column, int line_no) {
    size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        fail("csv: line ", line_no, ", column '", column, "': '", s, "' is not a number");
    }
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) fail("csv: line ", line_no, ", column '", column, "': '", s, "' is not a number");
    return v;
}

} // namespace

MaskedTable load_csv(const std::string& path, const TableSchema& schema) {
    std::ifstream in(path);
    if (!in) fail("csv: cannot open '", path, "'");
    std::string line;
    if (!std::getline(in, line)) fail("csv: '", path, "' is empty");
    auto header = split_csv_line(line, 1);
    if (static_cast<int>(header.size()) != schema.ncols())
        fail("csv: header has ", header.size(), " columns, schema expects ", schema.ncols());
    for (int c = 0; c < schema.ncols(); ++c)
        if (header[static_cast<size_t>(c)] != schema.columns[static_cast<size_t>(c)].name)
            fail("csv: header column ", c, " is '", header[static_cast<size_t>(c)], "', schema expects '",
                 schema.columns[static_cast<size_t>(c)].name, "'");

    // category label -> index per column
    std::vector<std::unordered_map<std::string, int>> cat_index(static_cast<size_t>(schema.ncols()));
    for (int c = 0; c < schema.ncols(); ++c) {
        const auto& col = schema.columns[static_cast<size_t>(c)];
        for (int k = 0; k < col.cardinality(); ++k) cat_index[static_cast<size_t>(c)][col.categories[static_cast<size_t>(k)]] = k;
    }

    std::vector<std::vector<std::string>> records;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        auto fields = split_csv_line(line, line_no);
        if (static_cast<int>(fields.size()) != schema.ncols())
            fail("csv: line ", line_no, " has ", fields.size(), " fields, expected ", schema.ncols());
        records.push_back(std::move(fields));
    }

    MaskedTable t(static_cast<int>(records.size()), schema.ncols());
    for (int r = 0; r < t.rows; ++r) {
        for (int c = 0; c < t.cols; ++c) {
            const std::string& cell = records[static_cast<size_t>(r)][static_cast<size_t>(c)];
            const auto& col = schema.columns[static_cast<size_t>(c)];
            if (cell == schema.missing_sentinel) continue; // stays unobserved
            if (col.is_categorical()) {
                auto it = cat_index[static_cast<size_t>(c)].find(cell);
                if (it == cat_index[static_cast<size_t>(c)].end())
                    fail("csv: line ", r + 2, ", column '", col.name, "': unknown category label '", cell, "'");
                t.values[t.idx(r, c)] = it->second;
            } else {
                t.values[t.idx(r, c)] = parse_number(cell, col.name, r + 2);
            }
            t.observed[t.idx(r, c)] = 1;
        }
    }
    return t;
}

NormalizationParams fit_minmax(const MaskedTable& table, const TableSchema& schema) {
    NormalizationParams p;
    p.per_column.resize(static_cast<size_t>(table.cols));
    for (int c = 0; c < table.cols; ++c) {
        if (schema.columns[static_cast<size_t>(c)].is_categorical()) continue;
        double mn = 0, mx = 0;
        bool any = false;
        for (int r = 0; r < table.rows; ++r) {
            if (!table.is_observed(r, c)) continue;
            double v = table.value(r, c);
            if (!any) {
                mn = mx = v;
                any = true;
            } else {
                mn = std::min(mn, v);
                mx = std::max(mx, v);
            }
        }
        if (!any) fail("normalize: column '", schema.columns[static_cast<size_t>(c)].name, "' has no observed values");
        p.per_column[static_cast<size_t>(c)] = NormalizationParams::Range{mn, mx};
    }
    return p;
}

void apply_minmax(MaskedTable& table, const TableSchema& schema, const NormalizationParams& params) {
    if (params.per_column.size() != static_cast<size_t>(table.cols))
        fail("normalize: params cover ", params.per_column.size(), " columns, table has ", table.cols);
    for (int c = 0; c < table.cols; ++c) {
        if (schema.columns[static_cast<size_t>(c)].is_categorical()) continue;
        for (int r = 0; r < table.rows; ++r) {
            size_t i = table.idx(r, c);
            if (table.observed[i]) table.values[i] = params.apply(c, table.values[i]);
            if (table.target[i]) table.truth[i] = params.apply(c, table.truth[i]);
        }
    }
}

MaskedTable inject_mcar(const MaskedTable& table, double rate, uint64_t seed) {
    if (rate < 0.0 || rate > 1.0) fail("inject_mcar: rate ", rate, " outside [0,1]");
    MaskedTable out = table;
    Rng rng(seed);
    for (int r = 0; r < out.rows; ++r) {
        for (int c = 0; c < out.cols; ++c) {
            size_t i = out.idx(r, c);
            if (!out.observed[i]) continue;
            if (rng.uniform() < rate) {
                out.observed[i] = 0;
                out.target[i] = 1;
                out.truth[i] = out.values[i];
                out.values[i] = 0.0;
            }
        }
    }
    return out;
}

MaskedTable take_rows(const MaskedTable& table, const std::vector<int>& row_ids) {
    MaskedTable out(static_cast<int>(row_ids.size()), table.cols);
    for (size_t r = 0; r < row_ids.size(); ++r) {
        int src = row_ids[r];
        for (int c = 0; c < table.cols; ++c) {
            size_t si = table.idx(src, c);
            size_t di = out.idx(static_cast<int>(r), c);
            out.values[di] = table.values[si];
            out.observed[di] = table.observed[si];
            out.target[di] = table.target[si];
            out.truth[di] = table.truth[si];
        }
    }
    return out;
}

std::pair<MaskedTable, MaskedTable> split_rows(const MaskedTable& table, double train_fraction, uint64_t seed) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        fail("split_rows: train_fraction ", train_fraction, " outside (0,1)");
    std::vector<int> order(static_cast<size_t>(table.rows));
    for (int i = 0; i < table.rows; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    for (int i = table.rows - 1; i > 0; --i)
        std::swap(order[static_cast<size_t>(i)], order[rng.integer(static_cast<uint64_t>(i) + 1)]);
    int n_train = static_cast<int>(std::llround(train_fraction * table.rows));
    n_train = std::clamp(n_train, 0, table.rows);
    if (n_train == 0 || n_train == table.rows)
        fail("split_rows: split produces an empty side (", n_train, " of ", table.rows, " rows)");
    std::vector<int> train_ids(order.begin(), order.begin() + n_train);
    std::vector<int> test_ids(order.begin() + n_train, order.end());
    return {take_rows(table, train_ids), take_rows(table, test_ids)};
}

} // namespace tabcsdi

#include "tabcsdi/schema.hpp"

#include <fstream>
#include <set>

#include "json.hpp"

#include "tabcsdi/rng.hpp"

namespace tabcsdi {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const char* where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) fail(where, ": unknown key '", it.key(), "'");
    }
}

} // namespace

TableSchema TableSchema::from_json_text(const std::string& text) {
    json j = json::parse(text);
    reject_unknown_keys(j, {"missing_sentinel", "columns"}, "schema");
    TableSchema schema;
    schema.missing_sentinel = j.value("missing_sentinel", std::string());
    if (!j.contains("columns") || !j["columns"].is_array()) fail("schema: missing 'columns' array");
    for (const auto& jc : j["columns"]) {
        reject_unknown_keys(jc, {"name", "kind", "categories"}, "schema column");
        ColumnSchema col;
        col.name = jc.at("name").get<std::string>();
        std::string kind = jc.at("kind").get<std::string>();
        if (kind == "numerical") {
            col.kind = ColumnKind::numerical;
            if (jc.contains("categories")) fail("schema: numerical column '", col.name, "' lists categories");
        } else if (kind == "categorical") {
            col.kind = ColumnKind::categorical;
            col.categories = jc.at("categories").get<std::vector<std::string>>();
        } else {
            fail("schema: column '", col.name, "' has unknown kind '", kind, "'");
        }
        schema.columns.push_back(std::move(col));
    }
    schema.validate();
    return schema;
}

TableSchema TableSchema::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("schema: cannot open '", path, "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return from_json_text(text);
    } catch (const json::exception& e) {
        fail("schema: failed to parse '", path, "': ", e.what());
    }
}

std::string TableSchema::to_json_text() const {
    json cols = json::array();
    for (const auto& c : columns) {
        json jc;
        jc["name"] = c.name;
        jc["kind"] = c.is_categorical() ? "categorical" : "numerical";
        if (c.is_categorical()) jc["categories"] = c.categories;
        cols.push_back(std::move(jc));
    }
    json j;
    j["missing_sentinel"] = missing_sentinel;
    j["columns"] = std::move(cols);
    return j.dump(2);
}

void TableSchema::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) fail("schema: cannot write '", path, "'");
    out << to_json_text() << '\n';
}

uint64_t TableSchema::hash() const {
    return detail::fnv1a(to_json_text());
}

void TableSchema::validate() const {
    if (columns.empty()) fail("schema: no columns");
    std::set<std::string> names;
    for (const auto& c : columns) {
        if (c.name.empty()) fail("schema: empty column name");
        if (!names.insert(c.name).second) fail("schema: duplicate column name '", c.name, "'");
        if (c.is_categorical()) {
            if (c.cardinality() < 2) fail("schema: categorical column '", c.name, "' needs >= 2 categories");
            std::set<std::string> labels(c.categories.begin(), c.categories.end());
            if (labels.size() != c.categories.size())
                fail("schema: duplicate category label in column '", c.name, "'");
        }
    }
}

std::string TableSchema::diff(const TableSchema& other) const {
    std::ostringstream os;
    size_t n = std::max(columns.size(), other.columns.size());
    for (size_t i = 0; i < n; ++i) {
        if (i >= columns.size()) {
            os << " +" << other.columns[i].name;
            continue;
        }
        if (i >= other.columns.size()) {
            os << " -" << columns[i].name;
            continue;
        }
        const auto& a = columns[i];
        const auto& b = other.columns[i];
        if (a.name != b.name || a.kind != b.kind || a.categories != b.categories)
            os << " " << a.name << "!=" << b.name;
    }
    std::string s = os.str();
    return s.empty() ? "(identical)" : s;
}

} // namespace tabcsdi

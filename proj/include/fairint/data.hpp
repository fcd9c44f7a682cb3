#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairint/error.hpp"
#include "fairint/random.hpp"

namespace fairint {

enum class FeatureKind { categorical, numerical };
enum class FeatureRole { sensitive, non_sensitive, label };

/// One column of a tabular dataset. For categorical columns `cardinality`
/// counts the known categories; one extra "unknown" id is appended on top.
struct FeatureSchema {
    std::string name;
    FeatureKind kind = FeatureKind::numerical;
    int cardinality = 0;
    FeatureRole role = FeatureRole::non_sensitive;

    /// Number of embedding columns: known categories plus the unknown slot.
    int vocab_size() const { return kind == FeatureKind::categorical ? cardinality + 1 : 1; }

    friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

using Schema = std::vector<FeatureSchema>;

inline const char* to_string(FeatureKind k) { return k == FeatureKind::categorical ? "categorical" : "numerical"; }

inline const char* to_string(FeatureRole r) {
    switch (r) {
    case FeatureRole::sensitive: return "sensitive";
    case FeatureRole::label: return "label";
    case FeatureRole::non_sensitive: return "non_sensitive";
    }
    return "non_sensitive";
}

/// Exactly one label and one binary sensitive column, plus at least one feature.
inline void validate_schema(const Schema& schema) {
    int labels = 0, sensitive = 0, features = 0;
    std::map<std::string, int> names;
    for (const auto& col : schema) {
        if (col.name.empty()) {
            throw ConfigError("schema column with empty name");
        }
        if (names[col.name]++) {
            throw ConfigError("duplicate schema column '" + col.name + "'");
        }
        if (col.kind == FeatureKind::categorical && col.cardinality < 1) {
            throw ConfigError("categorical column '" + col.name + "' needs a positive cardinality");
        }
        switch (col.role) {
        case FeatureRole::label: ++labels; break;
        case FeatureRole::sensitive:
            ++sensitive;
            if (col.kind != FeatureKind::categorical || col.cardinality != 2) {
                throw ConfigError("sensitive column '" + col.name + "' must be categorical with cardinality 2");
            }
            break;
        case FeatureRole::non_sensitive: ++features; break;
        }
    }
    if (labels != 1) {
        throw ConfigError("schema needs exactly one label column, found " + std::to_string(labels));
    }
    if (sensitive != 1) {
        throw ConfigError("schema needs exactly one sensitive column, found " + std::to_string(sensitive));
    }
    if (features < 1) {
        throw ConfigError("schema needs at least one non-sensitive feature");
    }
}

inline nlohmann::json schema_to_json(const Schema& schema) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : schema) {
        nlohmann::json j;
        j["name"] = c.name;
        j["kind"] = to_string(c.kind);
        if (c.kind == FeatureKind::categorical) {
            j["cardinality"] = c.cardinality;
        }
        j["role"] = to_string(c.role);
        cols.push_back(std::move(j));
    }
    return nlohmann::json{{"columns", std::move(cols)}};
}

inline Schema schema_from_json(const nlohmann::json& doc) {
    const nlohmann::json* cols = &doc;
    if (doc.is_object()) {
        if (!doc.contains("columns")) {
            throw ConfigError("schema document has no 'columns' list");
        }
        cols = &doc.at("columns");
    }
    if (!cols->is_array()) {
        throw ConfigError("schema 'columns' must be a list");
    }
    Schema schema;
    for (const auto& j : *cols) {
        FeatureSchema c;
        try {
            c.name = j.at("name").get<std::string>();
            const auto kind = j.at("kind").get<std::string>();
            if (kind == "categorical") {
                c.kind = FeatureKind::categorical;
                c.cardinality = j.at("cardinality").get<int>();
            } else if (kind == "numerical") {
                c.kind = FeatureKind::numerical;
            } else {
                throw ConfigError("column '" + c.name + "': unknown kind '" + kind + "'");
            }
            const auto role = j.value("role", std::string("non_sensitive"));
            if (role == "sensitive") {
                c.role = FeatureRole::sensitive;
            } else if (role == "label") {
                c.role = FeatureRole::label;
            } else if (role == "non_sensitive") {
                c.role = FeatureRole::non_sensitive;
            } else {
                throw ConfigError("column '" + c.name + "': unknown role '" + role + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("malformed schema column: ") + e.what());
        }
        schema.push_back(std::move(c));
    }
    validate_schema(schema);
    return schema;
}

inline Schema load_schema(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot read schema file '" + path + "'");
    }
    try {
        return schema_from_json(nlohmann::json::parse(is));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("schema file '" + path + "' is not valid JSON: " + e.what());
    }
}

/// Known categories of one column, in id order. Ids beyond the list map to the
/// unknown slot `values.size()`.
struct CategoryVocab {
    std::vector<std::string> values;

    int unknown_id() const { return static_cast<int>(values.size()); }

    int encode(const std::string& v) const {
        auto it = std::lower_bound(values.begin(), values.end(), v);
        if (it != values.end() && *it == v) {
            return static_cast<int>(it - values.begin());
        }
        return unknown_id();
    }

    std::optional<std::string> decode(int id) const {
        if (id >= 0 && id < unknown_id()) {
            return values[static_cast<std::size_t>(id)];
        }
        return std::nullopt;
    }
};

struct NumericStats {
    double mean = 0.0;
    double std = 1.0;
};

/// Per-column encoders: a vocabulary for categorical columns and
/// standardization statistics for numerical ones (unused entries stay empty).
struct Encoders {
    std::vector<CategoryVocab> vocab;
    std::vector<NumericStats> stats;
};

enum class SplitTag : std::uint8_t { train = 0, val = 1, test = 2 };

inline const char* to_string(SplitTag t) {
    switch (t) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
    }
    return "train";
}

inline SplitTag split_from_string(const std::string& s) {
    if (s == "train") return SplitTag::train;
    if (s == "val") return SplitTag::val;
    if (s == "test") return SplitTag::test;
    throw ConfigError("unknown split '" + s + "' (expected train, val or test)");
}

struct Column {
    std::vector<int> codes;    // categorical ids
    std::vector<double> raw;   // numerical values as read
    std::vector<double> values; // numerical values after standardization
};

/// Encoded table. Immutable once split and standardized.
struct Dataset {
    Schema schema;
    std::vector<Column> columns;
    Encoders encoders;
    std::vector<double> labels;
    std::vector<int> sensitive;
    std::vector<SplitTag> split_tags;
    std::size_t n = 0;

    std::size_t label_column() const { return find_role(FeatureRole::label); }
    std::size_t sensitive_column() const { return find_role(FeatureRole::sensitive); }

    /// Non-sensitive columns in schema order: the model's input feature set.
    std::vector<std::size_t> feature_columns() const {
        std::vector<std::size_t> out;
        for (std::size_t c = 0; c < schema.size(); ++c) {
            if (schema[c].role == FeatureRole::non_sensitive) {
                out.push_back(c);
            }
        }
        return out;
    }

    std::vector<std::size_t> rows_in(SplitTag tag) const {
        if (split_tags.size() != n) {
            throw UsageError("dataset has not been split");
        }
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < n; ++i) {
            if (split_tags[i] == tag) {
                out.push_back(i);
            }
        }
        return out;
    }

private:
    std::size_t find_role(FeatureRole role) const {
        for (std::size_t c = 0; c < schema.size(); ++c) {
            if (schema[c].role == role) {
                return c;
            }
        }
        throw UsageError(std::string("dataset has no ") + to_string(role) + " column");
    }
};

// ---------------------------------------------------------------------------
// CSV

/// Splits CSV text into records. Supports quoted fields with "" escapes and
/// CRLF line endings; a trailing newline does not produce an empty record.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        switch (ch) {
        case '"':
            in_quotes = true;
            field_started = true;
            break;
        case ',':
            record.push_back(std::move(field));
            field.clear();
            field_started = true;
            break;
        case '\r':
            break;
        case '\n':
            if (field_started || !field.empty() || !record.empty()) {
                record.push_back(std::move(field));
                records.push_back(std::move(record));
            }
            field.clear();
            record.clear();
            field_started = false;
            break;
        default:
            field.push_back(ch);
            field_started = true;
        }
    }
    if (in_quotes) {
        throw DataError("unterminated quoted field at end of CSV");
    }
    if (field_started || !field.empty() || !record.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }
    return records;
}

inline std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) {
        return std::nullopt;
    }
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

inline std::string csv_location(std::size_t line, const std::string& column) {
    return "line " + std::to_string(line) + ", column '" + column + "'";
}

namespace detail {

/// Known categories: the first `cardinality` distinct values in file order,
/// then ids assigned in lexicographic order of those values.
inline CategoryVocab build_vocab(const std::vector<std::string>& raw, int cardinality) {
    std::vector<std::string> seen;
    for (const auto& v : raw) {
        if (static_cast<int>(seen.size()) >= cardinality) {
            break;
        }
        if (std::find(seen.begin(), seen.end(), v) == seen.end()) {
            seen.push_back(v);
        }
    }
    std::sort(seen.begin(), seen.end());
    return CategoryVocab{std::move(seen)};
}

} // namespace detail

/// Encodes string cells into a Dataset. With `fixed` encoders the vocabularies
/// are reused as-is; otherwise they are built from these rows.
inline Dataset encode_table(const std::vector<std::string>& header,
                            const std::vector<std::vector<std::string>>& rows, const Schema& schema,
                            const Encoders* fixed = nullptr) {
    validate_schema(schema);
    std::vector<std::size_t> source(schema.size());
    for (std::size_t c = 0; c < schema.size(); ++c) {
        auto it = std::find(header.begin(), header.end(), schema[c].name);
        if (it == header.end()) {
            throw DataError("missing column '" + schema[c].name + "' in CSV header");
        }
        source[c] = static_cast<std::size_t>(it - header.begin());
    }

    Dataset ds;
    ds.schema = schema;
    ds.n = rows.size();
    ds.columns.resize(schema.size());
    ds.encoders.vocab.resize(schema.size());
    ds.encoders.stats.resize(schema.size());
    ds.labels.resize(ds.n);
    ds.sensitive.resize(ds.n);

    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != header.size()) {
            throw DataError("line " + std::to_string(r + 2) + ": expected " + std::to_string(header.size()) +
                            " fields, found " + std::to_string(rows[r].size()));
        }
    }

    for (std::size_t c = 0; c < schema.size(); ++c) {
        const auto& col = schema[c];
        Column& out = ds.columns[c];
        if (col.role == FeatureRole::label) {
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const auto& cell = rows[r][source[c]];
                const auto v = parse_number(cell);
                if (!v || (*v != 0.0 && *v != 1.0)) {
                    throw DataError(csv_location(r + 2, col.name) + ": label '" + cell + "' is not 0 or 1");
                }
                ds.labels[r] = *v;
            }
            continue;
        }
        if (col.kind == FeatureKind::numerical) {
            out.raw.resize(rows.size());
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const auto& cell = rows[r][source[c]];
                const auto v = parse_number(cell);
                if (!v) {
                    throw DataError(csv_location(r + 2, col.name) + ": cannot parse '" + cell + "' as a number");
                }
                out.raw[r] = *v;
            }
            out.values = out.raw;
            if (fixed) {
                ds.encoders.stats[c] = fixed->stats.at(c);
            }
            continue;
        }
        std::vector<std::string> cells(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            cells[r] = rows[r][source[c]];
        }
        CategoryVocab vocab = fixed ? fixed->vocab.at(c) : detail::build_vocab(cells, col.cardinality);
        if (static_cast<int>(vocab.values.size()) > col.cardinality) {
            throw DataError("column '" + col.name + "': vocabulary larger than declared cardinality");
        }
        out.codes.resize(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            out.codes[r] = vocab.encode(cells[r]);
            if (col.role == FeatureRole::sensitive) {
                if (out.codes[r] == vocab.unknown_id()) {
                    throw DataError(csv_location(r + 2, col.name) + ": sensitive value '" + cells[r] +
                                    "' outside the binary alphabet");
                }
                ds.sensitive[r] = out.codes[r];
            }
        }
        ds.encoders.vocab[c] = std::move(vocab);
    }
    return ds;
}

inline Dataset load_csv(const std::string& path, const Schema& schema, const Encoders* fixed = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot read CSV file '" + path + "'");
    }
    std::stringstream buffer;
    buffer << is.rdbuf();
    auto records = parse_csv(buffer.str());
    if (records.empty()) {
        throw DataError("CSV file '" + path + "' has no header row");
    }
    auto header = std::move(records.front());
    records.erase(records.begin());
    if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) {
        header[0].erase(0, 3);
    }
    return encode_table(header, records, schema, fixed);
}

// ---------------------------------------------------------------------------
// Splitting and standardization

struct SplitRatios {
    double train = 0.7;
    double val = 0.15;
    double test = 0.15;
};

/// Per-split row counts by largest remainder, so each count is within 1 of
/// its exact fraction.
inline std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios) {
    const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
    for (double x : r) {
        if (!(x > 0.0)) {
            throw ConfigError("split ratios must be positive");
        }
    }
    if (std::fabs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
        throw ConfigError("split ratios must sum to 1");
    }
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double exact = static_cast<double>(n) * r[k];
        counts[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        frac[k] = exact - static_cast<double>(counts[k]);
        assigned += counts[k];
    }
    while (assigned < n) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < 3; ++k) {
            if (frac[k] > frac[best]) {
                best = k;
            }
        }
        ++counts[best];
        frac[best] = -1.0;
        ++assigned;
    }
    for (std::size_t k = 0; k < 3; ++k) {
        if (counts[k] == 0) {
            throw ConfigError(std::string("split '") + to_string(static_cast<SplitTag>(k)) + "' would be empty");
        }
    }
    return counts;
}

/// Fits mean / population std on the train rows and rewrites `values` of
/// every numerical column.
inline void fit_standardization(Dataset& ds) {
    const auto train = ds.rows_in(SplitTag::train);
    for (std::size_t c = 0; c < ds.schema.size(); ++c) {
        if (ds.schema[c].kind != FeatureKind::numerical || ds.schema[c].role == FeatureRole::label) {
            continue;
        }
        const auto& raw = ds.columns[c].raw;
        double mean = 0.0;
        for (auto r : train) {
            mean += raw[r];
        }
        mean /= static_cast<double>(train.size());
        double var = 0.0;
        for (auto r : train) {
            var += (raw[r] - mean) * (raw[r] - mean);
        }
        var /= static_cast<double>(train.size());
        const double sd = std::sqrt(var);
        ds.encoders.stats[c] = NumericStats{mean, sd > 0.0 ? sd : 1.0};
    }
}

/// Applies the stored statistics without refitting.
inline void apply_standardization(Dataset& ds) {
    for (std::size_t c = 0; c < ds.schema.size(); ++c) {
        if (ds.schema[c].kind != FeatureKind::numerical || ds.schema[c].role == FeatureRole::label) {
            continue;
        }
        const auto st = ds.encoders.stats[c];
        auto& col = ds.columns[c];
        col.values.resize(col.raw.size());
        for (std::size_t r = 0; r < col.raw.size(); ++r) {
            col.values[r] = (col.raw[r] - st.mean) / st.std;
        }
    }
}

inline void assign_split(Dataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
    const auto counts = split_counts(ds.n, ratios);
    std::vector<std::size_t> perm(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i) {
        perm[i] = i;
    }
    Rng rng(mix_seed(seed, 0x5117));
    rng.shuffle(std::span<std::size_t>(perm));
    ds.split_tags.assign(ds.n, SplitTag::train);
    for (std::size_t k = 0; k < ds.n; ++k) {
        const auto tag = k < counts[0] ? SplitTag::train : (k < counts[0] + counts[1] ? SplitTag::val : SplitTag::test);
        ds.split_tags[perm[k]] = tag;
    }
}

/// Seeded train/val/test assignment followed by train-only standardization.
inline Dataset split(Dataset ds, const SplitRatios& ratios, std::uint64_t seed) {
    assign_split(ds, ratios, seed);
    fit_standardization(ds);
    apply_standardization(ds);
    return ds;
}

// ---------------------------------------------------------------------------
// Batches

/// One non-sensitive input column of a batch.
struct FeatureView {
    std::size_t column = 0;
    FeatureKind kind = FeatureKind::numerical;
    std::vector<int> codes;
    std::vector<double> values;
};

/// Model inputs exclude the sensitive column by construction; the true
/// sensitive values ride along only for losses and metrics.
struct Batch {
    std::vector<std::size_t> rows;
    std::vector<FeatureView> features;
    std::vector<double> labels;
    std::vector<int> true_sensitive;

    std::size_t size() const { return rows.size(); }
};

inline Batch make_batch(const Dataset& ds, std::span<const std::size_t> rows) {
    Batch b;
    b.rows.assign(rows.begin(), rows.end());
    for (auto c : ds.feature_columns()) {
        FeatureView v;
        v.column = c;
        v.kind = ds.schema[c].kind;
        if (v.kind == FeatureKind::categorical) {
            v.codes.reserve(rows.size());
            for (auto r : rows) {
                v.codes.push_back(ds.columns[c].codes[r]);
            }
        } else {
            v.values.reserve(rows.size());
            for (auto r : rows) {
                v.values.push_back(ds.columns[c].values[r]);
            }
        }
        b.features.push_back(std::move(v));
    }
    for (auto r : rows) {
        b.labels.push_back(ds.labels[r]);
        b.true_sensitive.push_back(ds.sensitive[r]);
    }
    return b;
}

/// Epoch-seeded shuffle of a split, cut into batches; the last partial batch is kept.
inline std::vector<Batch> batches(const Dataset& ds, SplitTag split, std::size_t batch_size, std::uint64_t seed,
                                  std::uint64_t epoch) {
    if (batch_size == 0) {
        throw ConfigError("batch_size must be at least 1");
    }
    auto rows = ds.rows_in(split);
    Rng rng(mix_seed(seed, 0xBA7C, epoch));
    rng.shuffle(std::span<std::size_t>(rows));
    std::vector<Batch> out;
    for (std::size_t start = 0; start < rows.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, rows.size() - start);
        out.push_back(make_batch(ds, std::span<const std::size_t>(rows).subspan(start, len)));
    }
    return out;
}

/// Sequential, unshuffled batches over a split (evaluation order).
inline std::vector<Batch> ordered_batches(const Dataset& ds, SplitTag split, std::size_t batch_size) {
    const auto rows = ds.rows_in(split);
    std::vector<Batch> out;
    for (std::size_t start = 0; start < rows.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, rows.size() - start);
        out.push_back(make_batch(ds, std::span<const std::size_t>(rows).subspan(start, len)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic biased data

struct SynthParams {
    std::size_t n = 20000;
    double beta = 2.0;  // direct label dependence on s
    double rho = 0.8;   // proxy correlation with s
    std::uint64_t seed = 1;
};

inline Schema synth_schema() {
    return Schema{
        {"proxy1", FeatureKind::numerical, 0, FeatureRole::non_sensitive},
        {"proxy2", FeatureKind::numerical, 0, FeatureRole::non_sensitive},
        {"noise1", FeatureKind::numerical, 0, FeatureRole::non_sensitive},
        {"noise2", FeatureKind::numerical, 0, FeatureRole::non_sensitive},
        {"noise3", FeatureKind::numerical, 0, FeatureRole::non_sensitive},
        {"s", FeatureKind::categorical, 2, FeatureRole::sensitive},
        {"y", FeatureKind::categorical, 2, FeatureRole::label},
    };
}

/// Generative process, fixed as a public contract. Per row, in stream order:
///   s ~ Bernoulli(0.5); e1..e5 ~ N(0,1);
///   proxy1 = rho*(2s-1) + (1-rho)*e1;   proxy2 = 0.5*rho*(2s-1) + (1-rho)*e2;
///   noise1..3 = e3..e5;
///   logit = proxy1 - 0.8*noise1 + 0.5*noise2 + beta*(2s-1);  y ~ Bernoulli(sigmoid(logit)).
inline Dataset synth_generate(const SynthParams& p) {
    if (p.n < 100) {
        throw ConfigError("synthetic data needs n >= 100");
    }
    if (p.beta < 0.0 || p.rho < 0.0 || p.rho > 1.0) {
        throw ConfigError("synthetic data needs beta >= 0 and rho in [0, 1]");
    }
    Dataset ds;
    ds.schema = synth_schema();
    ds.n = p.n;
    ds.columns.resize(ds.schema.size());
    ds.encoders.vocab.resize(ds.schema.size());
    ds.encoders.stats.resize(ds.schema.size());
    ds.encoders.vocab[5] = CategoryVocab{{"0", "1"}};
    ds.labels.resize(p.n);
    ds.sensitive.resize(p.n);
    for (std::size_t c = 0; c < 5; ++c) {
        ds.columns[c].raw.resize(p.n);
    }
    ds.columns[5].codes.resize(p.n);

    Rng rng(p.seed);
    for (std::size_t i = 0; i < p.n; ++i) {
        const int s = rng.uniform() < 0.5 ? 1 : 0;
        const double sign = 2.0 * s - 1.0;
        double e[5];
        for (double& x : e) {
            x = rng.normal();
        }
        const double proxy1 = p.rho * sign + (1.0 - p.rho) * e[0];
        const double proxy2 = p.rho * sign * 0.5 + (1.0 - p.rho) * e[1];
        const double logit = 1.0 * proxy1 - 0.8 * e[2] + 0.5 * e[3] + p.beta * sign;
        const double prob = 1.0 / (1.0 + std::exp(-logit));
        const bool y = rng.uniform() < prob;

        ds.columns[0].raw[i] = proxy1;
        ds.columns[1].raw[i] = proxy2;
        ds.columns[2].raw[i] = e[2];
        ds.columns[3].raw[i] = e[3];
        ds.columns[4].raw[i] = e[4];
        ds.columns[5].codes[i] = s;
        ds.sensitive[i] = s;
        ds.labels[i] = y ? 1.0 : 0.0;
    }
    for (std::size_t c = 0; c < 5; ++c) {
        ds.columns[c].values = ds.columns[c].raw;
    }
    return ds;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') {
            out += "\"\"";
        } else {
            out.push_back(ch);
        }
    }
    return out + "\"";
}

/// Serializes raw (unstandardized) values; categories by their vocabulary string.
inline std::string dataset_to_csv(const Dataset& ds) {
    std::string out;
    for (std::size_t c = 0; c < ds.schema.size(); ++c) {
        out += (c ? "," : "") + csv_escape(ds.schema[c].name);
    }
    out += '\n';
    for (std::size_t r = 0; r < ds.n; ++r) {
        for (std::size_t c = 0; c < ds.schema.size(); ++c) {
            if (c) {
                out += ',';
            }
            const auto& col = ds.schema[c];
            if (col.role == FeatureRole::label) {
                out += ds.labels[r] != 0.0 ? "1" : "0";
            } else if (col.kind == FeatureKind::numerical) {
                out += format_double(ds.columns[c].raw[r]);
            } else {
                const auto v = ds.encoders.vocab[c].decode(ds.columns[c].codes[r]);
                out += csv_escape(v ? *v : std::string());
            }
        }
        out += '\n';
    }
    return out;
}

} // namespace fairint

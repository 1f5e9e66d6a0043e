#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ncart/matrix.hpp"
#include "ncart/model.hpp"

namespace ncart {

// ---------------------------------------------------------------------------
// CSV reading (RFC-4180 style: quoted fields, "" escapes, CRLF tolerant).
// ---------------------------------------------------------------------------

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool any_field = false;

    auto end_field = [&] {
        record.push_back(field);
        field.clear();
        any_field = false;
    };
    auto end_record = [&] {
        end_field();
        // a fully blank line is not a record
        if (record.size() == 1 && record[0].empty())
            record.clear();
        else {
            records.push_back(std::move(record));
            record.clear();
        }
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"' && field.empty() && !any_field) {
            in_quotes = true;
            any_field = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r') {
            // swallow; \n terminates the record
        } else if (c == '\n') {
            end_record();
        } else {
            field += c;
            any_field = true;
        }
    }
    if (in_quotes) throw std::runtime_error(path + ": unterminated quoted field");
    if (any_field || !field.empty() || !record.empty()) end_record();

    if (records.empty()) throw std::runtime_error(path + ": missing header row");
    CsvTable table;
    table.header = records.front();
    table.rows.assign(records.begin() + 1, records.end());
    return table;
}

// ---------------------------------------------------------------------------
// Schema and encoded dataset.
// ---------------------------------------------------------------------------

struct Schema {
    std::vector<std::string> columns;        // filled from the header on load
    std::string target;
    std::vector<std::string> categorical;    // feature columns to ordinal-encode
    Task task = Task::binclass;
};

struct Dataset {
    Matrix X;                    // M x n, encoded features (no scaling; BN handles that)
    std::vector<int> y_class;    // classification targets
    std::vector<double> y_reg;   // regression targets
    std::size_t n_classes = 0;
    Task task = Task::binclass;

    std::vector<std::string> feature_names;
    std::vector<bool> is_categorical;                  // per feature
    std::vector<std::vector<std::string>> categories;  // per feature: code -> label
    std::vector<std::string> class_labels;             // class index -> label
    std::string target_name;

    std::size_t size() const { return X.rows; }
    std::size_t n_features() const { return X.cols; }
};

namespace detail {

inline double parse_numeric(const std::string& s, std::size_t row, const std::string& column) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        throw std::runtime_error("unparseable numeric value '" + s + "' at row " +
                                 std::to_string(row) + ", column '" + column + "'");
    return v;
}

inline void check_not_missing(const std::string& s, std::size_t row, const std::string& column) {
    if (s.empty())
        throw std::runtime_error("missing value at row " + std::to_string(row) + ", column '" +
                                 column + "' (missing values are not supported)");
}

}  // namespace detail

// Parse and encode a CSV per the schema. Numeric feature columns are read as
// doubles; categorical columns get ordinal codes in first-appearance order
// starting at 0. Classification targets are encoded against the sorted set
// of distinct labels so that, for the usual {0,1}-style labels, class 1 is
// the positive class. Rows are 1-based in error messages (header excluded).
inline Dataset load_csv(const std::string& path, const Schema& schema) {
    CsvTable table = read_csv(path);
    if (schema.target.empty()) throw std::runtime_error("schema: no target column given");

    auto col_index = [&](const std::string& name) -> std::size_t {
        auto it = std::find(table.header.begin(), table.header.end(), name);
        if (it == table.header.end())
            throw std::runtime_error("unknown column '" + name + "' in schema (file " + path +
                                     ")");
        return static_cast<std::size_t>(it - table.header.begin());
    };

    const std::size_t target_idx = col_index(schema.target);
    std::set<std::string> cat_set;
    for (const std::string& c : schema.categorical) {
        if (c == schema.target)
            throw std::runtime_error("schema: target column '" + c +
                                     "' cannot also be categorical feature");
        col_index(c);
        cat_set.insert(c);
    }

    Dataset ds;
    ds.task = schema.task;
    ds.target_name = schema.target;
    std::vector<std::size_t> feature_idx;
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        if (j == target_idx) continue;
        feature_idx.push_back(j);
        ds.feature_names.push_back(table.header[j]);
        ds.is_categorical.push_back(cat_set.count(table.header[j]) > 0);
    }
    const std::size_t n = feature_idx.size();
    if (n == 0) throw std::runtime_error(path + ": no feature columns");

    const std::size_t m = table.rows.size();
    if (m == 0) throw std::runtime_error(path + ": no data rows");

    ds.categories.resize(n);
    std::vector<std::unordered_map<std::string, int>> dicts(n);

    ds.X = Matrix(m, n);
    std::vector<std::string> raw_targets(m);
    for (std::size_t r = 0; r < m; ++r) {
        const std::vector<std::string>& row = table.rows[r];
        if (row.size() != table.header.size())
            throw std::runtime_error("row " + std::to_string(r + 1) + " has " +
                                     std::to_string(row.size()) + " fields, expected " +
                                     std::to_string(table.header.size()));
        for (std::size_t f = 0; f < n; ++f) {
            const std::string& cell = row[feature_idx[f]];
            const std::string& name = ds.feature_names[f];
            detail::check_not_missing(cell, r + 1, name);
            if (ds.is_categorical[f]) {
                auto [it, inserted] = dicts[f].try_emplace(cell, static_cast<int>(ds.categories[f].size()));
                if (inserted) ds.categories[f].push_back(cell);
                ds.X(r, f) = static_cast<double>(it->second);
            } else {
                ds.X(r, f) = detail::parse_numeric(cell, r + 1, name);
            }
        }
        detail::check_not_missing(row[target_idx], r + 1, schema.target);
        raw_targets[r] = row[target_idx];
    }

    if (schema.task == Task::regression) {
        ds.y_reg.resize(m);
        for (std::size_t r = 0; r < m; ++r)
            ds.y_reg[r] = detail::parse_numeric(raw_targets[r], r + 1, schema.target);
    } else {
        std::set<std::string> labels(raw_targets.begin(), raw_targets.end());
        ds.class_labels.assign(labels.begin(), labels.end());
        std::unordered_map<std::string, int> label_code;
        for (std::size_t k = 0; k < ds.class_labels.size(); ++k)
            label_code[ds.class_labels[k]] = static_cast<int>(k);
        ds.n_classes = ds.class_labels.size();
        if (schema.task == Task::binclass && ds.n_classes > 2)
            throw std::runtime_error("binclass target '" + schema.target + "' has " +
                                     std::to_string(ds.n_classes) + " distinct labels");
        ds.y_class.resize(m);
        for (std::size_t r = 0; r < m; ++r) ds.y_class[r] = label_code[raw_targets[r]];
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Encoding new rows with the dictionaries of a previous load. Unseen
// categories map to the sentinel -1 and are counted, never fatal.
// ---------------------------------------------------------------------------

struct EncodeResult {
    Matrix X;
    std::size_t unseen = 0;
};

inline EncodeResult encode_with(const Dataset& reference,
                                const std::vector<std::vector<std::string>>& rows) {
    const std::size_t n = reference.n_features();
    std::vector<std::unordered_map<std::string, int>> dicts(n);
    for (std::size_t f = 0; f < n; ++f)
        for (std::size_t c = 0; c < reference.categories[f].size(); ++c)
            dicts[f][reference.categories[f][c]] = static_cast<int>(c);

    EncodeResult out;
    out.X = Matrix(rows.size(), n);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != n)
            throw std::runtime_error("row " + std::to_string(r + 1) + " has " +
                                     std::to_string(rows[r].size()) + " fields, expected " +
                                     std::to_string(n));
        for (std::size_t f = 0; f < n; ++f) {
            const std::string& cell = rows[r][f];
            detail::check_not_missing(cell, r + 1, reference.feature_names[f]);
            if (reference.is_categorical[f]) {
                auto it = dicts[f].find(cell);
                if (it == dicts[f].end()) {
                    out.X(r, f) = -1.0;
                    ++out.unseen;
                } else {
                    out.X(r, f) = static_cast<double>(it->second);
                }
            } else {
                out.X(r, f) = detail::parse_numeric(cell, r + 1, reference.feature_names[f]);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics.
// ---------------------------------------------------------------------------

// Binary AUC by the Mann-Whitney rank statistic with midrank ties.
inline double roc_auc_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("roc_auc: scores/labels length mismatch");
    const std::size_t m = scores.size();
    std::size_t pos = 0;
    for (int y : labels) pos += (y == 1);
    const std::size_t neg = m - pos;
    if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc: labels contain one class only");

    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::vector<double> rank(m);
    std::size_t i = 0;
    while (i < m) {
        std::size_t j = i;
        while (j + 1 < m && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }

    double rank_sum = 0.0;
    for (std::size_t k = 0; k < m; ++k)
        if (labels[k] == 1) rank_sum += rank[k];
    const double p = static_cast<double>(pos), q = static_cast<double>(neg);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

// Multiclass: unweighted mean of one-vs-rest AUCs over the classes present.
inline double roc_auc(const Matrix& scores, const std::vector<int>& labels,
                      std::size_t n_classes) {
    if (n_classes == 2) {
        std::vector<double> s(scores.rows);
        for (std::size_t r = 0; r < scores.rows; ++r) s[r] = scores(r, 1);
        return roc_auc_binary(s, labels);
    }
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t k = 0; k < n_classes; ++k) {
        std::vector<double> s(scores.rows);
        std::vector<int> b(scores.rows);
        std::size_t pos = 0;
        for (std::size_t r = 0; r < scores.rows; ++r) {
            s[r] = scores(r, k);
            b[r] = labels[r] == static_cast<int>(k) ? 1 : 0;
            pos += b[r];
        }
        if (pos == 0 || pos == scores.rows) continue;  // class absent from this split
        total += roc_auc_binary(s, b);
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("roc_auc: labels contain one class only");
    return total / static_cast<double>(counted);
}

// Per-class F1 as 2TP/(2TP+FP+FN); an empty class scores 0.
inline double f1_of_class(const std::vector<int>& pred, const std::vector<int>& labels, int cls) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == cls, a = labels[i] == cls;
        tp += (p && a);
        fp += (p && !a);
        fn += (!p && a);
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

// Binary tasks score the positive class (label 1); multiclass macro-averages.
inline double f1_score(const std::vector<int>& pred, const std::vector<int>& labels,
                       std::size_t n_classes) {
    if (pred.size() != labels.size())
        throw std::invalid_argument("f1: predictions/labels length mismatch");
    if (n_classes == 2) return f1_of_class(pred, labels, 1);
    double total = 0.0;
    for (std::size_t k = 0; k < n_classes; ++k)
        total += f1_of_class(pred, labels, static_cast<int>(k));
    return total / static_cast<double>(n_classes);
}

inline double mse_metric(const std::vector<double>& pred, const std::vector<double>& targets) {
    if (pred.empty() || pred.size() != targets.size())
        throw std::invalid_argument("mse: empty or mismatched inputs");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred[i] - targets[i];
        sum += r * r;
    }
    return sum / static_cast<double>(pred.size());
}

}  // namespace ncart

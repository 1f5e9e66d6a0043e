// ncart command-line front end: train / cv / tune / predict / importance /
// gradcheck / odt-approx. Exit codes: 0 success, 1 runtime or data error,
// 2 usage error.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ncart/data.hpp"
#include "ncart/importance.hpp"
#include "ncart/model.hpp"
#include "ncart/model_check.hpp"
#include "ncart/odt_approx.hpp"
#include "ncart/serialize.hpp"
#include "ncart/train.hpp"

namespace {

using namespace ncart;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// every flag, presence-tracked so the defaults < config file < CLI
// precedence can be resolved after parsing
struct RawOptions {
    std::optional<std::string> data, target, task, cat_cols, config_path, sparse_fn;
    std::optional<std::string> out, model, report, tree, chart_out;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs, batch_size, blocks, trees, sel_dim, hidden, folds, trials,
        patience;
    std::optional<double> lr, timeout;
    std::optional<bool> early_stop;
};

void add_data_options(CLI::App* cmd, RawOptions& raw) {
    cmd->add_option("--data", raw.data, "input CSV (header row required)");
    cmd->add_option("--target", raw.target, "target column name");
    cmd->add_option("--task", raw.task, "binclass | multiclass | regression");
    cmd->add_option("--cat-cols", raw.cat_cols, "comma-separated categorical columns");
    cmd->add_option("--config", raw.config_path, "key=value config file");
    cmd->add_option("--seed", raw.seed, "RNG seed (env NCART_SEED is the fallback)");
    cmd->add_option("--timeout", raw.timeout, "wall-clock budget in seconds");
}

void add_model_options(CLI::App* cmd, RawOptions& raw) {
    cmd->add_option("--epochs", raw.epochs, "training epochs");
    cmd->add_option("--batch-size", raw.batch_size, "minibatch size");
    cmd->add_option("--lr", raw.lr, "Adam learning rate");
    cmd->add_option("--blocks", raw.blocks, "number of blocks (2 or 4)");
    cmd->add_option("--trees", raw.trees, "trees per block (8/16/32/64)");
    cmd->add_option("--sel-dim", raw.sel_dim, "selection rows per tree (2..10)");
    cmd->add_option("--hidden", raw.hidden, "leaf network width (0 = auto)");
    cmd->add_option("--sparse-fn", raw.sparse_fn, "sparsemax | entmax");
    cmd->add_flag("--early-stop", raw.early_stop, "hold out 10% for early stopping");
    cmd->add_option("--patience", raw.patience, "early-stop patience in epochs");
}

// ---------------------------------------------------------------------------
// config file: flat key=value, keys are the flag names without dashes
// ---------------------------------------------------------------------------

std::unordered_map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::unordered_map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = strip(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key=value");
        kv[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
    }
    return kv;
}

template <typename T>
T parse_value(const std::string& s, const std::string& key);

template <>
std::string parse_value(const std::string& s, const std::string&) {
    return s;
}
template <>
int parse_value(const std::string& s, const std::string& key) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw UsageError("config value for '" + key + "' is not an integer: " + s);
    }
}
template <>
double parse_value(const std::string& s, const std::string& key) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw UsageError("config value for '" + key + "' is not a number: " + s);
    }
}
template <>
std::uint64_t parse_value(const std::string& s, const std::string& key) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw UsageError("config value for '" + key + "' is not an unsigned integer: " + s);
    }
}
template <>
bool parse_value(const std::string& s, const std::string& key) {
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    throw UsageError("config value for '" + key + "' is not a boolean: " + s);
}

// resolved settings for one command
struct RunConfig {
    std::string data, target, cat_cols, out, model, report, tree, chart_out;
    Task task = Task::binclass;
    bool task_given = false;
    NcartConfig ncart;
    int folds = 5;
    double timeout = 50000.0;
};

Task parse_task(const std::string& s) {
    if (s == "binclass") return Task::binclass;
    if (s == "multiclass") return Task::multiclass;
    if (s == "regression") return Task::regression;
    throw UsageError("unknown task '" + s + "' (want binclass|multiclass|regression)");
}

SparseKind parse_sparse(const std::string& s) {
    if (s == "sparsemax") return SparseKind::sparsemax;
    if (s == "entmax") return SparseKind::entmax;
    throw UsageError("unknown sparse function '" + s + "' (want sparsemax|entmax)");
}

RunConfig resolve(const RawOptions& raw) {
    std::unordered_map<std::string, std::string> file;
    if (raw.config_path) file = read_config_file(*raw.config_path);

    auto pick = [&]<typename T>(const std::optional<T>& cli, const char* key, T fallback) -> T {
        if (cli) return *cli;
        auto it = file.find(key);
        if (it != file.end()) return parse_value<T>(it->second, key);
        return fallback;
    };

    RunConfig rc;
    rc.data = pick(raw.data, "data", std::string());
    rc.target = pick(raw.target, "target", std::string());
    rc.cat_cols = pick(raw.cat_cols, "catcols", std::string());
    rc.out = pick(raw.out, "out", std::string());
    rc.model = pick(raw.model, "model", std::string());
    rc.report = pick(raw.report, "report", std::string());
    rc.tree = pick(raw.tree, "tree", std::string());
    rc.chart_out = pick(raw.chart_out, "chartout", std::string());

    const std::string task_str = pick(raw.task, "task", std::string());
    if (!task_str.empty()) {
        rc.task = parse_task(task_str);
        rc.task_given = true;
    }

    rc.ncart.blocks = pick(raw.blocks, "blocks", 2);
    rc.ncart.trees = pick(raw.trees, "trees", 32);
    rc.ncart.sel_dim = pick(raw.sel_dim, "seldim", 5);
    rc.ncart.hidden = pick(raw.hidden, "hidden", 0);
    rc.ncart.lr = pick(raw.lr, "lr", 1e-3);
    rc.ncart.batch_size = pick(raw.batch_size, "batchsize", 1024);
    rc.ncart.epochs = pick(raw.epochs, "epochs", 1000);
    rc.ncart.trials = pick(raw.trials, "trials", 10);
    rc.ncart.early_stop = pick(raw.early_stop, "earlystop", false);
    rc.ncart.patience = pick(raw.patience, "patience", 20);
    rc.ncart.sparse_fn.kind = parse_sparse(pick(raw.sparse_fn, "sparsefn", std::string("sparsemax")));
    rc.folds = pick(raw.folds, "folds", 5);
    rc.timeout = pick(raw.timeout, "timeout", 50000.0);

    // seed precedence: flag > config file > NCART_SEED env > 0
    if (raw.seed) {
        rc.ncart.seed = *raw.seed;
    } else if (auto it = file.find("seed"); it != file.end()) {
        rc.ncart.seed = parse_value<std::uint64_t>(it->second, "seed");
    } else if (const char* env = std::getenv("NCART_SEED")) {
        rc.ncart.seed = parse_value<std::uint64_t>(env, "NCART_SEED");
    }

    if (rc.timeout <= 0.0) throw UsageError("--timeout must be positive");
    if (rc.folds < 2) throw UsageError("--folds must be at least 2");
    return rc;
}

Deadline make_deadline(const RunConfig& rc) {
    return Clock::now() + std::chrono::duration_cast<Clock::duration>(
                              std::chrono::duration<double>(rc.timeout));
}

Schema make_schema(const RunConfig& rc) {
    if (rc.data.empty()) throw UsageError("--data is required");
    if (rc.target.empty()) throw UsageError("--target is required");
    if (!rc.task_given) throw UsageError("--task is required");
    Schema schema;
    schema.target = rc.target;
    schema.task = rc.task;
    std::stringstream ss(rc.cat_cols);
    std::string col;
    while (std::getline(ss, col, ','))
        if (!col.empty()) schema.categorical.push_back(col);
    return schema;
}

std::size_t output_count(const Dataset& data) {
    return data.task == Task::regression ? 1 : data.n_classes;
}

std::string g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string table_pct(double mean, double sd) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f±%.2f", 100.0 * mean, 100.0 * sd);
    return buf;
}

nlohmann::json report_json(const TrainReport& r, const char* command) {
    nlohmann::json j;
    j["command"] = command;
    j["seed"] = r.seed;
    j["seconds"] = r.seconds;
    j["timed_out"] = r.timed_out;
    j["incomplete"] = r.timed_out;
    j["stopped_epoch"] = r.stopped_epoch;
    j["epoch_losses"] = r.epoch_losses;
    j["config"] = {{"blocks", r.config.blocks},
                   {"trees", r.config.trees},
                   {"sel_dim", r.config.sel_dim},
                   {"hidden", r.config.hidden},
                   {"sparse_fn", to_string(r.config.sparse_fn.kind)},
                   {"lr", r.config.lr},
                   {"batch_size", r.config.batch_size},
                   {"epochs", r.config.epochs},
                   {"early_stop", r.config.early_stop},
                   {"patience", r.config.patience}};
    if (!r.folds.empty()) {
        nlohmann::json folds = nlohmann::json::array();
        for (const FoldMetrics& f : r.folds)
            folds.push_back({{"auc", f.auc}, {"f1", f.f1}, {"mse", f.mse}, {"seconds", f.seconds}});
        j["folds"] = folds;
    }
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << text;
    if (!out) throw std::runtime_error("failed writing file: " + path);
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& rc) {
    if (rc.out.empty()) throw UsageError("--out (model file path) is required");
    Schema schema = make_schema(rc);
    Dataset data = load_csv(rc.data, schema);
    validate_config(rc.ncart);

    NcartModel model = init(rc.ncart, data.n_features(), output_count(data), rc.ncart.seed);
    model.task = data.task;
    TrainReport report = train(model, data, rc.ncart, make_deadline(rc));

    save_model(rc.out, model, data);
    if (!rc.report.empty()) write_text(rc.report, report_json(report, "train").dump(1) + "\n");

    std::cout << "trained " << rc.ncart.epochs << " epochs ("
              << report.epoch_losses.size() << " run) on " << data.size() << " rows, "
              << data.n_features() << " features; final loss "
              << (report.epoch_losses.empty() ? 0.0 : report.epoch_losses.back()) << "; model -> "
              << rc.out << "\n";
    if (report.timed_out) {
        std::cerr << "timeout hit after " << report.seconds
                  << "s; partial report marked incomplete\n";
        return kExitRuntime;
    }
    return kExitOk;
}

std::string cv_csv(const TrainReport& report, Task task) {
    std::ostringstream csv;
    csv << "# std uses the population (1/k) convention\n";
    csv << "fold,auc,f1,mse,seconds\n";
    for (std::size_t f = 0; f < report.folds.size(); ++f) {
        const FoldMetrics& m = report.folds[f];
        csv << f << ",";
        if (task == Task::regression)
            csv << ",," << g17(m.mse) << ",";
        else
            csv << g17(m.auc) << "," << g17(m.f1) << ",,";
        csv << m.seconds << "\n";
    }
    if (task == Task::regression) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6g±%.6g", report.mean(&FoldMetrics::mse),
                      report.stddev(&FoldMetrics::mse));
        csv << "mean±std,,," << buf << ",\n";
    } else {
        csv << "mean±std," << table_pct(report.mean(&FoldMetrics::auc), report.stddev(&FoldMetrics::auc))
            << "," << table_pct(report.mean(&FoldMetrics::f1), report.stddev(&FoldMetrics::f1))
            << ",,\n";
    }
    return csv.str();
}

int cmd_cv(const RunConfig& rc) {
    Schema schema = make_schema(rc);
    Dataset data = load_csv(rc.data, schema);
    validate_config(rc.ncart);

    TrainReport report = kfold_cv(data, rc.ncart, rc.folds, make_deadline(rc));
    const std::string csv = cv_csv(report, data.task);
    if (!rc.report.empty()) write_text(rc.report, csv);

    std::cout << rc.folds << "-fold cross-validation over " << data.size() << " rows\n";
    if (data.task == Task::regression) {
        std::cout << "  MSE  " << report.mean(&FoldMetrics::mse) << " ± "
                  << report.stddev(&FoldMetrics::mse) << "\n";
    } else {
        std::cout << "  AUC  " << table_pct(report.mean(&FoldMetrics::auc),
                                            report.stddev(&FoldMetrics::auc))
                  << "\n  F1   " << table_pct(report.mean(&FoldMetrics::f1),
                                              report.stddev(&FoldMetrics::f1))
                  << "\n";
    }
    std::cout << "  time " << report.seconds << "s\n";
    if (rc.report.empty()) std::cout << csv;
    if (report.timed_out) {
        std::cerr << "timeout hit; report covers " << report.folds.size() << " folds only\n";
        return kExitRuntime;
    }
    return kExitOk;
}

std::string config_file_text(const NcartConfig& c, int folds) {
    std::ostringstream out;
    out << "blocks=" << c.blocks << "\n"
        << "trees=" << c.trees << "\n"
        << "seldim=" << c.sel_dim << "\n"
        << "hidden=" << c.hidden << "\n"
        << "sparsefn=" << to_string(c.sparse_fn.kind) << "\n"
        << "lr=" << g17(c.lr) << "\n"
        << "batchsize=" << c.batch_size << "\n"
        << "epochs=" << c.epochs << "\n"
        << "earlystop=" << (c.early_stop ? 1 : 0) << "\n"
        << "patience=" << c.patience << "\n"
        << "folds=" << folds << "\n"
        << "seed=" << c.seed << "\n";
    return out.str();
}

int cmd_tune(const RunConfig& rc) {
    Schema schema = make_schema(rc);
    Dataset data = load_csv(rc.data, schema);

    SearchResult result = random_search(data, rc.ncart, rc.ncart.trials, rc.ncart.seed,
                                        make_deadline(rc));

    std::cout << "searched " << result.trials.size() << " configurations\n";
    for (std::size_t t = 0; t < result.trials.size(); ++t) {
        const SearchTrial& trial = result.trials[t];
        std::cout << "  trial " << t << ": blocks=" << trial.config.blocks
                  << " trees=" << trial.config.trees << " sel-dim=" << trial.config.sel_dim
                  << " sparse-fn=" << to_string(trial.config.sparse_fn.kind)
                  << " score=" << trial.score << "\n";
    }
    std::cout << "best: blocks=" << result.best.blocks << " trees=" << result.best.trees
              << " sel-dim=" << result.best.sel_dim
              << " sparse-fn=" << to_string(result.best.sparse_fn.kind) << "\n";

    if (!rc.out.empty()) {
        write_text(rc.out, config_file_text(result.best, rc.folds));
        std::cout << "best config -> " << rc.out << "\n";
    }
    if (!rc.report.empty()) {
        nlohmann::json j = report_json(result.best_report, "tune");
        nlohmann::json trials = nlohmann::json::array();
        for (const SearchTrial& t : result.trials)
            trials.push_back({{"blocks", t.config.blocks},
                              {"trees", t.config.trees},
                              {"sel_dim", t.config.sel_dim},
                              {"sparse_fn", to_string(t.config.sparse_fn.kind)},
                              {"score", t.score}});
        j["trials"] = trials;
        write_text(rc.report, j.dump(1) + "\n");
    }
    return kExitOk;
}

// feature rows from a CSV matched to the model's training columns; the
// target column may be present and is ignored
std::vector<std::vector<std::string>> feature_rows(const CsvTable& table,
                                                   const Dataset& reference) {
    std::vector<std::size_t> where;
    for (const std::string& name : reference.feature_names) {
        auto it = std::find(table.header.begin(), table.header.end(), name);
        if (it == table.header.end())
            throw std::runtime_error("column mismatch: missing feature column '" + name + "'");
        where.push_back(static_cast<std::size_t>(it - table.header.begin()));
    }
    for (const std::string& name : table.header) {
        if (name == reference.target_name) continue;
        if (std::find(reference.feature_names.begin(), reference.feature_names.end(), name) ==
            reference.feature_names.end())
            throw std::runtime_error("column mismatch: unexpected column '" + name + "'");
    }
    std::vector<std::vector<std::string>> rows(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        if (table.rows[r].size() != table.header.size())
            throw std::runtime_error("row " + std::to_string(r + 1) + " has " +
                                     std::to_string(table.rows[r].size()) +
                                     " fields, expected " +
                                     std::to_string(table.header.size()));
        for (std::size_t f = 0; f < where.size(); ++f)
            rows[r].push_back(table.rows[r][where[f]]);
    }
    return rows;
}

int cmd_predict(const RunConfig& rc) {
    if (rc.model.empty()) throw UsageError("--model is required");
    if (rc.data.empty()) throw UsageError("--data is required");
    LoadedModel loaded = load_model(rc.model);
    CsvTable table = read_csv(rc.data);
    EncodeResult enc = encode_with(loaded.reference, feature_rows(table, loaded.reference));

    Matrix pred = predict(loaded.model, enc.X);
    std::ostringstream csv;
    if (loaded.model.task == Task::regression) {
        csv << "prediction\n";
        for (std::size_t r = 0; r < pred.rows; ++r) csv << g17(pred(r, 0)) << "\n";
    } else {
        for (std::size_t k = 0; k < loaded.reference.class_labels.size(); ++k)
            csv << (k ? "," : "") << "prob_" << loaded.reference.class_labels[k];
        csv << "\n";
        for (std::size_t r = 0; r < pred.rows; ++r) {
            for (std::size_t k = 0; k < pred.cols; ++k) csv << (k ? "," : "") << g17(pred(r, k));
            csv << "\n";
        }
    }
    if (!rc.out.empty())
        write_text(rc.out, csv.str());
    else
        std::cout << csv.str();
    if (enc.unseen > 0)
        std::cerr << "warning: " << enc.unseen
                  << " unseen categorical value(s) encoded as the -1 sentinel\n";
    if (!rc.out.empty())
        std::cout << pred.rows << " prediction(s) -> " << rc.out << "\n";
    return kExitOk;
}

int cmd_importance(const RunConfig& rc) {
    if (rc.model.empty()) throw UsageError("--model is required");
    if (rc.data.empty()) throw UsageError("--data is required");
    LoadedModel loaded = load_model(rc.model);
    CsvTable table = read_csv(rc.data);
    EncodeResult enc = encode_with(loaded.reference, feature_rows(table, loaded.reference));

    ImportanceVector imp = feature_importance(loaded.model, enc.X);
    std::vector<std::size_t> order(imp.raw.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return imp.raw[a] > imp.raw[b]; });

    std::ostringstream csv;
    csv << "feature_name,importance\n";
    for (std::size_t j : order)
        csv << loaded.reference.feature_names[j] << "," << g17(imp.raw[j]) << "\n";
    if (!rc.out.empty())
        write_text(rc.out, csv.str());
    else
        std::cout << csv.str();

    if (!rc.chart_out.empty()) {
        std::ostringstream chart;
        chart << "feature_name,normalized_importance\n";
        for (std::size_t j : order)
            chart << loaded.reference.feature_names[j] << "," << g17(imp.normalized[j]) << "\n";
        write_text(rc.chart_out, chart.str());
    }
    if (!rc.out.empty()) std::cout << imp.raw.size() << " feature scores -> " << rc.out << "\n";
    return kExitOk;
}

int cmd_gradcheck(const RunConfig& rc) {
    const auto results = search_grid_gradcheck(rc.ncart.seed);
    bool all_ok = true;
    for (const CornerCheck& c : results) {
        std::printf("blocks=%d trees=%-2d sel-dim=%-2d %-9s  rel-err %.3e  %s\n",
                    c.config.blocks, c.config.trees, c.config.sel_dim,
                    to_string(c.config.sparse_fn.kind), c.report.max_rel_err,
                    c.report.ok ? "ok" : "FAIL");
        all_ok = all_ok && c.report.ok;
    }
    std::printf("%zu corners checked: %s\n", results.size(), all_ok ? "all ok" : "FAILURES");
    return all_ok ? kExitOk : kExitRuntime;
}

int cmd_odt_approx(const RunConfig& rc) {
    if (rc.tree.empty()) throw UsageError("--tree (description file) is required");
    std::ifstream in(rc.tree);
    if (!in) throw std::runtime_error("cannot open tree file: " + rc.tree);
    std::ostringstream buf;
    buf << in.rdbuf();

    AxisTree tree = parse_tree(buf.str());
    GridSpec grid = refine(tree);
    if (grid.dims.size() != 2)
        throw std::runtime_error("odt-approx needs a tree over exactly 2 axes, got " +
                                 std::to_string(grid.dims.size()));
    OdtFit fit = fit_two_odts(grid);

    std::ostringstream out;
    out << "a:";
    for (double v : fit.leaves.a) out << " " << g17(v);
    out << "\nb:";
    for (double v : fit.leaves.b) out << " " << g17(v);
    out << "\nresidual: " << g17(fit.residual) << "\nsweeps: " << fit.sweeps << "\ncells:\n";
    for (std::size_t r = 0; r < grid.dims[0]; ++r) {
        for (std::size_t c = 0; c < grid.dims[1]; ++c)
            out << (c ? "\t" : "") << grid.values[r * grid.dims[1] + c];
        out << "\n";
    }
    std::cout << out.str();
    if (!rc.out.empty()) write_text(rc.out, out.str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NCART: residual networks of differentiable oblivious decision trees"};
    app.require_subcommand(1);

    RawOptions raw;
    auto* train_cmd = app.add_subcommand("train", "fit one model on a CSV");
    add_data_options(train_cmd, raw);
    add_model_options(train_cmd, raw);
    train_cmd->add_option("--out", raw.out, "model file to write");
    train_cmd->add_option("--report", raw.report, "JSON training report");

    auto* cv_cmd = app.add_subcommand("cv", "k-fold cross-validation");
    add_data_options(cv_cmd, raw);
    add_model_options(cv_cmd, raw);
    cv_cmd->add_option("--folds", raw.folds, "number of folds");
    cv_cmd->add_option("--report", raw.report, "per-fold metric CSV");

    auto* tune_cmd = app.add_subcommand("tune", "seeded random hyperparameter search");
    add_data_options(tune_cmd, raw);
    add_model_options(tune_cmd, raw);
    tune_cmd->add_option("--folds", raw.folds, "folds per trial");
    tune_cmd->add_option("--trials", raw.trials, "search trials");
    tune_cmd->add_option("--out", raw.out, "best config file to write");
    tune_cmd->add_option("--report", raw.report, "JSON search report");

    auto* predict_cmd = app.add_subcommand("predict", "predict with a saved model");
    predict_cmd->add_option("--model", raw.model, "model file");
    predict_cmd->add_option("--data", raw.data, "feature CSV");
    predict_cmd->add_option("--out", raw.out, "predictions CSV");
    predict_cmd->add_option("--config", raw.config_path, "key=value config file");

    auto* importance_cmd = app.add_subcommand("importance", "Gini feature importance");
    importance_cmd->add_option("--model", raw.model, "model file");
    importance_cmd->add_option("--data", raw.data, "feature CSV");
    importance_cmd->add_option("--out", raw.out, "importance CSV (raw scores)");
    importance_cmd->add_option("--chart-out", raw.chart_out, "normalized scores CSV");
    importance_cmd->add_option("--config", raw.config_path, "key=value config file");

    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck_cmd->add_option("--seed", raw.seed, "RNG seed");

    auto* odt_cmd = app.add_subcommand("odt-approx", "fit two oblivious trees to a tree");
    odt_cmd->add_option("--tree", raw.tree, "tree description file");
    odt_cmd->add_option("--out", raw.out, "also write the report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        const RunConfig rc = resolve(raw);
        if (train_cmd->parsed()) return cmd_train(rc);
        if (cv_cmd->parsed()) return cmd_cv(rc);
        if (tune_cmd->parsed()) return cmd_tune(rc);
        if (predict_cmd->parsed()) return cmd_predict(rc);
        if (importance_cmd->parsed()) return cmd_importance(rc);
        if (gradcheck_cmd->parsed()) return cmd_gradcheck(rc);
        if (odt_cmd->parsed()) return cmd_odt_approx(rc);
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

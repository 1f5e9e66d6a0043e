#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ncart/data.hpp"
#include "ncart/model.hpp"

namespace ncart {

// Model files are a single self-describing JSON document. nlohmann::json
// emits doubles in shortest-round-trip form, so a save/load cycle reproduces
// every parameter bit for bit.

inline constexpr int kModelFormatVersion = 1;

namespace ser_detail {

using nlohmann::json;

inline json to_json(const Matrix& m) {
    return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

inline Matrix matrix_from_json(const json& j, const std::string& what) {
    if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
        throw std::runtime_error("model file: missing matrix fields in " + what);
    Matrix m;
    m.rows = j.at("rows").get<std::size_t>();
    m.cols = j.at("cols").get<std::size_t>();
    m.data = j.at("data").get<std::vector<double>>();
    if (m.data.size() != m.rows * m.cols)
        throw std::runtime_error("model file: matrix size mismatch in " + what);
    return m;
}

inline const json& field(const json& j, const char* name, const std::string& where) {
    auto it = j.find(name);
    if (it == j.end())
        throw std::runtime_error("model file: missing section '" + std::string(name) + "' in " +
                                 where);
    return *it;
}

inline json config_to_json(const NcartConfig& c) {
    return json{{"blocks", c.blocks},
                {"trees", c.trees},
                {"sel_dim", c.sel_dim},
                {"hidden", c.hidden},
                {"sparse_fn", to_string(c.sparse_fn.kind)},
                {"alpha", c.sparse_fn.alpha},
                {"lr", c.lr},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"seed", c.seed},
                {"trials", c.trials},
                {"early_stop", c.early_stop},
                {"patience", c.patience}};
}

inline NcartConfig config_from_json(const json& j) {
    NcartConfig c;
    c.blocks = field(j, "blocks", "config").get<int>();
    c.trees = field(j, "trees", "config").get<int>();
    c.sel_dim = field(j, "sel_dim", "config").get<int>();
    c.hidden = field(j, "hidden", "config").get<int>();
    const std::string kind = field(j, "sparse_fn", "config").get<std::string>();
    if (kind == "sparsemax")
        c.sparse_fn.kind = SparseKind::sparsemax;
    else if (kind == "entmax")
        c.sparse_fn.kind = SparseKind::entmax;
    else
        throw std::runtime_error("model file: unknown sparse function '" + kind + "'");
    c.sparse_fn.alpha = field(j, "alpha", "config").get<double>();
    c.lr = field(j, "lr", "config").get<double>();
    c.batch_size = field(j, "batch_size", "config").get<int>();
    c.epochs = field(j, "epochs", "config").get<int>();
    c.seed = field(j, "seed", "config").get<std::uint64_t>();
    c.trials = field(j, "trials", "config").get<int>();
    c.early_stop = field(j, "early_stop", "config").get<bool>();
    c.patience = field(j, "patience", "config").get<int>();
    return c;
}

inline Task task_from_string(const std::string& s) {
    if (s == "binclass") return Task::binclass;
    if (s == "multiclass") return Task::multiclass;
    if (s == "regression") return Task::regression;
    throw std::runtime_error("model file: unknown task '" + s + "'");
}

}  // namespace ser_detail

inline nlohmann::json model_to_json(const NcartModel& model, const Dataset& data) {
    using nlohmann::json;
    json j;
    j["format_version"] = kModelFormatVersion;
    j["config"] = ser_detail::config_to_json(model.config);
    j["task"] = to_string(model.task);
    j["n_features"] = model.n_features;
    j["n_outputs"] = model.n_outputs;
    j["seed"] = model.config.seed;

    json schema;
    schema["target"] = data.target_name;
    schema["feature_names"] = data.feature_names;
    schema["is_categorical"] = data.is_categorical;
    schema["categories"] = data.categories;
    schema["class_labels"] = data.class_labels;
    j["schema"] = schema;

    json blocks = json::array();
    for (const NcartBlock& b : model.blocks) {
        json jb;
        jb["has_selection"] = b.has_selection;
        jb["out_dim"] = b.out_dim;
        jb["bn"] = json{{"gamma", b.bn.gamma},
                        {"beta", b.bn.beta},
                        {"running_mean", b.bn.running_mean},
                        {"running_var", b.bn.running_var},
                        {"momentum", b.bn.momentum},
                        {"eps", b.bn.eps}};
        json trees = json::array();
        for (const TreeParams& t : b.trees)
            trees.push_back(json{{"s", t.s},
                                 {"W1", ser_detail::to_json(t.W1)},
                                 {"b1", t.b1},
                                 {"W2", ser_detail::to_json(t.W2)},
                                 {"b2", t.b2}});
        jb["trees"] = std::move(trees);
        if (b.has_selection) {
            json sels = json::array();
            for (const SelectionParams& s : b.selections)
                sels.push_back(ser_detail::to_json(s.A));
            jb["selections"] = std::move(sels);
        }
        jb["w"] = b.w;
        blocks.push_back(std::move(jb));
    }
    j["blocks"] = std::move(blocks);
    return j;
}

// Everything inference needs: the model plus the encoding dictionaries.
struct LoadedModel {
    NcartModel model;
    Dataset reference;  // schema + category dictionaries only; X/y stay empty
};

inline LoadedModel model_from_json(const nlohmann::json& j) {
    using ser_detail::field;
    if (field(j, "format_version", "document").get<int>() != kModelFormatVersion)
        throw std::runtime_error("model file: unsupported format_version");

    LoadedModel loaded;
    NcartModel& model = loaded.model;
    model.config = ser_detail::config_from_json(field(j, "config", "document"));
    model.task = ser_detail::task_from_string(field(j, "task", "document").get<std::string>());
    model.n_features = field(j, "n_features", "document").get<std::size_t>();
    model.n_outputs = field(j, "n_outputs", "document").get<std::size_t>();

    const auto& schema = field(j, "schema", "document");
    Dataset& ref = loaded.reference;
    ref.task = model.task;
    ref.target_name = field(schema, "target", "schema").get<std::string>();
    ref.feature_names = field(schema, "feature_names", "schema").get<std::vector<std::string>>();
    ref.is_categorical = field(schema, "is_categorical", "schema").get<std::vector<bool>>();
    ref.categories =
        field(schema, "categories", "schema").get<std::vector<std::vector<std::string>>>();
    ref.class_labels = field(schema, "class_labels", "schema").get<std::vector<std::string>>();
    ref.n_classes = ref.class_labels.size();
    ref.X = Matrix(0, ref.feature_names.size());

    for (const auto& jb : field(j, "blocks", "document")) {
        NcartBlock b;
        b.has_selection = field(jb, "has_selection", "block").get<bool>();
        b.out_dim = field(jb, "out_dim", "block").get<std::size_t>();
        b.sparse_fn = model.config.sparse_fn;
        const auto& bn = field(jb, "bn", "block");
        b.bn.gamma = field(bn, "gamma", "bn").get<std::vector<double>>();
        b.bn.beta = field(bn, "beta", "bn").get<std::vector<double>>();
        b.bn.running_mean = field(bn, "running_mean", "bn").get<std::vector<double>>();
        b.bn.running_var = field(bn, "running_var", "bn").get<std::vector<double>>();
        b.bn.momentum = field(bn, "momentum", "bn").get<double>();
        b.bn.eps = field(bn, "eps", "bn").get<double>();
        for (const auto& jt : field(jb, "trees", "block")) {
            TreeParams t;
            t.s = field(jt, "s", "tree").get<std::vector<double>>();
            t.W1 = ser_detail::matrix_from_json(field(jt, "W1", "tree"), "W1");
            t.b1 = field(jt, "b1", "tree").get<std::vector<double>>();
            t.W2 = ser_detail::matrix_from_json(field(jt, "W2", "tree"), "W2");
            t.b2 = field(jt, "b2", "tree").get<std::vector<double>>();
            b.trees.push_back(std::move(t));
        }
        if (b.has_selection)
            for (const auto& js : field(jb, "selections", "block"))
                b.selections.push_back({ser_detail::matrix_from_json(js, "selection")});
        b.w = field(jb, "w", "block").get<std::vector<double>>();
        model.blocks.push_back(std::move(b));
    }
    if (model.blocks.empty()) throw std::runtime_error("model file: no blocks");
    return loaded;
}

inline void save_model(const std::string& path, const NcartModel& model, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out << model_to_json(model, data).dump(1) << "\n";
    if (!out) throw std::runtime_error("failed writing model file: " + path);
}

inline LoadedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("model file: invalid JSON in " + path + ": " + e.what());
    }
    return model_from_json(j);
}

}  // namespace ncart

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "cardio/error.hpp"
#include "cardio/pipeline.hpp"

namespace cardio::pipeline {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw InvalidParameter("config: '" + where + "' must be an object");
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key())) throw InvalidParameter("config: unknown key '" + where + item.key() + "'");
    }
}

template <class T>
void read(const json& obj, const std::string& key, T& out) {
    if (!obj.contains(key)) return;
    try {
        const json& v = obj.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw InvalidParameter("");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw InvalidParameter("");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw InvalidParameter("");
        }
        out = v.get<T>();
    } catch (const std::exception&) {
        throw InvalidParameter("config: bad value for '" + key + "'");
    }
}

void read_stage(const json& obj, const std::string& key, TrainStage& stage) {
    if (!obj.contains(key)) return;
    const json& s = obj.at(key);
    check_keys(s, key + ".", {"epochs", "batch_size", "learning_rate"});
    read(s, "epochs", stage.epochs);
    read(s, "batch_size", stage.batch_size);
    read(s, "learning_rate", stage.learning_rate);
}

json stage_json(const TrainStage& s) {
    return {{"epochs", s.epochs}, {"batch_size", s.batch_size}, {"learning_rate", s.learning_rate}};
}

}  // namespace

void PipelineConfig::validate() const {
    auto fail = [](const std::string& what) { throw InvalidParameter("config: " + what); };
    if (window < 3 || window % 2 == 0) fail("window must be odd and >= 3");
    if (samples_per_subject < 2) fail("samples_per_subject must be >= 2");
    if (!(threshold > 0.0 && threshold < 1.0)) fail("threshold must lie in (0, 1)");
    if (!(segment_fraction >= 0.0 && segment_fraction <= 1.0)) fail("segment_fraction must lie in [0, 1]");
    if (folds < 2) fail("folds must be >= 2");
    if (lstm_hidden < 1 || lstm_layers < 1) fail("lstm_hidden and lstm_layers must be >= 1");
    if (!(lstm_dropout >= 0.0 && lstm_dropout < 1.0)) fail("lstm_dropout must lie in [0, 1)");
    if (lstm_max_samples < 0) fail("lstm_max_samples must be >= 0");
    if (sae_hidden.empty()) fail("sae_hidden needs at least one layer");
    for (int d : sae_hidden) {
        if (d < 1) fail("sae_hidden entries must be >= 1");
    }
    for (const TrainStage* s : {&lstm, &sae, &finetune}) {
        if (s->epochs < 0 || s->batch_size < 1 || !(s->learning_rate >= 0.0)) fail("bad training stage");
    }
    neural::RmsPropConfig{1e-3, rmsprop_rho, rmsprop_epsilon}.validate();
    flow.validate();
}

PipelineConfig config_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidParameter(std::string("config: ") + e.what());
    }
    PipelineConfig c;
    check_keys(doc, "",
               {"window", "mode", "samples_per_subject", "threshold", "segment_fraction", "folds", "flow", "matcher",
                "lstm", "sae", "finetune", "rmsprop"});
    read(doc, "window", c.window);
    if (doc.contains("mode")) {
        if (!doc["mode"].is_string()) throw InvalidParameter("config: mode must be a string");
        c.mode = features::parse_mode(doc["mode"].get<std::string>());
    }
    read(doc, "samples_per_subject", c.samples_per_subject);
    read(doc, "threshold", c.threshold);
    read(doc, "segment_fraction", c.segment_fraction);
    read(doc, "folds", c.folds);
    if (doc.contains("flow")) {
        const json& f = doc["flow"];
        check_keys(f, "flow.",
                   {"alpha", "beta", "delta", "gamma", "sigma", "epsilon", "levels", "min_level_size", "outer_iters",
                    "solver_iters", "omega"});
        read(f, "alpha", c.flow.alpha);
        read(f, "beta", c.flow.beta);
        read(f, "delta", c.flow.delta);
        read(f, "gamma", c.flow.gamma);
        read(f, "sigma", c.flow.sigma);
        read(f, "epsilon", c.flow.epsilon);
        read(f, "levels", c.flow.levels);
        read(f, "min_level_size", c.flow.min_level_size);
        read(f, "outer_iters", c.flow.outer_iters);
        read(f, "solver_iters", c.flow.solver_iters);
        read(f, "omega", c.flow.omega);
    }
    if (doc.contains("matcher")) {
        const json& m = doc["matcher"];
        check_keys(m, "matcher.", {"patch_size", "search_radius", "nu", "threshold", "reciprocal_tolerance"});
        read(m, "patch_size", c.matcher.patch_size);
        read(m, "search_radius", c.matcher.search_radius);
        read(m, "nu", c.matcher.nu);
        read(m, "threshold", c.matcher.threshold);
        read(m, "reciprocal_tolerance", c.matcher.reciprocal_tolerance);
    }
    if (doc.contains("lstm")) {
        const json& l = doc["lstm"];
        check_keys(l, "lstm.",
                   {"hidden", "layers", "dropout", "max_samples", "epochs", "batch_size", "learning_rate"});
        read(l, "hidden", c.lstm_hidden);
        read(l, "layers", c.lstm_layers);
        read(l, "dropout", c.lstm_dropout);
        read(l, "max_samples", c.lstm_max_samples);
        read(l, "epochs", c.lstm.epochs);
        read(l, "batch_size", c.lstm.batch_size);
        read(l, "learning_rate", c.lstm.learning_rate);
    }
    if (doc.contains("sae")) {
        const json& s = doc["sae"];
        check_keys(s, "sae.", {"hidden", "tied", "epochs", "batch_size", "learning_rate"});
        read(s, "hidden", c.sae_hidden);
        read(s, "tied", c.sae_tied);
        read(s, "epochs", c.sae.epochs);
        read(s, "batch_size", c.sae.batch_size);
        read(s, "learning_rate", c.sae.learning_rate);
    }
    read_stage(doc, "finetune", c.finetune);
    if (doc.contains("rmsprop")) {
        const json& r = doc["rmsprop"];
        check_keys(r, "rmsprop.", {"rho", "epsilon"});
        read(r, "rho", c.rmsprop_rho);
        read(r, "epsilon", c.rmsprop_epsilon);
    }
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidParameter("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

std::string config_to_json(const PipelineConfig& c) {
    const auto& f = c.flow;
    const auto& m = c.matcher;
    json doc = {
        {"window", c.window},
        {"mode", std::string(features::mode_name(c.mode))},
        {"samples_per_subject", c.samples_per_subject},
        {"threshold", c.threshold},
        {"segment_fraction", c.segment_fraction},
        {"folds", c.folds},
        {"flow",
         {{"alpha", f.alpha},
          {"beta", f.beta},
          {"delta", f.delta},
          {"gamma", f.gamma},
          {"sigma", f.sigma},
          {"epsilon", f.epsilon},
          {"levels", f.levels},
          {"min_level_size", f.min_level_size},
          {"outer_iters", f.outer_iters},
          {"solver_iters", f.solver_iters},
          {"omega", f.omega}}},
        {"matcher",
         {{"patch_size", m.patch_size},
          {"search_radius", m.search_radius},
          {"nu", m.nu},
          {"threshold", m.threshold},
          {"reciprocal_tolerance", m.reciprocal_tolerance}}},
        {"lstm",
         {{"hidden", c.lstm_hidden},
          {"layers", c.lstm_layers},
          {"dropout", c.lstm_dropout},
          {"max_samples", c.lstm_max_samples},
          {"epochs", c.lstm.epochs},
          {"batch_size", c.lstm.batch_size},
          {"learning_rate", c.lstm.learning_rate}}},
        {"sae",
         {{"hidden", c.sae_hidden},
          {"tied", c.sae_tied},
          {"epochs", c.sae.epochs},
          {"batch_size", c.sae.batch_size},
          {"learning_rate", c.sae.learning_rate}}},
        {"finetune", stage_json(c.finetune)},
        {"rmsprop", {{"rho", c.rmsprop_rho}, {"epsilon", c.rmsprop_epsilon}}},
    };
    return doc.dump(2);
}

}  // namespace cardio::pipeline

// Command-line front end. Reports are JSON on stdout or in the --out file.
// Exit codes: 0 success, 2 invalid input, 3 numerical divergence.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cardio/error.hpp"
#include "cardio/localization.hpp"
#include "cardio/pipeline.hpp"
#include "cardio/synth.hpp"
#include "cardio/varflow.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cardio;
namespace pl = cardio::pipeline;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitDivergence = 3;

struct Globals {
    std::string config_path;
    std::uint64_t seed = 1;
    std::string mode;
    std::string out;
};

pl::PipelineConfig load(const Globals& g) {
    pl::PipelineConfig c = g.config_path.empty() ? pl::PipelineConfig{} : pl::load_config(g.config_path);
    if (!g.mode.empty()) c.mode = features::parse_mode(g.mode);
    c.validate();
    return c;
}

void emit(const Globals& g, const std::string& text) {
    if (g.out.empty()) {
        std::cout << text << '\n';
        return;
    }
    std::ofstream out(g.out, std::ios::binary);
    if (!out) throw InvalidParameter("cannot write " + g.out);
    out << text << '\n';
}

void emit(const Globals& g, const json& doc) { emit(g, doc.dump(2)); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json box_json(const localization::RoiBox& b) {
    return {{"x", b.x}, {"y", b.y}, {"width", b.width}, {"height", b.height}};
}

std::vector<pl::PreparedSubject> prepare_all(const std::vector<pl::Subject>& subjects, const pl::PipelineConfig& c) {
    std::vector<pl::PreparedSubject> out;
    for (const auto& s : subjects) {
        std::cerr << "preparing " << s.id << '\n';
        out.push_back(pl::prepare(s, c));
    }
    return out;
}

json train_report_json(const pl::TrainReport& r) {
    return {{"samples", r.samples},
            {"positives", r.positives},
            {"lstm_loss", r.lstm_loss},
            {"sae_loss", r.sae_loss},
            {"finetune_loss", r.finetune_loss}};
}

// --folds k runs k-fold cross-validation; --train-fraction f runs one
// seeded hold-out split.
std::vector<pl::Fold> make_folds(std::size_t n, int folds, double train_fraction, std::uint64_t seed) {
    if (train_fraction > 0.0) return {pl::holdout_split(n, train_fraction, seed)};
    return pl::kfold_split(n, folds, seed);
}

int run_synth(const Globals& g, const fs::path& out_dir, int count, const synth::PhantomParams& base) {
    base.validate();
    if (count < 1) throw InvalidParameter("--count must be >= 1");
    fs::create_directories(out_dir);
    const auto params = synth::cohort(base, count, g.seed);
    json subjects = json::array();
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "subject_%03d", i);
        const auto ds = synth::generate(params[i]);
        synth::write_dataset(ds, out_dir / name);
        subjects.push_back({{"id", name},
                            {"slice_level", ds.slice_level},
                            {"center", {params[i].cx(), params[i].cy()}},
                            {"infarct_start", params[i].infarct_start},
                            {"infarct_extent", params[i].infarct_extent},
                            {"infarct_fraction", synth::mask_fraction(ds)}});
    }
    emit(g, json{{"root", out_dir.string()}, {"subjects", subjects}});
    return 0;
}

int run_localize(const Globals& g, const fs::path& subject_dir) {
    const auto s = pl::load_subject(subject_dir);
    const auto d = localization::localize_lv_detail(normalize_min_max(s.sequence));
    emit(g, json{{"subject", s.id},
                 {"box", box_json(d.box)},
                 {"centroid", {d.centroid_x, d.centroid_y}},
                 {"threshold", d.threshold},
                 {"component_pixels", d.component_pixels}});
    return 0;
}

int run_flow(const Globals& g, const fs::path& subject_dir, const fs::path& flow_dir, bool crop) {
    const auto c = load(g);
    const auto s = pl::load_subject(subject_dir);
    ImageSequence seq = normalize_min_max(s.sequence);
    json report{{"subject", s.id}};
    if (crop) {
        const auto box = localization::localize_lv(seq);
        seq = localization::crop_sequence(seq, box);
        report["box"] = box_json(box);
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto flows = varflow::flow_sequence(seq, c.flow, c.matcher);
    report["seconds"] = seconds_since(t0);
    fs::create_directories(flow_dir);
    json files = json::array();
    double density = 0.0;
    for (std::size_t j = 0; j < flows.size(); ++j) {
        char name[32];
        std::snprintf(name, sizeof name, "flow_%02zu.flo", j);
        write_flo(flows[j], flow_dir / name);
        files.push_back(name);
        density += varflow::flow_density(flows[j]);
    }
    report["pairs"] = flows.size();
    report["files"] = files;
    report["density"] = flows.empty() ? 0.0 : density / static_cast<double>(flows.size());
    emit(g, report);
    return 0;
}

int run_train(const Globals& g, const fs::path& data, const fs::path& model_path) {
    const auto c = load(g);
    const auto prepared = prepare_all(pl::load_dataset(data), c);
    pl::TrainReport rep;
    const auto t0 = std::chrono::steady_clock::now();
    const auto model = pl::train(prepared, c, g.seed, &rep);
    pl::save_model(model, model_path);
    json doc = train_report_json(rep);
    doc["subjects"] = prepared.size();
    doc["model"] = model_path.string();
    doc["seconds"] = seconds_since(t0);
    emit(g, doc);
    return 0;
}

int run_infer(const Globals& g, const fs::path& model_path, const fs::path& subject_dir, const fs::path& mask_out,
              const fs::path& scores_out) {
    const auto model = pl::load_model(model_path);
    const auto s = pl::load_subject(subject_dir);
    const auto p = pl::prepare(s, model.config);
    const auto inf = pl::infer(model, p.sequence, p.flows, &p.region);
    if (!mask_out.empty()) write_mask(inf.labels, mask_out);
    if (!scores_out.empty()) {
        std::ofstream csv(scores_out);
        if (!csv) throw InvalidParameter("cannot write " + scores_out.string());
        csv.precision(17);
        csv << "x,y,score\n";
        for (int y = 0; y < inf.labels.height; ++y) {
            for (int x = 0; x < inf.labels.width; ++x) {
                if (inf.region.at(x, y)) csv << x << ',' << y << ',' << inf.scores[y * inf.labels.width + x] << '\n';
            }
        }
    }
    emit(g, json{{"subject", s.id},
                 {"box", box_json(p.box)},
                 {"region_pixels", inf.region.count()},
                 {"infarct_pixels", inf.labels.count()}});
    return 0;
}

int run_eval(const Globals& g, const fs::path& data, const fs::path& model_path, double train_fraction,
             const fs::path& roc_csv, const fs::path& pr_csv) {
    const auto subjects = pl::load_dataset(data);
    pl::FoldOutcome outcome;
    pl::PipelineConfig c;
    if (!model_path.empty()) {
        if (train_fraction > 0.0) throw InvalidParameter("--model and --train-fraction are exclusive");
        const auto model = pl::load_model(model_path);
        c = model.config;
        outcome = pl::evaluate_model(model, prepare_all(subjects, c));
    } else {
        if (!(train_fraction > 0.0)) throw InvalidParameter("eval needs --model or --train-fraction");
        c = load(g);
        const auto prepared = prepare_all(subjects, c);
        outcome = pl::cross_validate(prepared, {pl::holdout_split(prepared.size(), train_fraction, g.seed)}, c, g.seed);
    }
    if (!roc_csv.empty() || !pr_csv.empty()) {
        if (roc_csv.empty() || pr_csv.empty()) throw InvalidParameter("--roc and --pr go together");
        pl::write_curves_csv(outcome.metrics, roc_csv, pr_csv);
    }
    emit(g, pl::report_to_json(outcome.metrics));
    return 0;
}

int run_ablate(const Globals& g, const fs::path& data, int folds, double train_fraction) {
    const auto c = load(g);
    const auto prepared = prepare_all(pl::load_dataset(data), c);
    const auto results = pl::ablate(prepared, make_folds(prepared.size(), folds, train_fraction, g.seed), c, g.seed);
    json doc = json::array();
    for (const auto& r : results) {
        doc.push_back({{"mode", std::string(features::mode_name(r.mode))},
                       {"metrics", json::parse(pl::report_to_json(r.metrics))}});
    }
    emit(g, doc);
    return 0;
}

int run_sweep(const Globals& g, const fs::path& data, const std::vector<int>& sizes, int folds, double train_fraction,
              const fs::path& csv_path) {
    for (int s : sizes) {
        if (s < 3 || s % 2 == 0) throw InvalidParameter("patch size " + std::to_string(s) + " must be odd and >= 3");
    }
    const auto c = load(g);
    const auto prepared = prepare_all(pl::load_dataset(data), c);
    const auto entries =
        pl::patch_sweep(prepared, make_folds(prepared.size(), folds, train_fraction, g.seed), sizes, c, g.seed);
    if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        if (!csv) throw InvalidParameter("cannot write " + csv_path.string());
        csv << pl::sweep_to_csv(entries);
    }
    json doc = json::array();
    for (const auto& e : entries) doc.push_back({{"size", e.size}, {"accuracy", e.accuracy}, {"seconds", e.seconds}});
    emit(g, doc);
    return 0;
}

int run_benchmark_flow(const Globals& g, const fs::path& subject_dir) {
    const auto c = load(g);
    const auto s = pl::load_subject(subject_dir);
    if (!s.gt_flows) throw InvalidParameter(subject_dir.string() + ": no ground-truth flows under gt/");
    if (s.gt_flows->size() + 1 != s.sequence.frames.size()) {
        throw InvalidParameter(subject_dir.string() + ": need one ground-truth flow per frame pair");
    }
    const ImageSequence seq = normalize_min_max(s.sequence);
    const auto t0 = std::chrono::steady_clock::now();
    const auto flows = varflow::flow_sequence(seq, c.flow, c.matcher);
    const double secs = seconds_since(t0);
    const PixelMask* region = s.myocardium ? &*s.myocardium : nullptr;
    double sum = 0.0, sum_sq = 0.0, epe = 0.0, density = 0.0;
    std::size_t pixels = 0;
    for (std::size_t j = 0; j < flows.size(); ++j) {
        const auto e = varflow::average_angular_error(flows[j], (*s.gt_flows)[j], region);
        sum += e.mean_deg * e.pixels;
        sum_sq += (e.std_deg * e.std_deg + e.mean_deg * e.mean_deg) * e.pixels;
        pixels += e.pixels;
        epe += varflow::endpoint_error(flows[j], (*s.gt_flows)[j], region);
        density += varflow::flow_density(flows[j], region);
    }
    if (pixels == 0) throw CannotAggregate("no valid pixels to compare");
    const double mean = sum / pixels;
    varflow::AngularError pooled;
    pooled.mean_deg = mean;
    pooled.std_deg = std::sqrt(std::max(0.0, sum_sq / pixels - mean * mean));
    pooled.pixels = pixels;
    const double pairs = static_cast<double>(flows.size());
    emit(g, json{{"subject", s.id},
                 {"pairs", flows.size()},
                 {"aae_deg", pooled.mean_deg},
                 {"aae_std_deg", pooled.std_deg},
                 {"aae", varflow::format_angular_error(pooled)},
                 {"endpoint_error", epe / pairs},
                 {"density", density / pairs},
                 {"region", region ? "myocardium" : "frame"},
                 {"seconds", secs}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Myocardial infarction localization from cine MR motion"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config_path, "JSON pipeline configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--mode", g.mode, "Feature mode")->check(CLI::IsMember({"local", "global", "combined"}));
    app.add_option("--out", g.out, "Write the JSON report here instead of stdout");

    std::function<int()> action;

    auto* synth_cmd = app.add_subcommand("synth", "Write a cohort of phantom subjects");
    std::string synth_dir;
    int synth_count = 12;
    synth::PhantomParams phantom;
    synth_cmd->add_option("--dir", synth_dir, "Output dataset root")->required();
    synth_cmd->add_option("--count", synth_count, "Number of subjects");
    synth_cmd->add_option("--size", phantom.image_size, "Image side in pixels");
    synth_cmd->add_option("--frames", phantom.frames, "Frames per sequence");
    synth_cmd->add_option("--infarct-motion-scale", phantom.infarct_motion_scale, "Motion scale inside the infarct");
    synth_cmd->add_option("--noise", phantom.noise_sigma, "Gaussian noise sigma");
    synth_cmd->callback([&] { action = [&] { return run_synth(g, synth_dir, synth_count, phantom); }; });

    auto* localize_cmd = app.add_subcommand("localize", "Locate the left-ventricle box of one subject");
    std::string subject_dir;
    localize_cmd->add_option("--subject", subject_dir, "Subject directory")->required();
    localize_cmd->callback([&] { action = [&] { return run_localize(g, subject_dir); }; });

    auto* flow_cmd = app.add_subcommand("flow", "Compute the flow of every frame pair");
    std::string flow_dir;
    bool flow_crop = false;
    flow_cmd->add_option("--subject", subject_dir, "Subject directory")->required();
    flow_cmd->add_option("--flow-dir", flow_dir, "Directory for the .flo files")->required();
    flow_cmd->add_flag("--crop", flow_crop, "Localize and crop to 64x64 first");
    flow_cmd->callback([&] { action = [&] { return run_flow(g, subject_dir, flow_dir, flow_crop); }; });

    auto* train_cmd = app.add_subcommand("train", "Train a model on every subject of a dataset");
    std::string data_dir, model_path;
    train_cmd->add_option("--data", data_dir, "Dataset root")->required();
    train_cmd->add_option("--model", model_path, "Output model file")->required();
    train_cmd->callback([&] { action = [&] { return run_train(g, data_dir, model_path); }; });

    auto* infer_cmd = app.add_subcommand("infer", "Label the pixels of one subject");
    std::string mask_out, scores_out;
    infer_cmd->add_option("--model", model_path, "Model file")->required();
    infer_cmd->add_option("--subject", subject_dir, "Subject directory")->required();
    infer_cmd->add_option("--mask", mask_out, "Predicted mask PGM (crop coordinates)");
    infer_cmd->add_option("--scores", scores_out, "Per-pixel scores CSV");
    infer_cmd->callback([&] { action = [&] { return run_infer(g, model_path, subject_dir, mask_out, scores_out); }; });

    auto* eval_cmd = app.add_subcommand("eval", "Pixel and segment metrics");
    double train_fraction = 0.0;
    std::string roc_csv, pr_csv;
    eval_cmd->add_option("--data", data_dir, "Dataset root")->required();
    eval_cmd->add_option("--model", model_path, "Evaluate this model on every subject");
    eval_cmd->add_option("--train-fraction", train_fraction, "Train on a seeded split and test on the rest");
    eval_cmd->add_option("--roc", roc_csv, "ROC curve CSV");
    eval_cmd->add_option("--pr", pr_csv, "PR curve CSV");
    eval_cmd->callback(
        [&] { action = [&] { return run_eval(g, data_dir, model_path, train_fraction, roc_csv, pr_csv); }; });

    auto* ablate_cmd = app.add_subcommand("ablate", "Compare local, global and combined features");
    int folds = 10;
    ablate_cmd->add_option("--data", data_dir, "Dataset root")->required();
    ablate_cmd->add_option("--folds", folds, "Cross-validation folds");
    ablate_cmd->add_option("--train-fraction", train_fraction, "Use one seeded split instead of folds");
    ablate_cmd->callback([&] { action = [&] { return run_ablate(g, data_dir, folds, train_fraction); }; });

    auto* sweep_cmd = app.add_subcommand("patch-sweep", "Accuracy and time per patch size");
    std::vector<int> sizes{3, 5, 7, 9, 11, 13, 15, 17};
    std::string sweep_csv;
    sweep_cmd->add_option("--data", data_dir, "Dataset root")->required();
    sweep_cmd->add_option("--sizes", sizes, "Odd patch sizes")->delimiter(',');
    sweep_cmd->add_option("--folds", folds, "Cross-validation folds");
    sweep_cmd->add_option("--train-fraction", train_fraction, "Use one seeded split instead of folds");
    sweep_cmd->add_option("--csv", sweep_csv, "Write size,accuracy,seconds here");
    sweep_cmd->callback(
        [&] { action = [&] { return run_sweep(g, data_dir, sizes, folds, train_fraction, sweep_csv); }; });

    auto* bench_cmd = app.add_subcommand("benchmark-flow", "Angular error and density against ground-truth flows");
    bench_cmd->add_option("--subject", subject_dir, "Subject directory with gt/")->required();
    bench_cmd->callback([&] { action = [&] { return run_benchmark_flow(g, subject_dir); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInvalid;
    }

    try {
        return action();
    } catch (const NumericalDivergence& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

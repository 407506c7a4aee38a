#pragma once

// End-to-end pixel classification: dataset ingestion, localization and
// cropping, flow, feature assembly, training, inference, metrics, AHA
// segment scoring and model persistence.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cardio/features.hpp"
#include "cardio/image.hpp"
#include "cardio/localization.hpp"
#include "cardio/matching.hpp"
#include "cardio/neural.hpp"
#include "cardio/varflow.hpp"

namespace cardio::pipeline {

// ---------------------------------------------------------------- config

struct TrainStage {
    int epochs = 0;
    int batch_size = 32;
    double learning_rate = 1e-3;
};

struct PipelineConfig {
    int window = 11;
    features::FeatureMode mode = features::FeatureMode::combined;
    int samples_per_subject = 2000;  // balanced cap
    double threshold = 0.5;
    double segment_fraction = 0.05;
    int folds = 10;

    varflow::FlowParams flow;
    matching::MatcherConfig matcher;

    int lstm_hidden = 128;
    int lstm_layers = 4;
    double lstm_dropout = 0.5;
    int lstm_max_samples = 512;  // LSTM pre-training subset
    TrainStage lstm{4, 16, 2e-3};

    std::vector<int> sae_hidden{1024, 256, 64};
    bool sae_tied = false;
    TrainStage sae{4, 32, 1e-3};
    TrainStage finetune{20, 32, 1e-3};
    double rmsprop_rho = 0.9;
    double rmsprop_epsilon = 1e-8;

    // Throws InvalidParameter.
    void validate() const;
};

// Missing keys keep their defaults; unknown keys and bad types throw
// InvalidParameter.
PipelineConfig config_from_json(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const PipelineConfig& config);

// ---------------------------------------------------------------- data

struct Subject {
    std::string id;
    ImageSequence sequence;
    PixelMask mask;                       // infarct labels, full frame
    std::optional<PixelMask> myocardium;  // evaluation region, full frame
    std::string slice_level = "mid";
    double center_x = 0.0;                // AHA centre, full-frame pixels
    double center_y = 0.0;
    double reference_angle = 0.0;
    double pixel_spacing_mm = 1.0;
    std::optional<FlowSequence> gt_flows;
};

// Reads frames/frame_%02d.pgm, mask.pgm, optional myocardium.pgm, meta.json
// and optional gt/flow_%02d.flo.
Subject load_subject(const std::filesystem::path& dir);
// Every subdirectory holding a meta.json, in lexicographic order.
std::vector<Subject> load_dataset(const std::filesystem::path& root);

// Subject after normalization, localization and cropping, with its flows.
struct PreparedSubject {
    std::string id;
    localization::RoiBox box;
    ImageSequence sequence;  // 64x64
    FlowSequence flows;
    PixelMask mask;
    PixelMask region;        // evaluation pixels
    std::string slice_level;
    double center_x = 0.0;   // crop coordinates
    double center_y = 0.0;
    double reference_angle = 0.0;
};

PreparedSubject prepare(const Subject& subject, const PipelineConfig& config);

// ---------------------------------------------------------------- model

inline constexpr int kModelVersion = 1;

struct Model {
    int version = kModelVersion;
    PipelineConfig config;
    neural::LstmStack lstm;  // empty for global-only models
    neural::Autoencoder ae;
    neural::SoftmaxHead head;
    features::NormStats norm;
};

struct TrainReport {
    std::size_t samples = 0;
    std::size_t positives = 0;
    std::vector<double> lstm_loss;
    std::vector<std::vector<double>> sae_loss;
    std::vector<double> finetune_loss;
};

// Throws DegenerateLabels when the sampled pixels miss a class.
Model train(const std::vector<PreparedSubject>& subjects, const PipelineConfig& config, std::uint64_t seed,
            TrainReport* report = nullptr);

struct Inference {
    PixelMask labels;
    std::vector<double> scores;  // class-1 probability, 0 outside the region
    PixelMask region;
};

Inference infer(const Model& model, const ImageSequence& sequence, const FlowSequence& flows,
                const PixelMask* region = nullptr);
// Computes the flows with the model's flow settings first.
Inference infer(const Model& model, const ImageSequence& sequence, const PixelMask* region = nullptr);

// ---------------------------------------------------------------- metrics

struct CurvePoint {
    double x = 0.0;
    double y = 0.0;
};

struct SegmentScore {
    int slices = 0;
    int segments = 0;
    int correct = 0;
    double accuracy() const { return segments ? static_cast<double>(correct) / segments : 0.0; }
};

struct MetricsReport {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0.0;
    double sensitivity = 0.0;  // NaN when the truth has no positives
    double specificity = 0.0;  // NaN when the truth has no negatives
    bool sensitivity_defined = true;
    bool specificity_defined = true;
    std::vector<CurvePoint> roc;  // (fpr, tpr)
    double roc_auc = 0.0;
    std::vector<CurvePoint> pr;   // (recall, precision)
    double pr_auc = 0.0;
    std::optional<SegmentScore> segments;
};

MetricsReport evaluate(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth,
                       double threshold = 0.5);

// Probability that a random positive outscores a random negative (ties 1/2).
double pairwise_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth);

std::string report_to_json(const MetricsReport& report);
void write_curves_csv(const MetricsReport& report, const std::filesystem::path& roc_path,
                      const std::filesystem::path& pr_path);

int segment_count(const std::string& slice_level);

struct Segment {
    int index = 0;
    std::size_t pixels = 0;
    std::size_t infarct = 0;
    bool abnormal = false;
};

// Equal angular sectors starting at reference_angle (6 basal/mid, 4
// apical); abnormal iff infarct pixels >= fraction of the segment's region
// pixels. Without a region every pixel counts.
std::vector<Segment> aha_segments(const PixelMask& infarct, const PixelMask* region, double center_x,
                                  double center_y, double reference_angle, const std::string& slice_level,
                                  double fraction = 0.05);

// ---------------------------------------------------------------- experiments

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

std::vector<Fold> kfold_split(std::size_t n, int k, std::uint64_t seed);
// Seeded shuffle; the first round(train_fraction * n) subjects train.
Fold holdout_split(std::size_t n, double train_fraction, std::uint64_t seed);

struct FoldOutcome {
    MetricsReport metrics;
    std::vector<double> scores;
    std::vector<std::uint8_t> truth;
};

// Scores every region pixel of the subjects with a trained model and pools
// them into one report with segment accuracy.
FoldOutcome evaluate_model(const Model& model, const std::vector<PreparedSubject>& subjects);

// Trains per fold and pools every test pixel into one report.
FoldOutcome cross_validate(const std::vector<PreparedSubject>& subjects, const std::vector<Fold>& folds,
                           const PipelineConfig& config, std::uint64_t seed);

struct AblationResult {
    features::FeatureMode mode;
    MetricsReport metrics;
};

// local, global, combined; identical folds and seed.
std::vector<AblationResult> ablate(const std::vector<PreparedSubject>& subjects, const std::vector<Fold>& folds,
                                   const PipelineConfig& config, std::uint64_t seed);

struct SweepEntry {
    int size = 0;
    double accuracy = 0.0;
    double seconds = 0.0;
};

// Rejects even or < 3 sizes before any training.
std::vector<SweepEntry> patch_sweep(const std::vector<PreparedSubject>& subjects, const std::vector<Fold>& folds,
                                    const std::vector<int>& sizes, const PipelineConfig& config, std::uint64_t seed);
std::string sweep_to_csv(const std::vector<SweepEntry>& entries);

// ---------------------------------------------------------------- persistence

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace cardio::pipeline

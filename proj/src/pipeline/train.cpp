#include <algorithm>
#include <chrono>
#include <iomanip>
#include <sstream>

#include "cardio/error.hpp"
#include "cardio/pipeline.hpp"
#include "cardio/rng.hpp"

namespace cardio::pipeline {

namespace {

struct PixelSample {
    std::size_t subject = 0;
    int x = 0;
    int y = 0;
    int label = 0;
};

// Equal counts per class and subject, capped at samples_per_subject / 2.
std::vector<PixelSample> balanced_pixels(const std::vector<PreparedSubject>& subjects, int cap, Rng& rng) {
    std::vector<PixelSample> out;
    for (std::size_t s = 0; s < subjects.size(); ++s) {
        const auto& p = subjects[s];
        std::vector<PixelSample> pos, neg;
        for (int y = 0; y < p.mask.height; ++y) {
            for (int x = 0; x < p.mask.width; ++x) {
                if (!p.region.at(x, y)) continue;
                const int label = p.mask.at(x, y) ? 1 : 0;
                (label ? pos : neg).push_back({s, x, y, label});
            }
        }
        rng.shuffle(std::span<PixelSample>(pos));
        rng.shuffle(std::span<PixelSample>(neg));
        const std::size_t take = std::min({pos.size(), neg.size(), static_cast<std::size_t>(cap / 2)});
        out.insert(out.end(), pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(take));
        out.insert(out.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(take));
    }
    return out;
}

neural::RmsPropConfig optimizer(const PipelineConfig& c, const TrainStage& stage) {
    return {stage.learning_rate, c.rmsprop_rho, c.rmsprop_epsilon};
}

void check_prepared(const PreparedSubject& p) {
    const int w = p.mask.width, h = p.mask.height;
    if (p.sequence.frames.empty() || p.sequence.frames.front().width != w || p.sequence.frames.front().height != h ||
        p.region.width != w || p.region.height != h) {
        throw InvalidParameter("subject " + p.id + ": frames, mask and region sizes differ");
    }
    if (p.flows.size() + 1 != p.sequence.frames.size()) {
        throw InvalidParameter("subject " + p.id + ": need one flow field per frame pair");
    }
}

}  // namespace

Model train(const std::vector<PreparedSubject>& subjects, const PipelineConfig& config, std::uint64_t seed,
            TrainReport* report) {
    config.validate();
    if (subjects.empty()) throw InvalidParameter("train: no subjects");
    for (const auto& p : subjects) check_prepared(p);
    const std::size_t frames = subjects.front().sequence.frames.size();
    for (const auto& p : subjects) {
        if (p.sequence.frames.size() != frames) throw InvalidParameter("train: subjects differ in frame count");
    }

    Rng rng(seed);
    Model model;
    model.config = config;

    const auto pixels = balanced_pixels(subjects, config.samples_per_subject, rng);
    if (pixels.empty()) throw DegenerateLabels("training pixels cover only one class");

    TrainReport local_report;
    TrainReport& rep = report ? *report : local_report;
    rep = {};
    rep.samples = pixels.size();
    rep.positives = pixels.size() / 2;

    if (config.mode != features::FeatureMode::global_only) {
        const neural::LstmStackConfig lc{config.window * config.window, config.lstm_hidden, config.lstm_layers, 2,
                                         config.lstm_dropout};
        model.lstm = neural::make_lstm_stack(lc, rng);
        // Balanced subset drawn across all subjects.
        std::vector<const PixelSample*> pos, neg;
        for (const auto& s : pixels) (s.label ? pos : neg).push_back(&s);
        rng.shuffle(std::span<const PixelSample*>(pos));
        rng.shuffle(std::span<const PixelSample*>(neg));
        const std::size_t half = std::min(pos.size(), static_cast<std::size_t>(config.lstm_max_samples / 2));
        std::vector<neural::SequenceSample> seqs;
        for (std::size_t i = 0; i < half; ++i) {
            for (const PixelSample* s : {pos[i], neg[i]}) {
                seqs.push_back({features::patch_sequence(subjects[s->subject].sequence, s->x, s->y, config.window),
                                s->label});
            }
        }
        const std::uint64_t lstm_seed = rng.next_u64();
        rep.lstm_loss = neural::lstm_train(model.lstm, seqs, optimizer(config, config.lstm),
                                           {config.lstm.epochs, config.lstm.batch_size, lstm_seed});
    }

    const int dim = static_cast<int>(features::feature_length(config.mode, config.lstm_hidden, frames));
    neural::Matrix data(static_cast<int>(pixels.size()), dim);
    std::vector<int> labels(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const auto& s = pixels[i];
        const auto& p = subjects[s.subject];
        const auto f = features::assemble(p.sequence, p.flows, s.x, s.y, model.lstm, config.window, config.mode);
        std::copy(f.begin(), f.end(), data.row(static_cast<int>(i)).begin());
        labels[i] = s.label;
    }
    model.norm = features::fit_norm_stats(data);
    for (int r = 0; r < data.rows; ++r) model.norm.apply(data.row(r));

    std::vector<int> dims{dim};
    dims.insert(dims.end(), config.sae_hidden.begin(), config.sae_hidden.end());
    model.ae = neural::make_autoencoder(dims, config.sae_tied, rng);
    const std::uint64_t sae_seed = rng.next_u64();
    rep.sae_loss = neural::sae_pretrain(model.ae, data, optimizer(config, config.sae),
                                        {config.sae.epochs, config.sae.batch_size, sae_seed});
    model.head = neural::make_softmax_head(2, model.ae.code_dim(), rng);
    const std::uint64_t ft_seed = rng.next_u64();
    rep.finetune_loss = neural::fine_tune(model.ae, model.head, data, labels, optimizer(config, config.finetune),
                                          {config.finetune.epochs, config.finetune.batch_size, ft_seed});
    return model;
}

Inference infer(const Model& model, const ImageSequence& sequence, const FlowSequence& flows,
                const PixelMask* region) {
    validate_sequence(sequence);
    const int w = sequence.frames.front().width, h = sequence.frames.front().height;
    if (w != localization::kRoiSize || h != localization::kRoiSize) {
        throw InvalidParameter("infer: expected a " + std::to_string(localization::kRoiSize) + "x" +
                               std::to_string(localization::kRoiSize) + " crop, got " + std::to_string(w) + "x" +
                               std::to_string(h));
    }
    if (flows.size() + 1 != sequence.frames.size()) throw InvalidParameter("infer: need one flow per frame pair");
    if (region && (region->width != w || region->height != h)) throw InvalidParameter("infer: region size mismatch");
    const auto& c = model.config;
    const std::size_t expected = features::feature_length(c.mode, c.lstm_hidden, sequence.frames.size());
    if (static_cast<int>(expected) != model.ae.input_dim()) {
        throw InvalidParameter("infer: sequence of " + std::to_string(sequence.frames.size()) +
                               " frames does not match the model's feature length");
    }

    Inference out;
    out.region = region ? *region : PixelMask(w, h, 1);
    out.labels = PixelMask(w, h, 0);
    out.scores.assign(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!out.region.at(x, y)) continue;
            const auto f = features::assemble(sequence, flows, x, y, model.lstm, c.window, c.mode, &model.norm);
            const double score = neural::classify(model.ae, model.head, f).probs[1];
            out.scores[static_cast<std::size_t>(y) * w + x] = score;
            out.labels.at(x, y) = score >= c.threshold ? 1 : 0;
        }
    }
    return out;
}

Inference infer(const Model& model, const ImageSequence& sequence, const PixelMask* region) {
    validate_sequence(sequence);
    return infer(model, sequence, varflow::flow_sequence(sequence, model.config.flow, model.config.matcher), region);
}

namespace {

void score_subject(const Model& model, const PreparedSubject& p, FoldOutcome& out, SegmentScore& seg) {
    const Inference inf = infer(model, p.sequence, p.flows, &p.region);
    for (int y = 0; y < p.mask.height; ++y) {
        for (int x = 0; x < p.mask.width; ++x) {
            if (!p.region.at(x, y)) continue;
            out.scores.push_back(inf.scores[static_cast<std::size_t>(y) * p.mask.width + x]);
            out.truth.push_back(p.mask.at(x, y) ? 1 : 0);
        }
    }
    const auto& c = model.config;
    const auto truth = aha_segments(p.mask, &p.region, p.center_x, p.center_y, p.reference_angle, p.slice_level,
                                    c.segment_fraction);
    const auto pred = aha_segments(inf.labels, &p.region, p.center_x, p.center_y, p.reference_angle, p.slice_level,
                                   c.segment_fraction);
    ++seg.slices;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        ++seg.segments;
        if (truth[k].abnormal == pred[k].abnormal) ++seg.correct;
    }
}

}  // namespace

FoldOutcome evaluate_model(const Model& model, const std::vector<PreparedSubject>& subjects) {
    FoldOutcome out;
    SegmentScore seg;
    for (const auto& p : subjects) score_subject(model, p, out, seg);
    out.metrics = evaluate(out.scores, out.truth, model.config.threshold);
    out.metrics.segments = seg;
    return out;
}

FoldOutcome cross_validate(const std::vector<PreparedSubject>& subjects, const std::vector<Fold>& folds,
                           const PipelineConfig& config, std::uint64_t seed) {
    FoldOutcome out;
    SegmentScore seg;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<PreparedSubject> train_set;
        for (std::size_t i : folds[f].train) train_set.push_back(subjects.at(i));
        const Model model = train(train_set, config, seed + f);
        for (std::size_t i : folds[f].test) score_subject(model, subjects.at(i), out, seg);
    }
    out.metrics = evaluate(out.scores, out.truth, config.threshold);
    out.metrics.segments = seg;
    return out;
}

std::vector<AblationResult> ablate(const std::vector<PreparedSubject>& subjects, const std::vector<Fold>& folds,
                                   const PipelineConfig& config, std::uint64_t seed) {
    std::vector<AblationResult> out;
    for (auto mode : {features::FeatureMode::local_only, features::FeatureMode::global_only,
                      features::FeatureMode::combined}) {
        PipelineConfig c = config;
        c.mode = mode;
        out.push_back({mode, cross_validate(subjects, folds, c, seed).metrics});
    }
    return out;
}

std::vector<SweepEntry> patch_sweep(const std::vector<PreparedSubject>& subjects, const std::vector<Fold>& folds,
                                    const std::vector<int>& sizes, const PipelineConfig& config, std::uint64_t seed) {
    if (sizes.empty()) throw InvalidParameter("patch_sweep: no sizes");
    for (int s : sizes) {
        if (s < 3 || s % 2 == 0) throw InvalidParameter("patch_sweep: size " + std::to_string(s) + " must be odd and >= 3");
    }
    std::vector<SweepEntry> out;
    for (int s : sizes) {
        PipelineConfig c = config;
        c.window = s;
        const auto t0 = std::chrono::steady_clock::now();
        const auto outcome = cross_validate(subjects, folds, c, seed);
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        out.push_back({s, outcome.metrics.accuracy, dt.count()});
    }
    return out;
}

std::string sweep_to_csv(const std::vector<SweepEntry>& entries) {
    std::ostringstream os;
    os << "size,accuracy,seconds\n" << std::setprecision(17);
    for (const auto& e : entries) os << e.size << ',' << e.accuracy << ',' << e.seconds << '\n';
    return os.str();
}

}  // namespace cardio::pipeline

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include "json.hpp"

#include "cardio/error.hpp"
#include "cardio/pipeline.hpp"
#include "cardio/rng.hpp"

namespace cardio::pipeline {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double trapezoid(const std::vector<CurvePoint>& pts) {
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) area += (pts[i].x - pts[i - 1].x) * (pts[i].y + pts[i - 1].y) / 2.0;
    return area;
}

}  // namespace

MetricsReport evaluate(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth, double threshold) {
    if (scores.size() != truth.size()) throw InvalidParameter("evaluate: scores and truth differ in length");
    MetricsReport r;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        const bool pos = truth[i] != 0;
        if (pred && pos) ++r.tp;
        else if (pred) ++r.fp;
        else if (pos) ++r.fn;
        else ++r.tn;
    }
    const std::size_t positives = r.tp + r.fn, negatives = r.tn + r.fp;
    const std::size_t total = positives + negatives;
    r.accuracy = total ? static_cast<double>(r.tp + r.tn) / total : kNaN;
    r.sensitivity_defined = positives > 0;
    r.specificity_defined = negatives > 0;
    r.sensitivity = positives ? static_cast<double>(r.tp) / positives : kNaN;
    r.specificity = negatives ? static_cast<double>(r.tn) / negatives : kNaN;

    if (positives == 0 || negatives == 0) {
        r.roc_auc = kNaN;
        r.pr_auc = kNaN;
        return r;
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    r.roc.push_back({0.0, 0.0});
    r.pr.push_back({0.0, 1.0});
    std::size_t tp = 0, fp = 0;
    for (std::size_t k = 0; k < order.size();) {
        const double s = scores[order[k]];
        while (k < order.size() && scores[order[k]] == s) {
            if (truth[order[k]]) ++tp;
            else ++fp;
            ++k;
        }
        r.roc.push_back({static_cast<double>(fp) / negatives, static_cast<double>(tp) / positives});
        r.pr.push_back({static_cast<double>(tp) / positives, static_cast<double>(tp) / (tp + fp)});
    }
    r.roc_auc = trapezoid(r.roc);
    r.pr_auc = trapezoid(r.pr);
    return r;
}

double pairwise_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!truth[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (truth[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return pairs ? wins / static_cast<double>(pairs) : kNaN;
}

std::string report_to_json(const MetricsReport& r) {
    using nlohmann::json;
    auto curve = [](const std::vector<CurvePoint>& pts, const char* xs, const char* ys) {
        json arr = json::array();
        for (const auto& p : pts) arr.push_back({{xs, p.x}, {ys, p.y}});
        return arr;
    };
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    json doc = {
        {"accuracy", num(r.accuracy)},
        {"sensitivity", num(r.sensitivity)},
        {"sensitivity_defined", r.sensitivity_defined},
        {"specificity", num(r.specificity)},
        {"specificity_defined", r.specificity_defined},
        {"confusion", {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}}},
        {"roc", {{"auc", num(r.roc_auc)}, {"points", curve(r.roc, "fpr", "tpr")}}},
        {"pr", {{"auc", num(r.pr_auc)}, {"points", curve(r.pr, "recall", "precision")}}},
    };
    if (r.segments) {
        doc["segments"] = {{"slices", r.segments->slices},
                           {"segments", r.segments->segments},
                           {"correct", r.segments->correct},
                           {"accuracy", r.segments->accuracy()}};
    }
    return doc.dump(2);
}

void write_curves_csv(const MetricsReport& r, const std::filesystem::path& roc_path,
                      const std::filesystem::path& pr_path) {
    std::ofstream roc(roc_path), pr(pr_path);
    if (!roc || !pr) throw InvalidParameter("cannot write curve files");
    roc.precision(17);
    pr.precision(17);
    roc << "fpr,tpr\n";
    for (const auto& p : r.roc) roc << p.x << ',' << p.y << '\n';
    pr << "recall,precision\n";
    for (const auto& p : r.pr) pr << p.x << ',' << p.y << '\n';
}

int segment_count(const std::string& slice_level) {
    if (slice_level == "basal" || slice_level == "mid") return 6;
    if (slice_level == "apical") return 4;
    throw InvalidParameter("unknown slice level '" + slice_level + "'");
}

std::vector<Segment> aha_segments(const PixelMask& infarct, const PixelMask* region, double center_x,
                                  double center_y, double reference_angle, const std::string& slice_level,
                                  double fraction) {
    const int n = segment_count(slice_level);
    if (center_x < 0 || center_y < 0 || center_x > infarct.width - 1 || center_y > infarct.height - 1) {
        throw InvalidParameter("aha_segments: centre outside mask");
    }
    if (region && (region->width != infarct.width || region->height != infarct.height)) {
        throw InvalidParameter("aha_segments: region size differs from mask");
    }
    std::vector<Segment> segs(n);
    for (int k = 0; k < n; ++k) segs[k].index = k;
    const double two_pi = 2.0 * std::numbers::pi;
    const double width = two_pi / n;
    for (int y = 0; y < infarct.height; ++y) {
        for (int x = 0; x < infarct.width; ++x) {
            if (region && !region->at(x, y)) continue;
            if (x == center_x && y == center_y) continue;
            double a = std::atan2(y - center_y, x - center_x) - reference_angle;
            a = std::fmod(std::fmod(a, two_pi) + two_pi, two_pi);
            const int k = std::min(n - 1, static_cast<int>(a / width));
            ++segs[k].pixels;
            if (infarct.at(x, y)) ++segs[k].infarct;
        }
    }
    for (auto& s : segs) {
        s.abnormal = s.pixels > 0 && static_cast<double>(s.infarct) >= fraction * static_cast<double>(s.pixels) &&
                     s.infarct > 0;
    }
    return segs;
}

std::vector<Fold> kfold_split(std::size_t n, int k, std::uint64_t seed) {
    if (k < 2) throw InvalidParameter("kfold_split: k must be >= 2");
    if (n < static_cast<std::size_t>(k)) {
        throw InvalidParameter("kfold_split: " + std::to_string(n) + " subjects cannot fill " + std::to_string(k) +
                               " folds");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<Fold> folds(k);
    for (int f = 0; f < k; ++f) {
        const std::size_t lo = f * n / k, hi = (f + 1) * n / k;
        std::vector<std::uint8_t> in_test(n, 0);
        for (std::size_t i = lo; i < hi; ++i) {
            folds[f].test.push_back(order[i]);
            in_test[order[i]] = 1;
        }
        std::sort(folds[f].test.begin(), folds[f].test.end());
        for (std::size_t i = 0; i < n; ++i) {
            if (!in_test[i]) folds[f].train.push_back(i);
        }
    }
    return folds;
}

Fold holdout_split(std::size_t n, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidParameter("holdout_split: fraction must lie in (0, 1)");
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    if (n_train < 1 || n_train >= n) throw InvalidParameter("holdout_split: both parts need at least one subject");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    Fold fold;
    fold.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    fold.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(fold.train.begin(), fold.train.end());
    std::sort(fold.test.begin(), fold.test.end());
    return fold;
}

}  // namespace cardio::pipeline

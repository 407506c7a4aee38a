#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "cardio/error.hpp"
#include "cardio/pipeline.hpp"

namespace cardio::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& prefix, const std::string& ext) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && name.rfind(prefix, 0) == 0 && entry.path().extension() == ext) {
            out.push_back(entry.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

Subject load_subject(const fs::path& dir) {
    Subject s;
    s.id = dir.filename().string();
    if (s.id.empty()) s.id = dir.parent_path().filename().string();

    const auto frames = sorted_files(dir / "frames", "frame_", ".pgm");
    if (frames.size() < 2) throw InvalidParameter(dir.string() + ": need at least 2 frames under frames/");
    for (const auto& f : frames) s.sequence.frames.push_back(read_image(f));
    validate_sequence(s.sequence);
    const int w = s.sequence.frames.front().width, h = s.sequence.frames.front().height;

    if (!fs::exists(dir / "mask.pgm")) throw InvalidParameter(dir.string() + ": missing mask.pgm");
    s.mask = read_mask(dir / "mask.pgm");
    if (s.mask.width != w || s.mask.height != h) throw InvalidParameter(dir.string() + ": mask size differs from frames");
    if (fs::exists(dir / "myocardium.pgm")) {
        s.myocardium = read_mask(dir / "myocardium.pgm");
        if (s.myocardium->width != w || s.myocardium->height != h) {
            throw InvalidParameter(dir.string() + ": myocardium size differs from frames");
        }
    }

    s.center_x = (w - 1) / 2.0;
    s.center_y = (h - 1) / 2.0;
    if (fs::exists(dir / "meta.json")) {
        std::ifstream in(dir / "meta.json");
        std::stringstream ss;
        ss << in.rdbuf();
        try {
            const json meta = json::parse(ss.str());
            s.slice_level = meta.value("slice_level", s.slice_level);
            if (meta.contains("center")) {
                s.center_x = meta["center"].at(0).get<double>();
                s.center_y = meta["center"].at(1).get<double>();
            }
            s.reference_angle = meta.value("reference_angle", 0.0);
            s.pixel_spacing_mm = meta.value("pixel_spacing_mm", 1.0);
            s.sequence.frame_period_ms = meta.value("frame_period_ms", s.sequence.frame_period_ms);
        } catch (const json::exception& e) {
            throw FormatError(dir.string() + "/meta.json: " + e.what());
        }
    }
    segment_count(s.slice_level);

    const auto flows = sorted_files(dir / "gt", "flow_", ".flo");
    if (!flows.empty()) {
        FlowSequence gt;
        for (const auto& f : flows) gt.push_back(read_flo(f));
        s.gt_flows = std::move(gt);
    }
    return s;
}

std::vector<Subject> load_dataset(const fs::path& root) {
    if (!fs::is_directory(root)) throw InvalidParameter("dataset root " + root.string() + " is not a directory");
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw InvalidParameter("no subject directories under " + root.string());
    std::vector<Subject> out;
    for (const auto& d : dirs) out.push_back(load_subject(d));
    return out;
}

PreparedSubject prepare(const Subject& subject, const PipelineConfig& config) {
    PreparedSubject p;
    p.id = subject.id;
    const ImageSequence normalized = normalize_min_max(subject.sequence);
    p.box = localization::localize_lv(normalized);
    p.sequence = localization::crop_sequence(normalized, p.box);
    try {
        p.flows = varflow::flow_sequence(p.sequence, config.flow, config.matcher);
    } catch (const NumericalDivergence& e) {
        throw NumericalDivergence("subject " + subject.id + ": " + e.what());
    }
    p.mask = localization::crop_mask(subject.mask, p.box);
    p.region = subject.myocardium ? localization::crop_mask(*subject.myocardium, p.box)
                                  : PixelMask(p.box.width, p.box.height, 1);
    p.slice_level = subject.slice_level;
    p.center_x = subject.center_x - p.box.x;
    p.center_y = subject.center_y - p.box.y;
    p.reference_angle = subject.reference_angle;
    return p;
}

}  // namespace cardio::pipeline

#include <bit>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "cardio/error.hpp"
#include "cardio/pipeline.hpp"

namespace cardio::pipeline {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

json encode_array(std::span<const double> values, std::vector<int> shape) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(values.size() * 8);
    for (double v : values) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int k = 0; k < 8; ++k) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
    }
    return {{"shape", shape}, {"data", base64_encode(bytes)}};
}

[[noreturn]] void corrupt(const std::string& what) { throw CorruptModel("model: " + what); }

std::vector<double> decode_array(const json& weights, const std::string& name, const std::vector<int>& shape) {
    if (!weights.contains(name)) corrupt("missing weight '" + name + "'");
    const json& entry = weights.at(name);
    if (!entry.is_object() || !entry.contains("shape") || !entry.contains("data") || !entry["data"].is_string()) {
        corrupt("malformed weight '" + name + "'");
    }
    std::vector<int> got;
    try {
        got = entry["shape"].get<std::vector<int>>();
    } catch (const json::exception&) {
        corrupt("malformed shape for '" + name + "'");
    }
    if (got != shape) corrupt("shape mismatch for '" + name + "'");
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    std::vector<std::uint8_t> bytes;
    try {
        bytes = base64_decode(entry["data"].get<std::string>());
    } catch (const InvalidParameter&) {
        corrupt("bad base64 in '" + name + "'");
    }
    if (bytes.size() != count * 8) corrupt("data length mismatch for '" + name + "'");
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[i * 8 + k]) << (8 * k);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

void load_matrix(const json& weights, const std::string& name, neural::Matrix& m, int rows, int cols) {
    m = neural::Matrix(rows, cols);
    m.data = decode_array(weights, name, {rows, cols});
}

void load_vector(const json& weights, const std::string& name, std::vector<double>& v, int n) {
    v = decode_array(weights, name, {n});
}

json matrix_json(const neural::Matrix& m) { return encode_array(m.data, {m.rows, m.cols}); }
json vector_json(const std::vector<double>& v) { return encode_array(v, {static_cast<int>(v.size())}); }

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        const std::size_t n = std::min<std::size_t>(3, bytes.size() - i);
        std::uint32_t block = static_cast<std::uint32_t>(bytes[i]) << 16;
        if (n > 1) block |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
        if (n > 2) block |= bytes[i + 2];
        out += kAlphabet[(block >> 18) & 63];
        out += kAlphabet[(block >> 12) & 63];
        out += n > 1 ? kAlphabet[(block >> 6) & 63] : '=';
        out += n > 2 ? kAlphabet[block & 63] : '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw InvalidParameter("base64: length is not a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        const bool last = i + 4 == text.size();
        int pad = 0;
        std::uint32_t block = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + k];
            int v;
            if (c == '=' && last && k >= 2) {
                ++pad;
                v = 0;
            } else {
                if (pad > 0) throw InvalidParameter("base64: data after padding");
                v = decode_char(c);
                if (v < 0) throw InvalidParameter("base64: invalid character");
            }
            block = (block << 6) | static_cast<std::uint32_t>(v);
        }
        out.push_back(static_cast<std::uint8_t>(block >> 16));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>(block >> 8));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(block));
    }
    return out;
}

std::string model_to_json(const Model& model) {
    json weights = json::object();
    for (std::size_t l = 0; l < model.lstm.layers.size(); ++l) {
        const auto& layer = model.lstm.layers[l];
        weights["lstm." + std::to_string(l) + ".w"] = matrix_json(layer.w);
        weights["lstm." + std::to_string(l) + ".b"] = vector_json(layer.b);
    }
    if (!model.lstm.layers.empty()) weights["lstm.w_hy"] = matrix_json(model.lstm.w_hy);
    for (int k = 0; k < model.ae.depth(); ++k) {
        const std::string p = "sae." + std::to_string(k);
        weights[p + ".encoder.w"] = matrix_json(model.ae.encoders[k].w);
        weights[p + ".encoder.b"] = vector_json(model.ae.encoders[k].b);
        if (!model.ae.tied) weights[p + ".decoder.w"] = matrix_json(model.ae.decoders[k].w);
        weights[p + ".decoder.b"] = vector_json(model.ae.decoders[k].b);
    }
    weights["head.w"] = matrix_json(model.head.w);
    weights["head.b"] = vector_json(model.head.b);

    const json doc = {
        {"version", model.version},
        {"config", json::parse(config_to_json(model.config))},
        {"norm_stats", {{"mean", vector_json(model.norm.mean)}, {"stddev", vector_json(model.norm.stddev)}}},
        {"weights", weights},
    };
    return doc.dump();
}

Model model_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        corrupt(std::string("unreadable document: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("version") || !doc["version"].is_number_integer()) corrupt("missing version");
    const int version = doc["version"].get<int>();
    if (version != kModelVersion) {
        throw UnsupportedVersion("model: version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kModelVersion) + ")");
    }
    for (const char* key : {"config", "norm_stats", "weights"}) {
        if (!doc.contains(key) || !doc[key].is_object()) corrupt(std::string("missing '") + key + "'");
    }

    Model m;
    m.version = version;
    try {
        m.config = config_from_json(doc["config"].dump());
    } catch (const InvalidParameter& e) {
        corrupt(e.what());
    }
    const auto& c = m.config;
    const json& w = doc["weights"];

    int frames_dim = 0;
    if (c.mode != features::FeatureMode::global_only) {
        m.lstm.output_dim = 2;
        for (int l = 0; l < c.lstm_layers; ++l) {
            const int in = l == 0 ? c.window * c.window : c.lstm_hidden;
            neural::LstmLayer layer(in, c.lstm_hidden, l == 0 ? 0.0 : c.lstm_dropout);
            load_matrix(w, "lstm." + std::to_string(l) + ".w", layer.w, 4 * c.lstm_hidden, in + c.lstm_hidden);
            load_vector(w, "lstm." + std::to_string(l) + ".b", layer.b, 4 * c.lstm_hidden);
            m.lstm.layers.push_back(std::move(layer));
        }
        load_matrix(w, "lstm.w_hy", m.lstm.w_hy, 2, c.lstm_hidden);
    }

    // The input width depends on the frame count, so take it from the first
    // encoder and check it against the feature layout.
    if (!w.contains("sae.0.encoder.w") || !w["sae.0.encoder.w"].contains("shape")) corrupt("missing 'sae.0.encoder.w'");
    try {
        const auto shape = w["sae.0.encoder.w"]["shape"].get<std::vector<int>>();
        if (shape.size() != 2) corrupt("bad shape for 'sae.0.encoder.w'");
        frames_dim = shape[1];
    } catch (const json::exception&) {
        corrupt("bad shape for 'sae.0.encoder.w'");
    }
    const int local = c.mode == features::FeatureMode::global_only ? 0 : c.lstm_hidden;
    const int global = frames_dim - local;
    if (global < 0 || (c.mode == features::FeatureMode::local_only && global != 0) ||
        (c.mode != features::FeatureMode::local_only && (global == 0 || global % 18 != 0))) {
        corrupt("input width does not match the feature layout");
    }

    m.ae.tied = c.sae_tied;
    m.ae.layer_dims = {frames_dim};
    m.ae.layer_dims.insert(m.ae.layer_dims.end(), c.sae_hidden.begin(), c.sae_hidden.end());
    for (int k = 0; k + 1 < static_cast<int>(m.ae.layer_dims.size()); ++k) {
        const int in = m.ae.layer_dims[k], out = m.ae.layer_dims[k + 1];
        const std::string p = "sae." + std::to_string(k);
        neural::Dense enc, dec;
        load_matrix(w, p + ".encoder.w", enc.w, out, in);
        load_vector(w, p + ".encoder.b", enc.b, out);
        if (!c.sae_tied) load_matrix(w, p + ".decoder.w", dec.w, in, out);
        load_vector(w, p + ".decoder.b", dec.b, in);
        m.ae.encoders.push_back(std::move(enc));
        m.ae.decoders.push_back(std::move(dec));
    }
    load_matrix(w, "head.w", m.head.w, 2, m.ae.code_dim());
    load_vector(w, "head.b", m.head.b, 2);

    const json& ns = doc["norm_stats"];
    load_vector(ns, "mean", m.norm.mean, frames_dim);
    load_vector(ns, "stddev", m.norm.stddev, frames_dim);
    return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidParameter("cannot write model " + path.string());
    out << model_to_json(model) << '\n';
    if (!out) throw InvalidParameter("failed writing model " + path.string());
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidParameter("cannot read model " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

}  // namespace cardio::pipeline

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "cardio/error.hpp"
#include "cardio/image.hpp"

namespace cardio {
namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidParameter("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidParameter("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InvalidParameter("write failed for " + path.string());
}

struct PgmHeader {
    int width;
    int height;
    int maxval;
    std::size_t data_offset;
};

PgmHeader parse_pgm_header(const std::vector<unsigned char>& bytes, const std::string& name) {
    if (bytes.size() < 2 || bytes[0] != 'P') throw FormatError(name + ": not a PNM file");
    const char kind = static_cast<char>(bytes[1]);
    if (kind == '3' || kind == '6' || kind == '1' || kind == '4' || kind == '2') {
        throw UnsupportedFormat(name + ": only binary grayscale (P5) is supported");
    }
    if (kind != '5') throw FormatError(name + ": bad magic");

    std::size_t pos = 2;
    auto read_int = [&]() -> int {
        // whitespace and comments
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError(name + ": malformed header");
        long value = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            value = value * 10 + (bytes[pos] - '0');
            if (value > 1'000'000) throw FormatError(name + ": header value out of range");
            ++pos;
        }
        return static_cast<int>(value);
    };
    PgmHeader h{};
    h.width = read_int();
    h.height = read_int();
    h.maxval = read_int();
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError(name + ": malformed header");
    ++pos;
    if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535) {
        throw FormatError(name + ": invalid header values");
    }
    h.data_offset = pos;
    return h;
}

void append_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t read_u32_le(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    const auto h = parse_pgm_header(bytes, path.string());
    const int depth = h.maxval < 256 ? 1 : 2;
    const std::size_t need = static_cast<std::size_t>(h.width) * h.height * depth;
    if (bytes.size() - h.data_offset < need) throw TruncatedFile(path.string() + ": pixel data truncated");
    Image img(h.width, h.height);
    const unsigned char* p = bytes.data() + h.data_offset;
    const double scale = static_cast<double>(h.maxval);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const unsigned raw = depth == 1 ? p[i] : (unsigned(p[2 * i]) << 8) | p[2 * i + 1];
        if (static_cast<int>(raw) > h.maxval) throw FormatError(path.string() + ": sample exceeds maxval");
        img.data[i] = raw / scale;
    }
    return img;
}

void write_image(const Image& img, const std::filesystem::path& path, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16) throw InvalidParameter("bit depth must be 8 or 16");
    const int maxval = bit_depth == 8 ? 255 : 65535;
    const std::string header =
        "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n" + std::to_string(maxval) + "\n";
    std::vector<unsigned char> bytes(header.begin(), header.end());
    for (double v : img.data) {
        if (!std::isfinite(v)) throw InvalidParameter("cannot write non-finite intensity");
        const auto q = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * maxval));
        if (bit_depth == 16) bytes.push_back(static_cast<unsigned char>(q >> 8));
        bytes.push_back(static_cast<unsigned char>(q & 0xFF));
    }
    dump(path, bytes);
}

PixelMask read_mask(const std::filesystem::path& path) {
    const Image img = read_image(path);
    PixelMask mask(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) mask.labels[i] = img.data[i] >= 0.5 ? 1 : 0;
    return mask;
}

void write_mask(const PixelMask& mask, const std::filesystem::path& path) {
    Image img(mask.width, mask.height);
    for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = mask.labels[i] ? 1.0 : 0.0;
    write_image(img, path, 8);
}

FlowField read_flo(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "PIEH", 4) != 0) {
        throw FormatError(path.string() + ": missing PIEH tag");
    }
    const auto w = static_cast<std::int32_t>(read_u32_le(bytes.data() + 4));
    const auto h = static_cast<std::int32_t>(read_u32_le(bytes.data() + 8));
    if (w < 0 || h < 0 || w > 100000 || h > 100000) throw FormatError(path.string() + ": invalid dimensions");
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (bytes.size() != 12 + n * 8) throw TruncatedFile(path.string() + ": size does not match header");
    FlowField flow(w, h);
    const unsigned char* p = bytes.data() + 12;
    for (std::size_t i = 0; i < n; ++i) {
        flow.u[i] = std::bit_cast<float>(read_u32_le(p + 8 * i));
        flow.v[i] = std::bit_cast<float>(read_u32_le(p + 8 * i + 4));
    }
    return flow;
}

void write_flo(const FlowField& flow, const std::filesystem::path& path) {
    std::vector<unsigned char> bytes{'P', 'I', 'E', 'H'};
    bytes.reserve(12 + flow.size() * 8);
    append_u32_le(bytes, static_cast<std::uint32_t>(flow.width));
    append_u32_le(bytes, static_cast<std::uint32_t>(flow.height));
    for (std::size_t i = 0; i < flow.size(); ++i) {
        append_u32_le(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(flow.u[i])));
        append_u32_le(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(flow.v[i])));
    }
    dump(path, bytes);
}

}  // namespace cardio

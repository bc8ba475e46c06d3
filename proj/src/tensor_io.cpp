#include "averify/tensor_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace averify {

namespace {

constexpr std::uint32_t kTnsrVersion = 1;
constexpr std::uint32_t kMaxRank = 8;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error(std::string("tensor file truncated reading ") + what);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) {
        throw std::runtime_error("tensor file truncated reading values");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void write_tnsr(const Tensor& t, std::ostream& os) {
    os.write("TNSR", 4);
    write_u32(os, kTnsrVersion);
    write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) write_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.data) write_f64(os, v);
    if (!os) throw std::runtime_error("tensor write failed");
}

Tensor read_tnsr(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "TNSR", 4) != 0) {
        throw std::runtime_error("bad tensor magic");
    }
    const std::uint32_t version = read_u32(is, "version");
    if (version != kTnsrVersion) {
        throw std::runtime_error("unsupported tensor version " + std::to_string(version));
    }
    const std::uint32_t rank = read_u32(is, "rank");
    if (rank == 0 || rank > kMaxRank) {
        throw std::runtime_error("tensor rank " + std::to_string(rank) + " out of range");
    }
    std::vector<std::size_t> shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) {
        shape[i] = read_u32(is, "dims");
        if (shape[i] == 0) throw std::runtime_error("tensor dimension is zero");
    }
    Tensor t(shape);
    for (double& v : t.data) v = read_f64(is);
    return t;
}

void write_tnsr(const Tensor& t, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_tnsr(t, os);
}

Tensor read_tnsr(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    try {
        return read_tnsr(is);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void write_pgm(const ImageTensor& image, const std::filesystem::path& path) {
    const Tensor& t = image.tensor();
    if (t.shape[0] != 1) {
        throw std::invalid_argument("PGM output requires a single-channel image, got " +
                                    shape_to_string(t.shape));
    }
    const std::size_t h = t.shape[1], w = t.shape[2];
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            row[x] = static_cast<unsigned char>(std::lround(t.at3(0, y, x) * 255.0));
        }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(w));
    }
    if (!os) throw std::runtime_error("write failed for " + path.string());
}

namespace {

// Skips whitespace and `#` comment lines between PGM header tokens.
std::string pgm_token(std::istream& is) {
    std::string tok;
    int ch = is.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = is.get();
        } else if (std::isspace(ch)) {
            ch = is.get();
        } else {
            break;
        }
    }
    while (ch != EOF && !std::isspace(ch)) {
        tok.push_back(static_cast<char>(ch));
        ch = is.get();
    }
    return tok;
}

}  // namespace

ImageTensor read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    if (pgm_token(is) != "P5") throw std::runtime_error(path.string() + ": not a binary PGM");
    std::size_t w = 0, h = 0;
    unsigned long maxval = 0;
    try {
        w = std::stoul(pgm_token(is));
        h = std::stoul(pgm_token(is));
        maxval = std::stoul(pgm_token(is));
    } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ": malformed PGM header");
    }
    if (w == 0 || h == 0) throw std::runtime_error(path.string() + ": empty PGM");
    if (maxval != 255) {
        throw std::runtime_error(path.string() + ": unsupported PGM maxval " +
                                 std::to_string(maxval));
    }
    std::vector<unsigned char> raw(w * h);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw std::runtime_error(path.string() + ": PGM pixel data truncated");
    }
    Tensor t({1, h, w});
    for (std::size_t i = 0; i < raw.size(); ++i) t.data[i] = raw[i] / 255.0;
    return ImageTensor(std::move(t));
}

}  // namespace averify

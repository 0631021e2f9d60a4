#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "vib/datagen.hpp"

namespace vib {
namespace {

constexpr char kMagic[4] = {'B', 'M', 'A', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 8;

template <typename T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(char((value >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= T(p[i]) << (8 * i);
    return v;
}

}  // namespace

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Matrix load_matrix_file(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < kHeaderBytes) throw IoError(path + ": truncated BMAT header");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (std::memcmp(p, kMagic, 4) != 0) throw IoError(path + ": bad magic, expected BMAT");
    const auto version = get_le<std::uint32_t>(p + 4);
    if (version != kVersion) throw IoError(path + ": unsupported BMAT version " + std::to_string(version));
    const auto rows = get_le<std::uint64_t>(p + 8);
    const auto cols = get_le<std::uint64_t>(p + 16);

    const std::uint64_t max_index = std::uint64_t(std::numeric_limits<Index>::max());
    if (rows > max_index || cols > max_index || (cols != 0 && rows > max_index / cols))
        throw IoError(path + ": BMAT dimensions overflow");
    const std::uint64_t count = rows * cols;
    if (count > (std::numeric_limits<std::uint64_t>::max() - kHeaderBytes) / 4)
        throw IoError(path + ": BMAT dimensions overflow");
    if (bytes.size() != kHeaderBytes + count * 4) {
        if (bytes.size() < kHeaderBytes + count * 4) throw IoError(path + ": truncated BMAT payload");
        throw IoError(path + ": trailing bytes after BMAT payload");
    }

    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    const unsigned char* q = p + kHeaderBytes;
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c, q += 4) {
            m(r, c) = double(std::bit_cast<float>(get_le<std::uint32_t>(q)));
        }
    }
    return m;
}

void save_matrix_file(const std::string& path, const Matrix& m) {
    std::string out;
    out.reserve(kHeaderBytes + std::size_t(m.size()) * 4);
    out.append(kMagic, 4);
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint64_t>(out, std::uint64_t(m.rows()));
    put_le<std::uint64_t>(out, std::uint64_t(m.cols()));
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c)
            put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(float(m(r, c))));
    write_file(path, out);
}

namespace {

unsigned char to_gray(double v, double lo, double hi) {
    if (!(hi > lo)) return 128;
    const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(255.0 * t));
}

std::string pgm_header(Index width, Index height) {
    return "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
}

}  // namespace

std::string encode_pgm(const Matrix& image) {
    std::string out = pgm_header(image.cols(), image.rows());
    const double lo = image.size() ? image.minCoeff() : 0.0;
    const double hi = image.size() ? image.maxCoeff() : 0.0;
    for (Index r = 0; r < image.rows(); ++r)
        for (Index c = 0; c < image.cols(); ++c) out.push_back(char(to_gray(image(r, c), lo, hi)));
    return out;
}

std::string encode_pgm_grid(const Matrix& images, int height, int width, int columns) {
    if (images.cols() != Index(height) * width) throw InvalidArgument("pgm grid: tile size mismatch");
    columns = std::max(1, columns);
    const Index n = images.rows();
    const Index grid_cols = std::min<Index>(columns, std::max<Index>(n, 1));
    const Index grid_rows = std::max<Index>(1, (n + grid_cols - 1) / grid_cols);
    const Index W = grid_cols * (width + 1) + 1;
    const Index H = grid_rows * (height + 1) + 1;
    std::string pixels(std::size_t(W * H), char(0));
    for (Index k = 0; k < n; ++k) {
        const Index gr = k / grid_cols, gc = k % grid_cols;
        const double lo = images.row(k).minCoeff(), hi = images.row(k).maxCoeff();
        for (int v = 0; v < height; ++v) {
            for (int h = 0; h < width; ++h) {
                const Index y = 1 + gr * (height + 1) + v;
                const Index x = 1 + gc * (width + 1) + h;
                pixels[std::size_t(y * W + x)] = char(to_gray(images(k, Index(v) * width + h), lo, hi));
            }
        }
    }
    return pgm_header(W, H) + pixels;
}

}  // namespace vib

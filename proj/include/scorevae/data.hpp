#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "scorevae/errors.hpp"
#include "scorevae/rng.hpp"
#include "scorevae/tensor.hpp"

namespace scorevae {

enum class DatasetKind { GmmRing, Checkerboard, Gaussian, Images };

struct Dataset {
    Tensor samples; // (n x dim)
    DatasetKind kind = DatasetKind::Gaussian;

    int size() const { return samples.rows; }
    int dim() const { return samples.cols; }

    Tensor row(int r) const {
        Tensor out(1, samples.cols);
        for (int c = 0; c < samples.cols; ++c) out.v[c] = samples.at(r, c);
        return out;
    }

    // Per-coordinate standard deviation pooled over dimensions.
    double pooled_std() const {
        int n = samples.rows, d = samples.cols;
        std::vector<double> mean(d, 0.0);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < d; ++c) mean[c] += samples.at(r, c);
        for (double& m : mean) m /= n;
        double ss = 0;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < d; ++c) {
                double dv = samples.at(r, c) - mean[c];
                ss += dv * dv;
            }
        return std::sqrt(ss / (static_cast<double>(n) * d));
    }
};

// Equal-weight mixture of isotropic 2D Gaussians centered on a circle.
inline Dataset gmm_ring(int n, int modes, double radius, double std_dev, RandomStream& rng) {
    if (modes < 1) throw ConfigError("gmm_ring: modes >= 1");
    if (!(std_dev > 0.0)) throw ConfigError("gmm_ring: std > 0");
    Dataset ds;
    ds.kind = DatasetKind::GmmRing;
    ds.samples = Tensor(n, 2);
    for (int r = 0; r < n; ++r) {
        int k = static_cast<int>(rng.uniform() * modes);
        if (k == modes) k = modes - 1;
        double angle = 2.0 * 3.14159265358979323846 * k / modes;
        ds.samples.at(r, 0) = radius * std::cos(angle) + std_dev * rng.normal();
        ds.samples.at(r, 1) = radius * std::sin(angle) + std_dev * rng.normal();
    }
    return ds;
}

// Uniform over the black squares of a squares x squares board centered at the
// origin; a point at (u, v) in board coordinates has floor(u)+floor(v) even.
inline Dataset checkerboard(int n, int squares, RandomStream& rng) {
    if (squares < 1) throw ConfigError("checkerboard: squares >= 1");
    Dataset ds;
    ds.kind = DatasetKind::Checkerboard;
    ds.samples = Tensor(n, 2);
    double half = squares / 2.0;
    for (int r = 0; r < n; ++r) {
        int i, j;
        do {
            i = static_cast<int>(rng.uniform() * squares);
            j = static_cast<int>(rng.uniform() * squares);
        } while ((i + j) % 2 != 0);
        ds.samples.at(r, 0) = i + rng.uniform() - half;
        ds.samples.at(r, 1) = j + rng.uniform() - half;
    }
    return ds;
}

inline Dataset gaussian_dataset(int n, int dim, RandomStream& rng) {
    Dataset ds;
    ds.kind = DatasetKind::Gaussian;
    ds.samples = normal_tensor(n, dim, rng);
    return ds;
}

/*------------------------------- IDX format -------------------------------*/

inline std::uint32_t read_be32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("idx: truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

// Big-endian IDX container: magic 0x00000803 for u8 images (n, rows, cols)
// or 0x00000801 for u8 labels (n). Pixels are rescaled to [0, 1].
inline Dataset idx_load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("idx_load: cannot open '" + path + "'");
    std::uint32_t magic = read_be32(in);
    Dataset ds;
    ds.kind = DatasetKind::Images;
    if (magic == 0x00000803u) {
        std::uint32_t n = read_be32(in), rows = read_be32(in), cols = read_be32(in);
        size_t count = static_cast<size_t>(n) * rows * cols;
        std::vector<unsigned char> bytes(count);
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
        if (static_cast<size_t>(in.gcount()) != count)
            throw FormatError("idx_load: truncated payload, expected " + std::to_string(count) + " bytes, got " +
                              std::to_string(in.gcount()));
        ds.samples = Tensor(static_cast<int>(n), static_cast<int>(rows * cols));
        for (size_t i = 0; i < count; ++i) ds.samples.v[i] = bytes[i] / 255.0;
    } else if (magic == 0x00000801u) {
        std::uint32_t n = read_be32(in);
        std::vector<unsigned char> bytes(n);
        in.read(reinterpret_cast<char*>(bytes.data()), n);
        if (static_cast<size_t>(in.gcount()) != n) throw FormatError("idx_load: truncated label payload");
        ds.samples = Tensor(static_cast<int>(n), 1);
        for (std::uint32_t i = 0; i < n; ++i) ds.samples.v[i] = bytes[i];
    } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "0x%08x", magic);
        throw FormatError(std::string("idx_load: bad magic ") + buf +
                          ", expected 0x00000803 (images) or 0x00000801 (labels)");
    }
    return ds;
}

// Writer for round-trip testing and dataset export; pixels in [0, 1].
inline void idx_write(const std::string& path, const Tensor& images, int rows, int cols) {
    if (images.cols != rows * cols) throw ShapeError("idx_write: rows*cols must equal sample width");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("idx_write: cannot open '" + path + "'");
    write_be32(out, 0x00000803u);
    write_be32(out, static_cast<std::uint32_t>(images.rows));
    write_be32(out, static_cast<std::uint32_t>(rows));
    write_be32(out, static_cast<std::uint32_t>(cols));
    for (double v : images.v) {
        double clamped = std::min(std::max(v, 0.0), 1.0);
        out.put(static_cast<char>(static_cast<int>(std::lround(clamped * 255.0))));
    }
}

} // namespace scorevae

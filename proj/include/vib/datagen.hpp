#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vib/common.hpp"

namespace vib {

// Synthetic bar patches. Each patch is side×side pixels stored row-major in
// one matrix row (pixel (v, h) at column v*side + h, v counted downwards).
struct PatchSpec {
    int side = 9;
    int n_bars = 3;
    double bar_width = 1.2;      // std of the gaussian cross-section, pixels
    double amplitude_std = 1.0;  // peak amplitude ~ Normal(0, amplitude_std²)
    std::uint64_t seed = 0;

    void validate() const;
};

// One bar. `angle` is measured counter-clockwise from horizontal with the
// image y axis pointing up; `offset` is the signed perpendicular distance of
// the bar's centre line from the patch centre.
struct BarParams {
    double angle = 0.0;
    double offset = 0.0;
    double amplitude = 0.0;
};

/// Adds one rendered bar to a flattened side×side image.
void add_bar(Eigen::Ref<RowVector, 0, Eigen::InnerStride<>> image, int side, const BarParams& bar, double bar_width);

/// Draws the per-bar parameters for `n_patches` patches, n_bars per patch, in
/// generation order. generate_bar_patches renders exactly these.
std::vector<BarParams> draw_bar_params(const PatchSpec& spec, Index n_patches);

Matrix generate_bar_patches(const PatchSpec& spec, Index n_patches);

enum class NoiseKind { white, correlated };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::white;
    double variance = 0.005;
    double envelope_std_v = 3.0;  // correlated only
    double envelope_std_h = 1.0;

    void validate() const;
};

/// Pixel noise covariance for a side×side patch. White noise gives
/// variance·I; correlated noise gives a gaussian envelope over the vertical
/// and horizontal pixel offsets, scaled so the diagonal equals `variance`.
Matrix noise_covariance(const NoiseSpec& noise, int side);

/// X = patches + ε with ε ~ Normal(0, noise_covariance). Correlated noise is
/// synthesized through the eigendecomposition of the covariance with
/// eigenvalues clamped at zero.
Matrix apply_noise(const Matrix& patches, const NoiseSpec& noise, int side, std::uint64_t seed);

// N paired samples with cached second moments (1/N normalization).
struct PairedDataset {
    Matrix X;    // N×D_x
    Matrix Y;    // N×D_y
    Matrix Cxx;  // D_x×D_x
    Matrix Cxy;  // D_x×D_y
    Matrix Cyy;  // D_y×D_y
    double log_det_cyy = 0.0;

    Index size() const { return X.rows(); }
    Index dim_x() const { return X.cols(); }
    Index dim_y() const { return Y.cols(); }
};

PairedDataset dataset_from_pairs(Matrix X, Matrix Y);

// Pixel bookkeeping for the occlusion task: X holds the outer columns, Y the
// central ones, both enumerated row by row.
struct OcclusionLayout {
    int side = 0;
    int left_cols = 0;
    int right_cols = 0;
    std::vector<Index> x_pixels;
    std::vector<Index> y_pixels;

    int x_width() const { return left_cols + right_cols; }
    int y_width() const { return side - left_cols - right_cols; }
};

OcclusionLayout occlusion_layout(int side, int left_cols, int right_cols);

PairedDataset make_occlusion_split(const Matrix& patches, int side, int left_cols, int right_cols);

/// Inverse of make_occlusion_split's pixel selection.
Matrix reassemble_occlusion(const Matrix& X, const Matrix& Y, const OcclusionLayout& layout);

// Binary matrix files: "BMAT", u32 version = 1, u64 rows, u64 cols, then
// rows·cols little-endian float32 values in row-major order.
Matrix load_matrix_file(const std::string& path);
void save_matrix_file(const std::string& path, const Matrix& m);

/// Serializes an image (height×width values) as binary PGM (P5, maxval 255).
/// Values are mapped linearly from [min, max] of the image onto [0, 255];
/// a constant image maps to 128.
std::string encode_pgm(const Matrix& image);

/// Tiles `images` (each row one flattened height×width image) into a grid of
/// `columns` tiles separated by one-pixel gaps. Every tile is normalized on
/// its own min/max; gaps are written as 0.
std::string encode_pgm_grid(const Matrix& images, int height, int width, int columns);

void write_file(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace vib

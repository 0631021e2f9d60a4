#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <doctest.h>

#include "oracles.hpp"
#include "vib/datagen.hpp"

using namespace vib;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("vib_test_" + name)).string();
}

void write_raw(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size()));
}

std::string bmat_header(std::uint32_t version, std::uint64_t rows, std::uint64_t cols) {
    std::string h = "BMAT";
    h.append(reinterpret_cast<const char*>(&version), 4);
    h.append(reinterpret_cast<const char*>(&rows), 8);
    h.append(reinterpret_cast<const char*>(&cols), 8);
    return h;
}

}  // namespace

TEST_CASE("bar patches: shape, empty sum and determinism") {
    PatchSpec spec;
    spec.seed = 11;
    const Matrix a = generate_bar_patches(spec, 10000);
    CHECK(a.rows() == 10000);
    CHECK(a.cols() == 81);
    CHECK(a == generate_bar_patches(spec, 10000));

    spec.n_bars = 0;
    CHECK(generate_bar_patches(spec, 5).isZero(0.0));

    PatchSpec bad;
    bad.side = 2;
    CHECK_THROWS_AS(generate_bar_patches(bad, 1), InvalidArgument);
    bad = PatchSpec{};
    bad.bar_width = 0.0;
    CHECK_THROWS_AS(generate_bar_patches(bad, 1), InvalidArgument);
}

TEST_CASE("bar patches: single-bar statistics match an independent Monte Carlo") {
    PatchSpec spec;
    spec.n_bars = 1;
    spec.seed = 3;
    const int n = 50000;
    const Matrix P = generate_bar_patches(spec, n);

    // Pixel means vanish: amplitudes are symmetric around zero.
    const Eigen::RowVectorXd pix_sd = (P.array().square().colwise().mean()).sqrt();
    const Eigen::RowVectorXd pix_mean = P.colwise().mean();
    for (Index j = 0; j < P.cols(); ++j) CHECK(std::abs(pix_mean(j)) < 3.0 * pix_sd(j) / std::sqrt(double(n)) + 1e-12);

    const Eigen::VectorXd energy = P.rowwise().squaredNorm();
    const double mean = energy.mean();
    const double se = std::sqrt((energy.array() - mean).square().mean() / n);
    const auto [ref, ref_se] = oracle::mc_bar_energy(9, 1.2, n, 977);
    CHECK(std::abs(mean - ref) < 3.0 * std::hypot(se, ref_se));
}

TEST_CASE("bar patches are sums of their single bars") {
    PatchSpec spec;
    spec.seed = 5;
    const Matrix P = generate_bar_patches(spec, 20);
    const auto bars = draw_bar_params(spec, 20);
    for (Index n = 0; n < 20; ++n) {
        Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(81);
        for (int b = 0; b < 3; ++b) {
            Eigen::RowVectorXd one = Eigen::RowVectorXd::Zero(81);
            const BarParams& p = bars[std::size_t(n * 3 + b)];
            oracle::render_bar(one, 9, p.angle, p.offset, p.amplitude, 1.2);
            sum += one;
        }
        CHECK((P.row(n) - sum).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("white noise: vanishing variance and zero mean") {
    PatchSpec spec;
    spec.seed = 1;
    const Matrix P = generate_bar_patches(spec, 200);
    NoiseSpec tiny;
    tiny.variance = 1e-12;
    CHECK((apply_noise(P, tiny, 9, 2) - P).cwiseAbs().maxCoeff() < 1e-4);

    NoiseSpec white;
    const Matrix X = apply_noise(P, white, 9, 4);
    CHECK(X.rows() == P.rows());
    CHECK(X.cols() == P.cols());
    const Matrix E = X - P;
    const double se = std::sqrt(0.005 / double(E.size()));
    CHECK(std::abs(E.mean()) < 3.0 * se);
    CHECK(std::abs(E.array().square().mean() - 0.005) < 0.005 * 0.05);
    CHECK(X == apply_noise(P, white, 9, 4));

    NoiseSpec bad;
    bad.variance = 0.0;
    CHECK_THROWS_AS(apply_noise(P, bad, 9, 1), InvalidArgument);
}

TEST_CASE("correlated noise: sample covariance matches the envelope") {
    NoiseSpec noise;
    noise.kind = NoiseKind::correlated;
    noise.envelope_std_v = 3.0;
    noise.envelope_std_h = 1.0;
    const int side = 5;
    const Matrix cov = noise_covariance(noise, side);
    CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(cov.diagonal().isConstant(0.005, 1e-15));
    CHECK(cov(0, side) == doctest::Approx(0.005 * std::exp(-1.0 / 18.0)).epsilon(1e-14));
    CHECK(cov(0, 1) == doctest::Approx(0.005 * std::exp(-0.5)).epsilon(1e-14));

    const Index n = 100000;
    const Matrix E = apply_noise(Matrix::Zero(n, side * side), noise, side, 8);
    const oracle::Moments m = oracle::naive_moments(E, E.leftCols(1));
    int outside = 0;
    for (Index p = 0; p < cov.rows(); ++p) {
        for (Index q = 0; q < cov.cols(); ++q) {
            // Var of a product of jointly gaussian entries: σ_pp σ_qq + σ_pq².
            const double se = std::sqrt((cov(p, p) * cov(q, q) + cov(p, q) * cov(p, q)) / double(n));
            if (std::abs(m.Cxx(p, q) - cov(p, q)) > 3.0 * se) ++outside;
        }
    }
    // 3-sigma band: allow the expected ~0.3% of entries outside.
    CHECK(outside <= 6);
}

TEST_CASE("occlusion split geometry and reassembly") {
    PatchSpec spec;
    spec.seed = 9;
    const Matrix P = generate_bar_patches(spec, 30);
    const PairedDataset d = make_occlusion_split(P, 9, 2, 2);
    CHECK(d.dim_x() == 36);
    CHECK(d.dim_y() == 45);
    CHECK(d.X(0, 0) == P(0, 0));
    CHECK(d.X(0, 2) == P(0, 7));
    CHECK(d.Y(0, 0) == P(0, 2));
    const OcclusionLayout lay = occlusion_layout(9, 2, 2);
    CHECK(reassemble_occlusion(d.X, d.Y, lay) == P);

    CHECK_THROWS_AS(make_occlusion_split(P, 9, 0, 0), InvalidArgument);
    CHECK_THROWS_AS(make_occlusion_split(P, 9, 5, 4), InvalidArgument);

    spec.side = 16;
    const PairedDataset h = make_occlusion_split(generate_bar_patches(spec, 4), 16, 8, 0);
    CHECK(h.dim_x() == 128);
    CHECK(h.dim_y() == 128);
}

TEST_CASE("dataset moments") {
    Matrix one(1, 2);
    one << 1, 0;
    const PairedDataset a = dataset_from_pairs(one, one);
    CHECK(a.Cxx(0, 0) == 1.0);
    CHECK(a.Cxx(0, 1) == 0.0);
    CHECK(a.Cxx(1, 1) == 0.0);

    std::mt19937_64 rng(1);
    const Matrix X = oracle::randn(100, 4, rng), Y = oracle::randn(100, 2, rng);
    const PairedDataset d = dataset_from_pairs(X, Y);
    const oracle::Moments m = oracle::naive_moments(X, Y);
    CHECK((d.Cxx - m.Cxx).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((d.Cxy - m.Cxy).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((d.Cyy - m.Cyy).cwiseAbs().maxCoeff() < 1e-12);

    const PairedDataset r = dataset_from_pairs(Y, X);
    CHECK((d.Cxy - r.Cxy.transpose()).cwiseAbs().maxCoeff() < 1e-15);

    const PairedDataset z = dataset_from_pairs(Matrix::Zero(10, 3), Y.topRows(10));
    CHECK(z.Cxx.isZero(0.0));
    CHECK(z.Cxy.isZero(0.0));

    CHECK_THROWS_AS(dataset_from_pairs(X, Y.topRows(5)), InvalidArgument);
}

TEST_CASE("BMAT round trip and malformed files") {
    std::mt19937_64 rng(2);
    const Matrix m = oracle::randn(7, 3, rng).cast<float>().cast<double>();
    const std::string path = temp_path("rt.bmat");
    save_matrix_file(path, m);
    CHECK(load_matrix_file(path) == m);

    save_matrix_file(path, Matrix(0, 5));
    const Matrix e = load_matrix_file(path);
    CHECK(e.rows() == 0);
    CHECK(e.cols() == 5);

    std::string big = bmat_header(1, 4649, 256);
    big.append(std::size_t(4649) * 256 * 4, '\0');
    write_raw(path, big);
    const Matrix usps = load_matrix_file(path);
    CHECK(usps.rows() == 4649);
    CHECK(usps.cols() == 256);

    write_raw(path, "BMAX" + bmat_header(1, 1, 1).substr(4) + std::string(4, '\0'));
    CHECK_THROWS_AS(load_matrix_file(path), IoError);
    write_raw(path, bmat_header(2, 1, 1) + std::string(4, '\0'));
    CHECK_THROWS_AS(load_matrix_file(path), IoError);
    write_raw(path, bmat_header(1, 2, 2) + std::string(12, '\0'));
    CHECK_THROWS_AS(load_matrix_file(path), IoError);
    write_raw(path, bmat_header(1, std::uint64_t(1) << 62, 8));
    CHECK_THROWS_AS(load_matrix_file(path), IoError);
    write_raw(path, "BMA");
    CHECK_THROWS_AS(load_matrix_file(path), IoError);
    CHECK_THROWS_AS(load_matrix_file(temp_path("missing.bmat")), IoError);
    std::remove(path.c_str());
}

TEST_CASE("PGM encoding") {
    Matrix img(2, 3);
    img << 0, 1, 2, 3, 4, 5;
    const std::string pgm = encode_pgm(img);
    const std::string header = "P5\n3 2\n255\n";
    REQUIRE(pgm.size() == header.size() + 6);
    CHECK(pgm.substr(0, header.size()) == header);
    CHECK(static_cast<unsigned char>(pgm[header.size()]) == 0);
    CHECK(static_cast<unsigned char>(pgm.back()) == 255);
    const std::string flat = encode_pgm(Matrix::Constant(2, 2, 7.0));
    CHECK(static_cast<unsigned char>(flat.back()) == 128);
}

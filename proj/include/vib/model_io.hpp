#pragma once

#include <string>

#include "vib/ib_core.hpp"
#include "vib/kernel_ib.hpp"

namespace vib {

enum class EncoderKind { linear, dual };

// Input/target pixel geometry a model was trained on, used for filter images
// and probes.
struct Geometry {
    std::string task;
    int side = 0;
    int left_cols = 0;   // occlusion tasks only
    int right_cols = 0;
};

// Everything needed to encode and decode with a trained model.
struct Model {
    EncoderKind kind = EncoderKind::linear;
    MarginalKind marginal = MarginalKind::gaussian;
    double gamma = 0.0;
    Geometry geometry;
    LinearEncoder linear;  // kind == linear
    DualEncoder dual;      // kind == dual
    Decoder dec;
    Vector omega2;
    Vector nu;

    Index n_units() const { return dec.U.cols(); }
    Index dim_x() const { return kind == EncoderKind::linear ? linear.W.cols() : dual.anchors.cols(); }
    Index dim_y() const { return dec.U.rows(); }
    const Matrix& sigma() const { return kind == EncoderKind::linear ? linear.Sigma : dual.Sigma; }

    /// Mean responses for every row of X.
    Matrix encode(const Matrix& X) const;
    /// Posterior-mean reconstruction U r for every row of R.
    Matrix decode(const Matrix& R) const;
};

Model model_from_fit(const LinearFit& fit, double gamma, const Geometry& geometry);
Model model_from_fit(const KernelFit& fit, double gamma, const Geometry& geometry);

/// JSON document (format "vib-model", version 1); see README.md.
std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text);

void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

}  // namespace vib

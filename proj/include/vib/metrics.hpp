#pragma once

#include <string>
#include <vector>

#include "vib/ib_core.hpp"
#include "vib/kernel_ib.hpp"

namespace vib {

struct InfoPoint {
    double gamma = 0.0;
    double compression_bound = 0.0;  // nats, upper bound on I(R;X)
    double relevance_bound = 0.0;    // nats, lower bound on I(R;Y)
    double objective = 0.0;
    bool ok = true;
    std::string error;
};

struct UnitReport {
    Index unit = 0;
    double signal_fraction = 0.0;
    double variance = 0.0;  // of the mean responses over the data
    double excess_kurtosis = 0.0;
};

/// Relevance bound for any encoder described by its response moments; equals
/// ½log(|C_yy|/|Λ|) at the optimal decoder and 0 for a dead channel.
double relevance_bound(const PairedDataset& data, const ResponseStats& stats, const Matrix& Sigma,
                       const Decoder& dec);
double relevance_bound(const PairedDataset& data, const LinearEncoder& enc, const Decoder& dec);

/// Compression bound in nats with all constants reinstated.
double compression_bound(const ResponseStats& stats, const Matrix& Sigma, const StudentMarginal& marg);
double compression_bound(const LinearEncoder& enc, const PairedDataset& data, const StudentMarginal& marg);

/// Sample excess kurtosis m4/m2² − 3 (population moments).
double excess_kurtosis(const Eigen::Ref<const Vector>& v);

double median(std::vector<double> values);

/// Per-unit reports sorted by response variance, descending. The signal
/// fraction is the unit's mean-response second moment over itself plus σ_i².
std::vector<UnitReport> unit_reports(const ResponseStats& stats, const Matrix& Sigma);
std::vector<UnitReport> unit_reports(const LinearEncoder& enc, const PairedDataset& data);

double median_excess_kurtosis(const std::vector<UnitReport>& reports);

/// ŷ = U r for every row of `responses`.
Matrix reconstruct(const Decoder& dec, const Matrix& responses);

/// Information curve for the linear solvers. `gamma_grid` must be sorted in
/// descending order inside (0, 1); every point warm-starts from the previous
/// successful fit. Failed points are recorded and the sweep continues.
/// `fits`, when given, receives the fit of every successful point.
std::vector<InfoPoint> info_curve(const PairedDataset& data, const BottleneckConfig& cfg,
                                  const std::vector<double>& gamma_grid, std::vector<LinearFit>* fits = nullptr);

/// Same for the dual solvers on a prepared problem.
std::vector<InfoPoint> kernel_info_curve(const PairedDataset& data, const DualProblem& prob, const KrrResult& krr,
                                         const std::vector<Index>& subset, const BottleneckConfig& cfg,
                                         const std::vector<double>& gamma_grid, std::vector<KernelFit>* fits = nullptr);

/// Null model p(r|x) = Normal(x, σ²I) with the optimal linear decoder and a
/// fitted gaussian marginal, one point per σ² (gamma is reported as 0).
std::vector<InfoPoint> null_model_curve(const PairedDataset& data, const std::vector<double>& sigma2_grid);

/// σ² values log-spaced over [1e-4, 1e2]·mean input variance.
std::vector<double> default_null_grid(const PairedDataset& data, int points = 9);

struct OrientationHistogram {
    std::vector<double> weights;  // bin b centred on b·π/bins
    std::vector<double> unit_angle;  // per filter, NaN when skipped
};

/// Dominant orientation of a height×width filter (radians in [0, π),
/// 0 = horizontal, counter-clockwise with y up): argmax of the orientation
/// energy of the tapered filter's power spectrum, sampled along each
/// candidate's normal. NaN when the filter energy is below 1e-12.
double dominant_orientation(const Eigen::Ref<const RowVector>& filter, int height, int width);

/// Response-variance weighted histogram of decoding-filter orientations.
/// `filters` holds one flattened filter per row (e.g. Uᵀ).
OrientationHistogram orientation_distribution(const Matrix& filters, int height, int width, const Vector& weights,
                                              int bins = 18);

/// Bin with the smallest weight. When several bins share it, the middle of
/// the longest circular run of such bins (lower middle for even runs; the
/// earliest run on equal lengths). A flat histogram gives 0.
int histogram_min_bin(const std::vector<double>& weights);

}  // namespace vib

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vib/datagen.hpp"
#include "vib/ib_core.hpp"
#include "vib/kernel_ib.hpp"
#include "vib/metrics.hpp"
#include "vib/model_io.hpp"

namespace vib {

enum class Task { denoise, denoise_correlated, occlusion_bars, occlusion_digits };
enum class ModelType { gaussian_ib, sparse_ib, gaussian_kib, sparse_kib, null_model };

const char* to_string(Task t);
const char* to_string(ModelType m);
bool is_kernel(ModelType m);

struct DataConfig {
    Index n_train = 2000;
    Index n_holdout = 500;
    PatchSpec patch;
    NoiseSpec noise;
    int left_cols = 2;
    int right_cols = 2;
    std::string train_file;  // occlusion_digits: BMAT, one 16×16 image per row
    std::string test_file;
};

struct KernelSettings {
    Index subset_size = 300;
    KernelGrid grid;
};

// Bar segments shown to a trained model. The bar is rendered over the full
// patch; the left/right segments keep only the input columns on that side.
struct ProbeSpec {
    double angle = 0.0;
    double offset = 0.0;
    double amplitude = 1.5;
    double bar_width = 1.2;
};

struct ExperimentConfig {
    std::string name;
    Task task = Task::denoise;
    ModelType model = ModelType::sparse_ib;
    std::uint64_t seed = 1;
    DataConfig data;
    BottleneckConfig bottleneck;
    std::vector<double> gamma_grid;  // descending; empty: no sweep
    bool has_kernel = false;
    KernelSettings kernel;
    std::vector<double> null_grid;  // null model σ² values; empty: default
    ProbeSpec probe;
};

/// Parses and validates a JSON experiment config. Errors name the offending
/// path, e.g. "$.bottleneck.gamma: must lie in (0, 1)".
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);

std::vector<std::string> preset_names();
/// Preset as JSON text; throws ConfigError for unknown names.
std::string preset_json(const std::string& name);
ExperimentConfig preset_config(const std::string& name);

/// Applies an RFC 7386 merge patch (JSON text) to a config document.
std::string merge_config_json(const std::string& base, const std::string& patch);

struct ExperimentData {
    PairedDataset train;
    PairedDataset holdout;
    Geometry geometry;
    // Filter image shapes: X and Y pixels as height×width images.
    int x_height = 0, x_width = 0, y_height = 0, y_width = 0;
};

ExperimentData build_data(const ExperimentConfig& cfg);

struct ProbeResult {
    Matrix stimuli;         // 3×(side²): left only, right only, both
    Matrix inputs;          // 3×D_x
    Matrix reconstruction;  // 3×D_y
    Vector energy;          // ‖ŷ‖² per stimulus
    std::vector<Index> top_units;
    Matrix unit_responses;  // 3×top_units.size()
};

ProbeResult probe_model(const Model& model, const ProbeSpec& probe);

struct RunSummary {
    bool ok = false;
    std::string failure_stage;
    std::string error;
    double relevance = 0.0;
    double compression = 0.0;
    double objective = 0.0;
    double median_kurtosis = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<InfoPoint> curve;
    std::vector<UnitReport> units;
    OrientationHistogram orientation;
    ProbeResult probe;
    std::vector<std::string> files;
};

/// Runs one experiment, writing artifacts and manifest.json into out_dir.
/// Sub-errors abort the run after the manifest records the failing stage;
/// the original exception is rethrown.
RunSummary run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

/// Writes train/holdout X and Y as BMAT files.
std::vector<std::string> generate_data(const ExperimentConfig& cfg, const std::string& out_dir);

/// Recomputes units.csv, orientation.csv and decoders.pgm for a finished run.
void report_run(const std::string& run_dir);

/// Loads a model file, probes it and writes probe_stimuli.pgm,
/// probe_recon.pgm and probe_stats.csv into out_dir.
ProbeResult probe_reconstruction(const std::string& model_path, const ProbeSpec& probe, const std::string& out_dir);
ProbeSpec probe_from_json(const std::string& text);

/// Merges the information curves of runs sharing task and data seed into
/// comparison.csv and per-model kurtosis into kurtosis_summary.csv.
void compare_runs(const std::vector<std::string>& run_dirs, const std::string& out_dir);

std::string info_curve_csv(const std::vector<InfoPoint>& curve, const char* key = "gamma");
std::string units_csv(const std::vector<UnitReport>& units);

}  // namespace vib

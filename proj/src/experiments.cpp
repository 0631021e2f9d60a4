#include "vib/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "vib/version.hpp"

namespace vib {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(Task t) {
    switch (t) {
        case Task::denoise: return "denoise";
        case Task::denoise_correlated: return "denoise_correlated";
        case Task::occlusion_bars: return "occlusion_bars";
        case Task::occlusion_digits: return "occlusion_digits";
    }
    return "?";
}

const char* to_string(ModelType m) {
    switch (m) {
        case ModelType::gaussian_ib: return "gaussian_ib";
        case ModelType::sparse_ib: return "sparse_ib";
        case ModelType::gaussian_kib: return "gaussian_kib";
        case ModelType::sparse_kib: return "sparse_kib";
        case ModelType::null_model: return "null";
    }
    return "?";
}

bool is_kernel(ModelType m) { return m == ModelType::gaussian_kib || m == ModelType::sparse_kib; }

namespace {

bool is_occlusion(Task t) { return t == Task::occlusion_bars || t == Task::occlusion_digits; }

// ---------------------------------------------------------------- config

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) fail(path, "must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) known = known || it.key() == k;
        if (!known) fail(path + "." + it.key(), "unknown key");
    }
}

const json* find(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() || it->is_null() ? nullptr : &*it;
}

double number(const json& obj, const std::string& path, const char* key, double fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_number()) fail(path + "." + key, "must be a number");
    const double x = v->get<double>();
    if (!std::isfinite(x)) fail(path + "." + key, "must be finite");
    return x;
}

std::int64_t integer(const json& obj, const std::string& path, const char* key, std::int64_t fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_number_integer()) fail(path + "." + key, "must be an integer");
    return v->get<std::int64_t>();
}

std::string text(const json& obj, const std::string& path, const char* key, const std::string& fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_string()) fail(path + "." + key, "must be a string");
    return v->get<std::string>();
}

std::vector<double> numbers(const json& obj, const std::string& path, const char* key) {
    const json* v = find(obj, key);
    if (!v) return {};
    if (!v->is_array()) fail(path + "." + key, "must be an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
        const json& e = v->at(i);
        if (!e.is_number() || !std::isfinite(e.get<double>()))
            fail(path + "." + key + "[" + std::to_string(i) + "]", "must be a finite number");
        out.push_back(e.get<double>());
    }
    return out;
}

void require(bool ok, const std::string& path, const std::string& what) {
    if (!ok) fail(path, what);
}

Task parse_task(const std::string& s) {
    if (s == "denoise") return Task::denoise;
    if (s == "denoise_correlated") return Task::denoise_correlated;
    if (s == "occlusion_bars") return Task::occlusion_bars;
    if (s == "occlusion_digits") return Task::occlusion_digits;
    fail("$.task", "unknown task '" + s + "'");
}

ModelType parse_model(const std::string& s) {
    if (s == "gaussian_ib") return ModelType::gaussian_ib;
    if (s == "sparse_ib") return ModelType::sparse_ib;
    if (s == "gaussian_kib") return ModelType::gaussian_kib;
    if (s == "sparse_kib") return ModelType::sparse_kib;
    if (s == "null") return ModelType::null_model;
    fail("$.model", "unknown model '" + s + "'");
}

json config_document(const ExperimentConfig& c) {
    json doc;
    doc["name"] = c.name;
    doc["task"] = to_string(c.task);
    doc["model"] = to_string(c.model);
    doc["seed"] = c.seed;
    json data = {{"n_train", c.data.n_train},
                 {"n_holdout", c.data.n_holdout},
                 {"side", c.data.patch.side},
                 {"n_bars", c.data.patch.n_bars},
                 {"bar_width", c.data.patch.bar_width},
                 {"amplitude_std", c.data.patch.amplitude_std}};
    if (c.task == Task::denoise || c.task == Task::denoise_correlated) {
        data["noise"] = {{"variance", c.data.noise.variance}};
        if (c.task == Task::denoise_correlated) {
            data["noise"]["envelope_std_v"] = c.data.noise.envelope_std_v;
            data["noise"]["envelope_std_h"] = c.data.noise.envelope_std_h;
        }
    }
    if (is_occlusion(c.task)) {
        data["left_cols"] = c.data.left_cols;
        data["right_cols"] = c.data.right_cols;
    }
    if (c.task == Task::occlusion_digits) {
        data["train_file"] = c.data.train_file;
        data["test_file"] = c.data.test_file;
    }
    doc["data"] = data;
    doc["bottleneck"] = {{"gamma", c.bottleneck.gamma},
                         {"n_units", c.bottleneck.n_units},
                         {"max_iters", c.bottleneck.max_iters},
                         {"rel_tol", c.bottleneck.rel_tol},
                         {"dense_limit", c.bottleneck.dense_limit}};
    doc["gamma_grid"] = c.gamma_grid;
    if (c.has_kernel) {
        doc["kernel"] = {{"subset_size", c.kernel.subset_size},
                         {"kappa_grid", c.kernel.grid.kappas},
                         {"lambda_grid", c.kernel.grid.lambdas}};
    }
    if (c.model == ModelType::null_model) doc["null_sigma2_grid"] = c.null_grid;
    doc["probe"] = {{"angle_deg", c.probe.angle * 180.0 / std::numbers::pi},
                    {"offset", c.probe.offset},
                    {"amplitude", c.probe.amplitude},
                    {"bar_width", c.probe.bar_width}};
    return doc;
}

ProbeSpec parse_probe(const json& p, const std::string& path) {
    check_keys(p, path, {"angle_deg", "offset", "amplitude", "bar_width"});
    ProbeSpec s;
    s.angle = number(p, path, "angle_deg", 0.0) * std::numbers::pi / 180.0;
    s.offset = number(p, path, "offset", s.offset);
    s.amplitude = number(p, path, "amplitude", s.amplitude);
    s.bar_width = number(p, path, "bar_width", s.bar_width);
    require(s.bar_width > 0, path + ".bar_width", "must be > 0");
    return s;
}

ExperimentConfig parse_config(const json& doc) {
    check_keys(doc, "$",
               {"name", "task", "model", "seed", "data", "bottleneck", "gamma_grid", "kernel", "null_sigma2_grid",
                "probe"});
    ExperimentConfig c;
    c.name = text(doc, "$", "name", "");
    if (!find(doc, "task")) fail("$.task", "required");
    if (!find(doc, "model")) fail("$.model", "required");
    c.task = parse_task(text(doc, "$", "task", ""));
    c.model = parse_model(text(doc, "$", "model", ""));
    if (const json* s = find(doc, "seed")) {
        if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<std::int64_t>() >= 0))
            fail("$.seed", "must be a non-negative integer");
        c.seed = s->get<std::uint64_t>();
    }

    const json empty = json::object();
    const json& d = find(doc, "data") ? doc.at("data") : empty;
    check_keys(d, "$.data",
               {"n_train", "n_holdout", "side", "n_bars", "bar_width", "amplitude_std", "noise", "left_cols",
                "right_cols", "train_file", "test_file"});
    c.data.n_train = integer(d, "$.data", "n_train", c.data.n_train);
    c.data.n_holdout = integer(d, "$.data", "n_holdout", c.data.n_holdout);
    require(c.data.n_train >= 1, "$.data.n_train", "must be >= 1");
    require(c.data.n_holdout >= 1, "$.data.n_holdout", "must be >= 1");
    c.data.patch.side = int(integer(d, "$.data", "side", c.task == Task::occlusion_digits ? 16 : 9));
    c.data.patch.n_bars = int(integer(d, "$.data", "n_bars", c.data.patch.n_bars));
    c.data.patch.bar_width = number(d, "$.data", "bar_width", c.data.patch.bar_width);
    c.data.patch.amplitude_std = number(d, "$.data", "amplitude_std", c.data.patch.amplitude_std);
    require(c.data.patch.side >= 2, "$.data.side", "must be >= 2");
    require(c.data.patch.n_bars >= 1, "$.data.n_bars", "must be >= 1");
    require(c.data.patch.bar_width > 0, "$.data.bar_width", "must be > 0");
    require(c.data.patch.amplitude_std > 0, "$.data.amplitude_std", "must be > 0");

    const bool noisy = c.task == Task::denoise || c.task == Task::denoise_correlated;
    c.data.noise.kind = c.task == Task::denoise_correlated ? NoiseKind::correlated : NoiseKind::white;
    if (const json* n = find(d, "noise")) {
        if (!noisy) fail("$.data.noise", "only denoising tasks take a noise block");
        if (c.task == Task::denoise_correlated)
            check_keys(*n, "$.data.noise", {"variance", "envelope_std_v", "envelope_std_h"});
        else
            check_keys(*n, "$.data.noise", {"variance"});
        c.data.noise.variance = number(*n, "$.data.noise", "variance", c.data.noise.variance);
        c.data.noise.envelope_std_v = number(*n, "$.data.noise", "envelope_std_v", c.data.noise.envelope_std_v);
        c.data.noise.envelope_std_h = number(*n, "$.data.noise", "envelope_std_h", c.data.noise.envelope_std_h);
        require(c.data.noise.variance > 0, "$.data.noise.variance", "must be > 0");
        require(c.data.noise.envelope_std_v > 0, "$.data.noise.envelope_std_v", "must be > 0");
        require(c.data.noise.envelope_std_h > 0, "$.data.noise.envelope_std_h", "must be > 0");
    }

    if (is_occlusion(c.task)) {
        c.data.left_cols = int(integer(d, "$.data", "left_cols", c.data.left_cols));
        c.data.right_cols = int(integer(d, "$.data", "right_cols", c.data.right_cols));
        require(c.data.left_cols >= 0, "$.data.left_cols", "must be >= 0");
        require(c.data.right_cols >= 0, "$.data.right_cols", "must be >= 0");
        require(c.data.left_cols + c.data.right_cols >= 1, "$.data.left_cols",
                "left_cols + right_cols must be >= 1");
        require(c.data.left_cols + c.data.right_cols < c.data.patch.side, "$.data.right_cols",
                "left_cols + right_cols must leave at least one central column");
    } else {
        if (find(d, "left_cols")) fail("$.data.left_cols", "only occlusion tasks take column counts");
        if (find(d, "right_cols")) fail("$.data.right_cols", "only occlusion tasks take column counts");
        c.data.left_cols = c.data.right_cols = 0;
    }
    if (c.task == Task::occlusion_digits) {
        c.data.train_file = text(d, "$.data", "train_file", "");
        c.data.test_file = text(d, "$.data", "test_file", "");
        require(!c.data.train_file.empty(), "$.data.train_file", "required for occlusion_digits");
        require(!c.data.test_file.empty(), "$.data.test_file", "required for occlusion_digits");
    } else {
        if (find(d, "train_file")) fail("$.data.train_file", "only occlusion_digits reads data files");
        if (find(d, "test_file")) fail("$.data.test_file", "only occlusion_digits reads data files");
    }

    const json& b = find(doc, "bottleneck") ? doc.at("bottleneck") : empty;
    check_keys(b, "$.bottleneck", {"gamma", "n_units", "max_iters", "rel_tol", "dense_limit"});
    c.bottleneck.gamma = number(b, "$.bottleneck", "gamma", c.bottleneck.gamma);
    c.bottleneck.n_units = int(integer(b, "$.bottleneck", "n_units", c.bottleneck.n_units));
    c.bottleneck.max_iters = int(integer(b, "$.bottleneck", "max_iters", c.bottleneck.max_iters));
    c.bottleneck.rel_tol = number(b, "$.bottleneck", "rel_tol", c.bottleneck.rel_tol);
    c.bottleneck.dense_limit = integer(b, "$.bottleneck", "dense_limit", c.bottleneck.dense_limit);
    require(c.bottleneck.gamma > 0 && c.bottleneck.gamma < 1, "$.bottleneck.gamma", "must lie in (0, 1)");
    require(c.bottleneck.n_units >= 1, "$.bottleneck.n_units", "must be >= 1");
    require(c.bottleneck.max_iters >= 1, "$.bottleneck.max_iters", "must be >= 1");
    require(c.bottleneck.rel_tol > 0, "$.bottleneck.rel_tol", "must be > 0");
    require(c.bottleneck.dense_limit >= 0, "$.bottleneck.dense_limit", "must be >= 0");
    c.bottleneck.seed = c.seed;
    c.bottleneck.marginal = c.model == ModelType::sparse_ib || c.model == ModelType::sparse_kib
                                ? MarginalKind::student
                                : MarginalKind::gaussian;

    c.gamma_grid = numbers(doc, "$", "gamma_grid");
    for (std::size_t k = 0; k < c.gamma_grid.size(); ++k) {
        const std::string p = "$.gamma_grid[" + std::to_string(k) + "]";
        require(c.gamma_grid[k] > 0 && c.gamma_grid[k] < 1, p, "must lie in (0, 1)");
        if (k) require(c.gamma_grid[k] < c.gamma_grid[k - 1], p, "grid must be strictly descending");
    }
    if (c.model == ModelType::null_model && !c.gamma_grid.empty())
        fail("$.gamma_grid", "the null model takes null_sigma2_grid instead");

    c.has_kernel = find(doc, "kernel") != nullptr;
    if (is_kernel(c.model) && !c.has_kernel) fail("$.kernel", "required for kernelized models");
    if (!is_kernel(c.model) && c.has_kernel) fail("$.kernel", "only kernelized models take a kernel block");
    if (c.has_kernel) {
        const json& k = doc.at("kernel");
        check_keys(k, "$.kernel", {"subset_size", "kappa_grid", "lambda_grid"});
        c.kernel.subset_size = integer(k, "$.kernel", "subset_size", c.kernel.subset_size);
        require(c.kernel.subset_size >= 1, "$.kernel.subset_size", "must be >= 1");
        require(c.kernel.subset_size <= c.data.n_train, "$.kernel.subset_size", "must not exceed data.n_train");
        c.kernel.grid.kappas = numbers(k, "$.kernel", "kappa_grid");
        c.kernel.grid.lambdas = numbers(k, "$.kernel", "lambda_grid");
        for (std::size_t i = 0; i < c.kernel.grid.kappas.size(); ++i)
            require(c.kernel.grid.kappas[i] > 0, "$.kernel.kappa_grid[" + std::to_string(i) + "]", "must be > 0");
        for (std::size_t i = 0; i < c.kernel.grid.lambdas.size(); ++i)
            require(c.kernel.grid.lambdas[i] > 0, "$.kernel.lambda_grid[" + std::to_string(i) + "]", "must be > 0");
    }

    c.null_grid = numbers(doc, "$", "null_sigma2_grid");
    if (c.model != ModelType::null_model && !c.null_grid.empty())
        fail("$.null_sigma2_grid", "only the null model takes a noise grid");
    for (std::size_t i = 0; i < c.null_grid.size(); ++i)
        require(c.null_grid[i] > 0, "$.null_sigma2_grid[" + std::to_string(i) + "]", "must be > 0");

    if (const json* p = find(doc, "probe")) c.probe = parse_probe(*p, "$.probe");
    return c;
}

const std::map<std::string, std::string>& presets() {
    static const std::map<std::string, std::string> table = {
        {"denoise_desk", R"({
  "name": "denoise_desk", "task": "denoise", "model": "sparse_ib", "seed": 1,
  "data": {"n_train": 2000, "n_holdout": 500, "noise": {"variance": 0.005}},
  "bottleneck": {"gamma": 0.3, "n_units": 40, "max_iters": 1000, "rel_tol": 1e-7},
  "gamma_grid": [0.7, 0.5, 0.3, 0.2, 0.1]
})"},
        {"denoise", R"({
  "name": "denoise", "task": "denoise", "model": "sparse_ib", "seed": 1,
  "data": {"n_train": 10000, "n_holdout": 2000, "noise": {"variance": 0.005}},
  "bottleneck": {"gamma": 0.3, "n_units": 81, "max_iters": 500, "rel_tol": 1e-7},
  "gamma_grid": [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05]
})"},
        {"denoise_null", R"({
  "name": "denoise_null", "task": "denoise", "model": "null", "seed": 1,
  "data": {"n_train": 2000, "n_holdout": 500, "noise": {"variance": 0.005}}
})"},
        {"denoise_correlated_desk", R"({
  "name": "denoise_correlated_desk", "task": "denoise_correlated", "model": "sparse_ib", "seed": 1,
  "data": {"n_train": 2000, "n_holdout": 500,
           "noise": {"variance": 0.005, "envelope_std_v": 3.0, "envelope_std_h": 1.0}},
  "bottleneck": {"gamma": 0.7, "n_units": 40, "max_iters": 1500, "rel_tol": 1e-7}
})"},
        {"denoise_correlated", R"({
  "name": "denoise_correlated", "task": "denoise_correlated", "model": "sparse_ib", "seed": 1,
  "data": {"n_train": 10000, "n_holdout": 2000,
           "noise": {"variance": 0.005, "envelope_std_v": 3.0, "envelope_std_h": 1.0}},
  "bottleneck": {"gamma": 0.7, "n_units": 81, "max_iters": 3000, "rel_tol": 1e-7}
})"},
        {"occlusion_bars_desk", R"({
  "name": "occlusion_bars_desk", "task": "occlusion_bars", "model": "sparse_kib", "seed": 1,
  "data": {"n_train": 2000, "n_holdout": 1000, "left_cols": 2, "right_cols": 2},
  "bottleneck": {"gamma": 0.3, "n_units": 40, "max_iters": 200, "rel_tol": 1e-6},
  "kernel": {"subset_size": 300},
  "probe": {"angle_deg": 0.0, "offset": 0.0, "amplitude": 1.5, "bar_width": 1.2}
})"},
        {"occlusion_bars", R"({
  "name": "occlusion_bars", "task": "occlusion_bars", "model": "sparse_kib", "seed": 1,
  "data": {"n_train": 10000, "n_holdout": 10000, "left_cols": 2, "right_cols": 2},
  "bottleneck": {"gamma": 0.3, "n_units": 40, "max_iters": 500, "rel_tol": 1e-7},
  "kernel": {"subset_size": 1000}
})"},
        {"occlusion_digits", R"({
  "name": "occlusion_digits", "task": "occlusion_digits", "model": "sparse_kib", "seed": 1,
  "data": {"n_train": 4649, "n_holdout": 4649, "side": 16, "left_cols": 8, "right_cols": 0,
           "train_file": "usps_train.bmat", "test_file": "usps_test.bmat"},
  "bottleneck": {"gamma": 0.3, "n_units": 40, "max_iters": 500, "rel_tol": 1e-7},
  "kernel": {"subset_size": 500}
})"},
    };
    return table;
}

json parse_json(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string(what) + ": not valid JSON: " + e.what());
    }
}

// ---------------------------------------------------------------- output

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

// Writes one artifact and remembers its name for the manifest.
struct Artifacts {
    fs::path dir;
    std::vector<std::pair<std::string, std::string>> files;  // name, hash

    void put(const std::string& name, const std::string& bytes) {
        write_file((dir / name).string(), bytes);
        files.erase(std::remove_if(files.begin(), files.end(), [&](const auto& f) { return f.first == name; }),
                    files.end());
        files.emplace_back(name, fnv1a64_hex(bytes));
    }

    json listing() const {
        auto sorted = files;
        std::sort(sorted.begin(), sorted.end());
        json out = json::array();
        for (const auto& [name, hash] : sorted) out.push_back({{"name", name}, {"fnv1a64", hash}});
        return out;
    }
};

void make_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

// Response moments of a trained model on the given inputs.
ResponseStats model_stats(const Model& m, const Matrix& X) {
    ResponseStats s;
    s.mean = m.encode(X);
    if (m.kind == EncoderKind::linear) {
        s.extra = Matrix::Zero(m.n_units(), m.n_units());
    } else {
        const Matrix Kmm = gram_matrix(m.dual.anchors, m.dual.anchors, m.dual.kernel.kappa);
        s.extra = (m.dual.kernel.lambda / double(X.rows())) * (m.dual.A * Kmm * m.dual.A.transpose());
        symmetrize(s.extra);
    }
    return s;
}

struct FilterShape {
    int x_h, x_w, y_h, y_w;
};

FilterShape filter_shape(const Geometry& g) {
    if (g.left_cols + g.right_cols == 0) return {g.side, g.side, g.side, g.side};
    return {g.side, g.left_cols + g.right_cols, g.side, g.side - g.left_cols - g.right_cols};
}

std::string orientation_csv(const OrientationHistogram& h) {
    std::ostringstream out;
    out << "bin,center_deg,weight\n";
    const int bins = int(h.weights.size());
    for (int b = 0; b < bins; ++b) out << b << "," << fmt(180.0 * b / bins) << "," << fmt(h.weights[std::size_t(b)]) << "\n";
    return out.str();
}

struct UnitArtifacts {
    std::vector<UnitReport> units;
    OrientationHistogram orientation;
    double median_kurtosis = 0.0;
};

// units.csv, orientation.csv and the filter images for a trained model.
UnitArtifacts write_unit_artifacts(const Model& m, const Matrix& X_train, Artifacts& out) {
    UnitArtifacts ua;
    const ResponseStats stats = model_stats(m, X_train);
    ua.units = unit_reports(stats, m.sigma());
    ua.median_kurtosis = median_excess_kurtosis(ua.units);
    out.put("units.csv", units_csv(ua.units));

    const FilterShape fs = filter_shape(m.geometry);
    Vector weights(m.n_units());
    for (const auto& r : ua.units) weights(r.unit) = r.variance;
    // Filters in unit-report order, strongest first.
    Matrix decoders(m.n_units(), m.dim_y());
    for (std::size_t k = 0; k < ua.units.size(); ++k) decoders.row(Index(k)) = m.dec.U.col(ua.units[k].unit).transpose();
    const int columns = int(std::ceil(std::sqrt(double(m.n_units()))));
    out.put("decoders.pgm", encode_pgm_grid(decoders, fs.y_h, fs.y_w, columns));
    if (m.kind == EncoderKind::linear) {
        Matrix encoders(m.n_units(), m.dim_x());
        for (std::size_t k = 0; k < ua.units.size(); ++k) encoders.row(Index(k)) = m.linear.W.row(ua.units[k].unit);
        out.put("encoders.pgm", encode_pgm_grid(encoders, fs.x_h, fs.x_w, columns));
    }
    ua.orientation = orientation_distribution(m.dec.U.transpose(), fs.y_h, fs.y_w, weights);
    out.put("orientation.csv", orientation_csv(ua.orientation));
    return ua;
}

std::string probe_stats_csv(const ProbeResult& p) {
    std::ostringstream out;
    out << "stimulus,central_energy";
    for (Index u : p.top_units) out << ",unit_" << u;
    out << "\n";
    const char* names[3] = {"left", "right", "both"};
    for (int s = 0; s < 3; ++s) {
        out << names[s] << "," << fmt(p.energy(s));
        for (Index k = 0; k < p.unit_responses.cols(); ++k) out << "," << fmt(p.unit_responses(s, k));
        out << "\n";
    }
    return out.str();
}

void write_probe_artifacts(const Model& m, const ProbeResult& p, Artifacts& out) {
    const int side = m.geometry.side;
    Matrix recon_images(3, Index(side) * side);
    if (m.geometry.left_cols + m.geometry.right_cols > 0) {
        const OcclusionLayout layout = occlusion_layout(side, m.geometry.left_cols, m.geometry.right_cols);
        recon_images = reassemble_occlusion(p.inputs, p.reconstruction, layout);
    } else {
        recon_images = p.reconstruction;
    }
    out.put("probe_stimuli.pgm", encode_pgm_grid(p.stimuli, side, side, 3));
    out.put("probe_recon.pgm", encode_pgm_grid(recon_images, side, side, 3));
    out.put("probe_stats.csv", probe_stats_csv(p));
}

json summary_json(const RunSummary& s) {
    return {{"relevance_nats", s.relevance},
            {"compression_nats", s.compression},
            {"objective", s.objective},
            {"median_excess_kurtosis", s.median_kurtosis},
            {"iterations", s.iterations},
            {"converged", s.converged}};
}

void write_manifest(const fs::path& dir, const json& config, const ExperimentConfig* cfg, const Artifacts& art,
                    const RunSummary& s, double seconds) {
    json m;
    m["format"] = "vib-run";
    m["version"] = kVersion;
    if (cfg) {
        m["name"] = cfg->name;
        m["task"] = to_string(cfg->task);
        m["model"] = to_string(cfg->model);
        m["seed"] = cfg->seed;
    }
    m["status"] = s.ok ? "ok" : "failed";
    if (!s.ok) {
        m["failure_stage"] = s.failure_stage;
        m["error"] = s.error;
    }
    m["wall_time_s"] = seconds;
    m["config"] = config;
    if (s.ok && cfg && cfg->model != ModelType::null_model) m["summary"] = summary_json(s);
    m["files"] = art.listing();
    write_file((dir / "manifest.json").string(), m.dump(1) + "\n");
}

Geometry geometry_of(const ExperimentConfig& cfg) {
    return Geometry{to_string(cfg.task), cfg.data.patch.side, cfg.data.left_cols, cfg.data.right_cols};
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        rows.push_back(split_line(line));
    }
    if (rows.empty()) throw IoError("'" + path + "' is empty");
    for (const auto& r : rows)
        if (r.size() != rows[0].size()) throw IoError("'" + path + "' has ragged rows");
    return rows;
}

json read_manifest(const std::string& dir) {
    const std::string path = (fs::path(dir) / "manifest.json").string();
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw IoError("'" + path + "' is not valid JSON: " + e.what());
    }
}

}  // namespace

// ---------------------------------------------------------------- public

ExperimentConfig config_from_json(const std::string& text) {
    const json doc = parse_json(text, "config");
    try {
        return parse_config(doc);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

std::string config_to_json(const ExperimentConfig& cfg) { return config_document(cfg).dump(1) + "\n"; }

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (const auto& [k, v] : presets()) names.push_back(k);
    return names;
}

std::string preset_json(const std::string& name) {
    auto it = presets().find(name);
    if (it == presets().end()) throw ConfigError("unknown preset '" + name + "'");
    return it->second;
}

ExperimentConfig preset_config(const std::string& name) { return config_from_json(preset_json(name)); }

std::string merge_config_json(const std::string& base, const std::string& patch) {
    json doc = parse_json(base, "config");
    doc.merge_patch(parse_json(patch, "config override"));
    return doc.dump(1) + "\n";
}

ExperimentData build_data(const ExperimentConfig& cfg) {
    ExperimentData out;
    out.geometry = geometry_of(cfg);
    const int side = cfg.data.patch.side;
    const Index n = cfg.data.n_train, nh = cfg.data.n_holdout;
    if (cfg.task == Task::occlusion_digits) {
        const Matrix train = load_matrix_file(cfg.data.train_file);
        const Matrix test = load_matrix_file(cfg.data.test_file);
        for (const Matrix* m : {&train, &test}) {
            if (m->cols() != Index(side) * side)
                throw ConfigError("digits files must hold " + std::to_string(side * side) + " pixels per row");
        }
        if (train.rows() < n) throw ConfigError("$.data.n_train: exceeds the rows of the training file");
        if (test.rows() < nh) throw ConfigError("$.data.n_holdout: exceeds the rows of the test file");
        out.train = make_occlusion_split(train.topRows(n), side, cfg.data.left_cols, cfg.data.right_cols);
        out.holdout = make_occlusion_split(test.topRows(nh), side, cfg.data.left_cols, cfg.data.right_cols);
    } else {
        PatchSpec spec = cfg.data.patch;
        spec.seed = cfg.seed;
        const Matrix patches = generate_bar_patches(spec, n + nh);
        if (is_occlusion(cfg.task)) {
            out.train = make_occlusion_split(patches.topRows(n), side, cfg.data.left_cols, cfg.data.right_cols);
            out.holdout = make_occlusion_split(patches.bottomRows(nh), side, cfg.data.left_cols, cfg.data.right_cols);
        } else {
            const Matrix noisy = apply_noise(patches, cfg.data.noise, side, cfg.seed + 0x9e3779b97f4a7c15ULL);
            out.train = dataset_from_pairs(noisy.topRows(n), patches.topRows(n));
            out.holdout = dataset_from_pairs(noisy.bottomRows(nh), patches.bottomRows(nh));
        }
    }
    const FilterShape fs = filter_shape(out.geometry);
    out.x_height = fs.x_h;
    out.x_width = fs.x_w;
    out.y_height = fs.y_h;
    out.y_width = fs.y_w;
    return out;
}

ProbeResult probe_model(const Model& model, const ProbeSpec& probe) {
    const Geometry& g = model.geometry;
    const int side = g.side;
    if (side < 2) throw InvalidArgument("probe: model geometry has no patch side");
    const bool occlusion = g.left_cols + g.right_cols > 0;
    const Index pixels = Index(side) * side;
    const Index expected_x = occlusion ? Index(side) * (g.left_cols + g.right_cols) : pixels;
    if (model.dim_x() != expected_x) throw InvalidArgument("probe: geometry does not match the model input dimension");

    RowVector bar = RowVector::Zero(pixels);
    add_bar(bar, side, BarParams{probe.angle, probe.offset, probe.amplitude}, probe.bar_width);

    // Columns belonging to each segment.
    const int left_end = occlusion ? g.left_cols : side / 2;
    const int right_begin = occlusion ? side - g.right_cols : side - side / 2;
    ProbeResult p;
    p.stimuli = Matrix::Zero(3, pixels);
    for (int v = 0; v < side; ++v) {
        for (int h = 0; h < side; ++h) {
            const Index i = Index(v) * side + h;
            if (h < left_end) p.stimuli(0, i) = p.stimuli(2, i) = bar(i);
            if (h >= right_begin) p.stimuli(1, i) = p.stimuli(2, i) = bar(i);
        }
    }
    if (occlusion) {
        const OcclusionLayout layout = occlusion_layout(side, g.left_cols, g.right_cols);
        p.inputs.resize(3, Index(layout.x_pixels.size()));
        for (Index k = 0; k < p.inputs.cols(); ++k) p.inputs.col(k) = p.stimuli.col(layout.x_pixels[std::size_t(k)]);
    } else {
        p.inputs = p.stimuli;
    }
    const Matrix responses = model.encode(p.inputs);
    p.reconstruction = model.decode(responses);
    p.energy = p.reconstruction.rowwise().squaredNorm();

    std::vector<Index> order(std::size_t(model.n_units()));
    for (Index i = 0; i < model.n_units(); ++i) order[std::size_t(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return std::abs(responses(2, a)) > std::abs(responses(2, b));
    });
    order.resize(std::min<std::size_t>(2, order.size()));
    p.top_units = order;
    p.unit_responses.resize(3, Index(order.size()));
    for (std::size_t k = 0; k < order.size(); ++k) p.unit_responses.col(Index(k)) = responses.col(order[k]);
    return p;
}

std::string info_curve_csv(const std::vector<InfoPoint>& curve, const char* key) {
    std::ostringstream out;
    out << key << ",compression_nats,relevance_nats,objective\n";
    for (const auto& pt : curve) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        out << fmt(pt.gamma) << "," << fmt(pt.ok ? pt.compression_bound : nan) << ","
            << fmt(pt.ok ? pt.relevance_bound : nan) << "," << fmt(pt.ok ? pt.objective : nan) << "\n";
    }
    return out.str();
}

std::string units_csv(const std::vector<UnitReport>& units) {
    std::ostringstream out;
    out << "unit,variance,signal_fraction,excess_kurtosis\n";
    for (const auto& u : units)
        out << u.unit << "," << fmt(u.variance) << "," << fmt(u.signal_fraction) << "," << fmt(u.excess_kurtosis)
            << "\n";
    return out.str();
}

RunSummary run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    const auto start = std::chrono::steady_clock::now();
    make_dir(out_dir);
    Artifacts art{fs::path(out_dir), {}};
    const json config = config_document(cfg);
    RunSummary s;
    std::string stage = "data";
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
    try {
        art.put("config.json", config.dump(1) + "\n");
        const ExperimentData data = build_data(cfg);

        if (cfg.model == ModelType::null_model) {
            stage = "sweep";
            const auto grid = cfg.null_grid.empty() ? default_null_grid(data.train) : cfg.null_grid;
            s.curve = null_model_curve(data.train, grid);
            for (std::size_t k = 0; k < s.curve.size(); ++k) s.curve[k].gamma = grid[k];
            art.put("info_curve.csv", info_curve_csv(s.curve, "sigma2"));
        } else {
            Model model;
            StudentMarginal marg;
            if (!is_kernel(cfg.model)) {
                std::vector<LinearFit> fits;
                if (!cfg.gamma_grid.empty()) {
                    stage = "sweep";
                    s.curve = info_curve(data.train, cfg.bottleneck, cfg.gamma_grid, &fits);
                    art.put("info_curve.csv", info_curve_csv(s.curve));
                }
                stage = "fit";
                const LinearFit* reuse = nullptr;
                for (std::size_t k = 0, f = 0; k < s.curve.size(); ++k) {
                    if (!s.curve[k].ok) continue;
                    if (s.curve[k].gamma == cfg.bottleneck.gamma) reuse = &fits[f];
                    ++f;
                }
                const LinearFit fit = reuse ? *reuse : fit_sparse_ib(data.train, cfg.bottleneck);
                model = model_from_fit(fit, cfg.bottleneck.gamma, data.geometry);
                marg = fit.marg;
                s.iterations = fit.trace.iterations;
                s.converged = fit.trace.converged;
            } else {
                stage = "krr";
                const std::vector<Index> subset = draw_subset(data.train.size(), cfg.kernel.subset_size, cfg.seed);
                const auto kappas =
                    cfg.kernel.grid.kappas.empty() ? default_kappa_grid(data.train.X) : cfg.kernel.grid.kappas;
                const auto lambdas = cfg.kernel.grid.lambdas.empty() ? default_lambda_grid() : cfg.kernel.grid.lambdas;
                const KrrResult krr = fit_krr(data.train, data.holdout, kappas, lambdas, subset);
                const DualProblem prob = make_dual_problem(data.train, subset, krr.config);
                std::vector<KernelFit> fits;
                if (!cfg.gamma_grid.empty()) {
                    stage = "sweep";
                    s.curve = kernel_info_curve(data.train, prob, krr, subset, cfg.bottleneck, cfg.gamma_grid, &fits);
                    art.put("info_curve.csv", info_curve_csv(s.curve));
                }
                stage = "fit";
                const KernelFit* reuse = nullptr;
                for (std::size_t k = 0, f = 0; k < s.curve.size(); ++k) {
                    if (!s.curve[k].ok) continue;
                    if (s.curve[k].gamma == cfg.bottleneck.gamma) reuse = &fits[f];
                    ++f;
                }
                KernelFit fit = reuse ? *reuse : fit_dual_ib(data.train, prob, krr, subset, cfg.bottleneck);
                fit.krr = krr;
                model = model_from_fit(fit, cfg.bottleneck.gamma, data.geometry);
                marg = fit.marg;
                s.iterations = fit.trace.iterations;
                s.converged = fit.trace.converged;
                std::ostringstream grid;
                grid << "kappa,lambda,holdout_mse\n";
                for (const auto& cell : krr.grid)
                    grid << fmt(cell.kappa) << "," << fmt(cell.lambda) << ","
                         << fmt(cell.ok ? cell.holdout_mse : std::numeric_limits<double>::quiet_NaN()) << "\n";
                art.put("krr_grid.csv", grid.str());
            }

            stage = "report";
            const ResponseStats stats = model_stats(model, data.train.X);
            const auto parts = objective(data.train, stats, model.sigma(), model.dec, marg, model.gamma);
            s.relevance = parts.relevance;
            s.compression = parts.compression;
            s.objective = parts.value;
            art.put("model.json", model_to_json(model));
            const UnitArtifacts ua = write_unit_artifacts(model, data.train.X, art);
            s.units = ua.units;
            s.orientation = ua.orientation;
            s.median_kurtosis = ua.median_kurtosis;

            stage = "probe";
            s.probe = probe_model(model, cfg.probe);
            write_probe_artifacts(model, s.probe, art);
        }
        s.ok = true;
    } catch (const Error& e) {
        s.ok = false;
        s.failure_stage = stage;
        s.error = e.what();
        for (const auto& f : art.files) s.files.push_back(f.first);
        write_manifest(art.dir, config, &cfg, art, s, elapsed());
        throw;
    }
    for (const auto& f : art.listing()) s.files.push_back(f.at("name").get<std::string>());
    write_manifest(art.dir, config, &cfg, art, s, elapsed());
    return s;
}

std::vector<std::string> generate_data(const ExperimentConfig& cfg, const std::string& out_dir) {
    const auto start = std::chrono::steady_clock::now();
    make_dir(out_dir);
    Artifacts art{fs::path(out_dir), {}};
    const ExperimentData data = build_data(cfg);
    auto put_matrix = [&](const std::string& name, const Matrix& m) {
        const std::string path = (art.dir / name).string();
        save_matrix_file(path, m);
        art.files.emplace_back(name, fnv1a64_hex(read_file(path)));
    };
    put_matrix("train_X.bmat", data.train.X);
    put_matrix("train_Y.bmat", data.train.Y);
    put_matrix("holdout_X.bmat", data.holdout.X);
    put_matrix("holdout_Y.bmat", data.holdout.Y);
    const int preview = int(std::min<Index>(16, data.train.size()));
    if (data.geometry.left_cols + data.geometry.right_cols == 0) {
        art.put("preview_X.pgm", encode_pgm_grid(data.train.X.topRows(preview), data.x_height, data.x_width, 4));
    }
    art.put("preview_Y.pgm", encode_pgm_grid(data.train.Y.topRows(preview), data.y_height, data.y_width, 4));
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json m;
    m["format"] = "vib-data";
    m["version"] = kVersion;
    m["task"] = to_string(cfg.task);
    m["seed"] = cfg.seed;
    m["wall_time_s"] = seconds;
    m["config"] = config_document(cfg);
    m["files"] = art.listing();
    write_file((art.dir / "manifest.json").string(), m.dump(1) + "\n");
    std::vector<std::string> names;
    for (const auto& f : art.listing()) names.push_back(f.at("name").get<std::string>());
    return names;
}

void report_run(const std::string& run_dir) {
    const json manifest = read_manifest(run_dir);
    if (manifest.value("status", "") != "ok") throw ConfigError("run in '" + run_dir + "' did not finish");
    const ExperimentConfig cfg = config_from_json(manifest.at("config").dump());
    if (cfg.model == ModelType::null_model) throw ConfigError("the null model has no units to report");
    const Model model = load_model((fs::path(run_dir) / "model.json").string());
    const ExperimentData data = build_data(cfg);
    if (model.dim_x() != data.train.dim_x() || model.dim_y() != data.train.dim_y())
        throw ConfigError("model dimensions do not match the run's data");
    Artifacts art{fs::path(run_dir), {}};
    write_unit_artifacts(model, data.train.X, art);

    // Keep the manifest's listing in step with what was rewritten.
    json updated = manifest;
    for (auto& entry : updated["files"]) {
        for (const auto& [name, hash] : art.files)
            if (entry.at("name") == name) entry["fnv1a64"] = hash;
    }
    if (updated != manifest) write_file((fs::path(run_dir) / "manifest.json").string(), updated.dump(1) + "\n");
}

ProbeSpec probe_from_json(const std::string& text) {
    const json doc = parse_json(text, "probe");
    try {
        return parse_probe(doc, "$");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("probe: ") + e.what());
    }
}

ProbeResult probe_reconstruction(const std::string& model_path, const ProbeSpec& probe, const std::string& out_dir) {
    const Model model = load_model(model_path);
    const ProbeResult p = probe_model(model, probe);
    make_dir(out_dir);
    Artifacts art{fs::path(out_dir), {}};
    write_probe_artifacts(model, p, art);
    return p;
}

void compare_runs(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    if (run_dirs.empty()) throw ConfigError("compare: no runs given");
    struct Run {
        json manifest;
        std::vector<std::vector<std::string>> curve;
        std::string label;
    };
    std::vector<Run> runs;
    std::map<std::string, int> label_count;
    for (const auto& dir : run_dirs) {
        Run r;
        r.manifest = read_manifest(dir);
        if (r.manifest.value("format", "") != "vib-run") throw IoError("'" + dir + "' is not a run directory");
        if (r.manifest.value("status", "") != "ok") throw ConfigError("compare: run in '" + dir + "' did not finish");
        r.curve = read_csv((fs::path(dir) / "info_curve.csv").string());
        const std::string model = r.manifest.value("model", "run");
        const int n = ++label_count[model];
        r.label = n == 1 ? model : model + "_" + std::to_string(n);
        runs.push_back(std::move(r));
    }
    const json& first = runs.front().manifest;
    for (const auto& r : runs) {
        if (r.manifest.at("task") != first.at("task")) throw ConfigError("compare: runs come from different tasks");
        if (r.manifest.at("seed") != first.at("seed")) throw ConfigError("compare: runs use different data seeds");
        if (r.manifest.at("config").at("data") != first.at("config").at("data"))
            throw ConfigError("compare: runs use different data settings");
    }

    // Rows keyed by the first column's text, in order of first appearance.
    std::vector<std::string> keys;
    std::vector<std::map<std::string, std::size_t>> index(runs.size());
    for (std::size_t i = 0; i < runs.size(); ++i) {
        for (std::size_t row = 1; row < runs[i].curve.size(); ++row) {
            const std::string& key = runs[i].curve[row][0];
            if (index[i].count(key)) throw IoError("compare: duplicate curve key " + key);
            index[i][key] = row;
            if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
        }
    }
    const bool single = runs.size() == 1;
    std::ostringstream table;
    table << runs.front().curve[0][0];
    for (const auto& r : runs)
        for (std::size_t c = 1; c < r.curve[0].size(); ++c)
            table << "," << (single ? "" : r.label + "_") << r.curve[0][c];
    table << "\n";
    for (const auto& key : keys) {
        table << key;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            auto it = index[i].find(key);
            for (std::size_t c = 1; c < runs[i].curve[0].size(); ++c)
                table << "," << (it == index[i].end() ? "" : runs[i].curve[it->second][c]);
        }
        table << "\n";
    }

    std::ostringstream kurt;
    kurt << "label,model,median_excess_kurtosis\n";
    for (const auto& r : runs) {
        double k = std::numeric_limits<double>::quiet_NaN();
        if (r.manifest.contains("summary")) k = r.manifest.at("summary").at("median_excess_kurtosis").get<double>();
        kurt << r.label << "," << r.manifest.value("model", "") << "," << fmt(k) << "\n";
    }

    make_dir(out_dir);
    Artifacts art{fs::path(out_dir), {}};
    art.put("comparison.csv", table.str());
    art.put("kurtosis_summary.csv", kurt.str());
}

}  // namespace vib

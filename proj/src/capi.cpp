#include "vib/vib.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "vib/experiments.hpp"
#include "vib/version.hpp"

struct vib_dataset {
    vib::PairedDataset data;
};

struct vib_model {
    vib::Model model;
};

namespace {

thread_local std::string last_error;

template <typename F>
vib_status guarded(F&& body) {
    try {
        body();
        last_error.clear();
        return VIB_OK;
    } catch (const vib::ConfigError& e) {
        last_error = e.what();
        return VIB_ERR_CONFIG;
    } catch (const vib::NumericalError& e) {
        last_error = e.what();
        return VIB_ERR_NUMERIC;
    } catch (const vib::IoError& e) {
        last_error = e.what();
        return VIB_ERR_IO;
    } catch (const vib::InvalidArgument& e) {
        last_error = e.what();
        return VIB_ERR_INVALID;
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return VIB_ERR_NUMERIC;
    } catch (const std::exception& e) {
        last_error = e.what();
        return VIB_ERR_INVALID;
    }
}

void need(const void* p, const char* what) {
    if (!p) throw vib::InvalidArgument(std::string(what) + " must not be null");
}

char* copy_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

vib::Matrix from_buffer(const double* data, size_t rows, size_t cols) {
    return Eigen::Map<const RowMajor>(data, Eigen::Index(rows), Eigen::Index(cols));
}

void to_buffer(const vib::Matrix& m, double* out) {
    Eigen::Map<RowMajor>(out, m.rows(), m.cols()) = m;
}

}  // namespace

extern "C" {

const char* vib_version(void) { return vib::kVersion; }

const char* vib_last_error(void) { return last_error.c_str(); }

void vib_free(void* ptr) { std::free(ptr); }

vib_status vib_set_num_threads(int n) {
    return guarded([&] {
        if (n < 0) throw vib::InvalidArgument("thread count must be >= 0");
        Eigen::setNbThreads(n);
    });
}

vib_status vib_matrix_read(const char* path, double** data, size_t* rows, size_t* cols) {
    return guarded([&] {
        need(path, "path");
        need(data, "data");
        need(rows, "rows");
        need(cols, "cols");
        const vib::Matrix m = vib::load_matrix_file(path);
        double* buf = static_cast<double*>(std::malloc(sizeof(double) * std::max<size_t>(1, size_t(m.size()))));
        if (!buf) throw std::bad_alloc();
        to_buffer(m, buf);
        *data = buf;
        *rows = size_t(m.rows());
        *cols = size_t(m.cols());
    });
}

vib_status vib_matrix_write(const char* path, const double* data, size_t rows, size_t cols) {
    return guarded([&] {
        need(path, "path");
        if (rows * cols) need(data, "data");
        vib::save_matrix_file(path, rows * cols ? from_buffer(data, rows, cols) : vib::Matrix(rows, cols));
    });
}

vib_status vib_dataset_create(const double* X, const double* Y, size_t n, size_t dx, size_t dy, vib_dataset** out) {
    return guarded([&] {
        need(X, "X");
        need(Y, "Y");
        need(out, "out");
        if (n == 0 || dx == 0 || dy == 0) throw vib::InvalidArgument("dataset dimensions must be >= 1");
        auto ds = std::make_unique<vib_dataset>();
        ds->data = vib::dataset_from_pairs(from_buffer(X, n, dx), from_buffer(Y, n, dy));
        *out = ds.release();
    });
}

void vib_dataset_free(vib_dataset* data) { delete data; }

void vib_fit_options_default(vib_fit_options* opts) {
    if (!opts) return;
    const vib::BottleneckConfig c;
    opts->gamma = c.gamma;
    opts->n_units = c.n_units;
    opts->max_iters = c.max_iters;
    opts->rel_tol = c.rel_tol;
    opts->seed = c.seed;
    opts->marginal = VIB_MARGINAL_STUDENT;
}

vib_status vib_fit_linear(const vib_dataset* data, const vib_fit_options* opts, vib_model** out) {
    return guarded([&] {
        need(data, "data");
        need(opts, "opts");
        need(out, "out");
        vib::BottleneckConfig cfg;
        cfg.gamma = opts->gamma;
        cfg.n_units = opts->n_units;
        cfg.max_iters = opts->max_iters;
        cfg.rel_tol = opts->rel_tol;
        cfg.seed = opts->seed;
        cfg.marginal = opts->marginal == VIB_MARGINAL_GAUSSIAN ? vib::MarginalKind::gaussian
                                                               : vib::MarginalKind::student;
        const vib::LinearFit fit = vib::fit_sparse_ib(data->data, cfg);
        auto m = std::make_unique<vib_model>();
        m->model = vib::model_from_fit(fit, cfg.gamma, vib::Geometry{});
        *out = m.release();
    });
}

vib_status vib_model_load(const char* path, vib_model** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        auto m = std::make_unique<vib_model>();
        m->model = vib::load_model(path);
        *out = m.release();
    });
}

vib_status vib_model_save(const vib_model* model, const char* path) {
    return guarded([&] {
        need(model, "model");
        need(path, "path");
        vib::save_model(path, model->model);
    });
}

void vib_model_free(vib_model* model) { delete model; }

vib_status vib_model_dims(const vib_model* model, size_t* n_units, size_t* dx, size_t* dy) {
    return guarded([&] {
        need(model, "model");
        if (n_units) *n_units = size_t(model->model.n_units());
        if (dx) *dx = size_t(model->model.dim_x());
        if (dy) *dy = size_t(model->model.dim_y());
    });
}

vib_status vib_model_encode(const vib_model* model, const double* X, size_t n, double* responses) {
    return guarded([&] {
        need(model, "model");
        need(X, "X");
        need(responses, "responses");
        to_buffer(model->model.encode(from_buffer(X, n, size_t(model->model.dim_x()))), responses);
    });
}

vib_status vib_model_decode(const vib_model* model, const double* responses, size_t n, double* recon) {
    return guarded([&] {
        need(model, "model");
        need(responses, "responses");
        need(recon, "recon");
        to_buffer(model->model.decode(from_buffer(responses, n, size_t(model->model.n_units()))), recon);
    });
}

vib_status vib_model_bounds(const vib_model* model, const vib_dataset* data, double* relevance, double* compression,
                            double* objective) {
    return guarded([&] {
        need(model, "model");
        need(data, "data");
        const vib::Model& m = model->model;
        if (m.kind != vib::EncoderKind::linear)
            throw vib::InvalidArgument("bounds are available for linear-encoder models only");
        if (m.dim_x() != data->data.dim_x() || m.dim_y() != data->data.dim_y())
            throw vib::InvalidArgument("model and data set dimensions differ");
        const vib::ResponseStats stats = vib::linear_stats(data->data, m.linear.W);
        // Models keep ω² and ν only; ξ and a are refreshed for this data set.
        const vib::Matrix r2 = stats.r2(m.linear.Sigma);
        vib::StudentMarginal marg = vib::initial_marginal(m.marginal, r2);
        marg.omega2 = m.omega2;
        marg.nu = m.nu;
        if (m.marginal == vib::MarginalKind::student) {
            marg.a = (m.nu.array() + 1.0) / 2.0;
            for (vib::Index i = 0; i < r2.cols(); ++i)
                marg.Xi.col(i) = (m.nu(i) + 1.0) / (m.nu(i) + r2.col(i).array() / m.omega2(i));
        }
        const auto parts = vib::objective(data->data, stats, m.linear.Sigma, m.dec, marg, m.gamma);
        if (relevance) *relevance = parts.relevance;
        if (compression) *compression = parts.compression;
        if (objective) *objective = parts.value;
    });
}

vib_status vib_preset_config(const char* name, char** json) {
    return guarded([&] {
        need(name, "name");
        need(json, "json");
        *json = copy_string(vib::config_to_json(vib::preset_config(name)));
    });
}

vib_status vib_preset_names(char** names) {
    return guarded([&] {
        need(names, "names");
        std::string all;
        for (const auto& n : vib::preset_names()) all += n + "\n";
        *names = copy_string(all);
    });
}

vib_status vib_config_merge(const char* base, const char* patch, char** merged) {
    return guarded([&] {
        need(base, "base");
        need(patch, "patch");
        need(merged, "merged");
        *merged = copy_string(vib::merge_config_json(base, patch));
    });
}

vib_status vib_config_check(const char* config_json, char** normalized) {
    return guarded([&] {
        need(config_json, "config");
        const vib::ExperimentConfig cfg = vib::config_from_json(config_json);
        if (normalized) *normalized = copy_string(vib::config_to_json(cfg));
    });
}

vib_status vib_experiment_run(const char* config_json, const char* out_dir, int sweep) {
    return guarded([&] {
        need(config_json, "config");
        need(out_dir, "out_dir");
        vib::ExperimentConfig cfg = vib::config_from_json(config_json);
        if (!sweep) cfg.gamma_grid.clear();
        vib::run_experiment(cfg, out_dir);
    });
}

vib_status vib_experiment_gen_data(const char* config_json, const char* out_dir) {
    return guarded([&] {
        need(config_json, "config");
        need(out_dir, "out_dir");
        vib::generate_data(vib::config_from_json(config_json), out_dir);
    });
}

vib_status vib_experiment_report(const char* run_dir) {
    return guarded([&] {
        need(run_dir, "run_dir");
        vib::report_run(run_dir);
    });
}

vib_status vib_experiment_probe(const char* model_path, const char* probe_json, const char* out_dir,
                                double* energy) {
    return guarded([&] {
        need(model_path, "model_path");
        need(out_dir, "out_dir");
        const vib::ProbeSpec spec = probe_json ? vib::probe_from_json(probe_json) : vib::ProbeSpec{};
        const vib::ProbeResult p = vib::probe_reconstruction(model_path, spec, out_dir);
        if (energy)
            for (int k = 0; k < 3; ++k) energy[k] = p.energy(k);
    });
}

vib_status vib_experiment_compare(const char* const* run_dirs, size_t n_runs, const char* out_dir) {
    return guarded([&] {
        need(run_dirs, "run_dirs");
        need(out_dir, "out_dir");
        std::vector<std::string> dirs;
        for (size_t i = 0; i < n_runs; ++i) {
            need(run_dirs[i], "run directory");
            dirs.emplace_back(run_dirs[i]);
        }
        vib::compare_runs(dirs, out_dir);
    });
}

}  // extern "C"

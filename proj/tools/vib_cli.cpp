// Command-line front end: data generation, fits, sweeps, reports, probes and
// run comparison. Talks to the library through the C interface only.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vib/vib.h"

namespace {

constexpr int kExitConfig = 2;

// Owned C string returned by the library.
struct CString {
    char* p = nullptr;
    ~CString() { vib_free(p); }
    std::string str() const { return p ? p : ""; }
};

struct Failure {
    int code;
};

void check(vib_status st) {
    if (st == VIB_OK) return;
    std::cerr << "vib: " << vib_last_error() << "\n";
    throw Failure{st == VIB_ERR_INVALID ? kExitConfig : int(st)};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::cerr << "vib: cannot read '" << path << "'\n";
        throw Failure{VIB_ERR_IO};
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct ConfigArgs {
    std::string config_path;
    std::string preset;
    std::optional<std::uint64_t> seed;
};

void add_config_flags(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("--config", args.config_path, "Experiment config (JSON); with --preset, a patch on top of it");
    cmd->add_option("--preset", args.preset, "Named preset");
    cmd->add_option("--seed", args.seed, "Override the config seed");
}

// Preset, then config file, then seed override, validated and normalized.
std::string resolve_config(const ConfigArgs& args) {
    std::string doc;
    if (!args.preset.empty()) {
        CString s;
        check(vib_preset_config(args.preset.c_str(), &s.p));
        doc = s.str();
    }
    if (!args.config_path.empty()) {
        const std::string text = slurp(args.config_path);
        if (doc.empty()) {
            doc = text;
        } else {
            CString merged;
            check(vib_config_merge(doc.c_str(), text.c_str(), &merged.p));
            doc = merged.str();
        }
    }
    if (doc.empty()) {
        std::cerr << "vib: give --preset and/or --config\n";
        throw Failure{kExitConfig};
    }
    if (args.seed) {
        CString merged;
        const std::string patch = "{\"seed\": " + std::to_string(*args.seed) + "}";
        check(vib_config_merge(doc.c_str(), patch.c_str(), &merged.p));
        doc = merged.str();
    }
    CString normalized;
    check(vib_config_check(doc.c_str(), &normalized.p));
    return normalized.str();
}

void apply_thread_env() {
    const char* env = std::getenv("VIB_NUM_THREADS");
    if (!env || !*env) return;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end || n < 0) {
        std::cerr << "vib: VIB_NUM_THREADS must be a non-negative integer\n";
        throw Failure{kExitConfig};
    }
    check(vib_set_num_threads(int(n)));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variational information bottleneck experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(vib_version()));

    ConfigArgs gen_args, fit_args, sweep_args;
    std::string out_dir = "run";

    auto* gen = app.add_subcommand("gen-data", "Write the train/holdout matrices of an experiment");
    add_config_flags(gen, gen_args);
    gen->add_option("--out", out_dir, "Output directory");

    auto* fit = app.add_subcommand("fit", "Fit one model at the configured gamma");
    add_config_flags(fit, fit_args);
    fit->add_option("--out", out_dir, "Output directory");

    auto* sweep = app.add_subcommand("sweep", "Fit along the gamma grid and write the information curve");
    add_config_flags(sweep, sweep_args);
    sweep->add_option("--out", out_dir, "Output directory");

    std::string run_dir;
    auto* report = app.add_subcommand("report", "Recompute unit and orientation reports of a run");
    report->add_option("run_dir", run_dir, "Run directory")->required();

    std::string model_path, probe_path;
    auto* probe = app.add_subcommand("probe", "Reconstruct bar-segment probes with a trained model");
    probe->add_option("--model", model_path, "Model file")->required();
    probe->add_option("--config", probe_path, "Probe spec (JSON)");
    probe->add_option("--out", out_dir, "Output directory");

    std::vector<std::string> runs;
    auto* compare = app.add_subcommand("compare", "Merge information curves of several runs");
    compare->add_option("runs", runs, "Run directories")->required();
    compare->add_option("--out", out_dir, "Output directory");

    auto* presets = app.add_subcommand("presets", "List the built-in presets or print one");
    std::string preset_name;
    presets->add_option("name", preset_name, "Preset to print");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        apply_thread_env();
        if (*gen) {
            check(vib_experiment_gen_data(resolve_config(gen_args).c_str(), out_dir.c_str()));
        } else if (*fit) {
            check(vib_experiment_run(resolve_config(fit_args).c_str(), out_dir.c_str(), 0));
        } else if (*sweep) {
            check(vib_experiment_run(resolve_config(sweep_args).c_str(), out_dir.c_str(), 1));
        } else if (*report) {
            check(vib_experiment_report(run_dir.c_str()));
        } else if (*probe) {
            const std::string spec = probe_path.empty() ? std::string() : slurp(probe_path);
            double energy[3];
            check(vib_experiment_probe(model_path.c_str(), probe_path.empty() ? nullptr : spec.c_str(),
                                       out_dir.c_str(), energy));
            std::printf("central energy: left %.6g, right %.6g, both %.6g\n", energy[0], energy[1], energy[2]);
        } else if (*compare) {
            std::vector<const char*> dirs;
            for (const auto& r : runs) dirs.push_back(r.c_str());
            check(vib_experiment_compare(dirs.data(), dirs.size(), out_dir.c_str()));
        } else if (*presets) {
            CString s;
            if (preset_name.empty())
                check(vib_preset_names(&s.p));
            else
                check(vib_preset_config(preset_name.c_str(), &s.p));
            std::fputs(s.str().c_str(), stdout);
        }
    } catch (const Failure& f) {
        return f.code;
    }
    return 0;
}

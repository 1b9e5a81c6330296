// Command-line front end; talks to the library through the C API only.
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "selnet/selnet.h"

namespace {

int fail(int rc) {
    std::fprintf(stderr, "error: %s\n", selnet_last_error());
    return rc;
}

struct Overrides {
    std::string mode, out;
    double coverage = -1.0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int combine = -1;  // -1 untouched, 0 off, 1 on
};

int apply_overrides(selnet_experiment* exp, const Overrides& ov) {
    if (!ov.mode.empty())
        if (int rc = selnet_experiment_set_mode(exp, ov.mode.c_str())) return rc;
    if (ov.coverage >= 0.0)
        if (int rc = selnet_experiment_set_coverage(exp, ov.coverage)) return rc;
    if (ov.seed_set)
        if (int rc = selnet_experiment_set_seed(exp, ov.seed)) return rc;
    if (!ov.out.empty())
        if (int rc = selnet_experiment_set_output_dir(exp, ov.out.c_str())) return rc;
    if (ov.combine >= 0)
        if (int rc = selnet_experiment_set_combine_train_val(exp, ov.combine)) return rc;
    return SELNET_OK;
}

void add_override_flags(CLI::App* cmd, Overrides& ov, bool coverage_flag) {
    cmd->add_option("--mode", ov.mode, "selection mode: gumbel or soft");
    cmd->add_option("--out", ov.out, "output directory for run records");
    cmd->add_option("--seed", ov.seed, "train a single seed instead of the configured list")
        ->each([&ov](const std::string&) { ov.seed_set = true; });
    if (coverage_flag) cmd->add_option("--coverage", ov.coverage, "target coverage in (0, 1]");
    cmd->add_flag(
        "--combine-train-val,!--no-combine-train-val",
        [&ov](std::int64_t count) { ov.combine = count > 0 ? 1 : 0; },
        "merge the validation split into training (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"selective regression: train, sweep, check, report"};
    app.require_subcommand(1);

    std::string config_path, run_dir;
    Overrides ov_train, ov_sweep;
    int jobs = 1;

    CLI::App* train = app.add_subcommand("train", "train one trial per seed at the configured coverage");
    train->add_option("config", config_path, "experiment config JSON")->required();
    add_override_flags(train, ov_train, true);

    CLI::App* sw = app.add_subcommand("sweep", "run the full coverage x seed grid and aggregate");
    sw->add_option("config", config_path, "experiment config JSON")->required();
    add_override_flags(sw, ov_sweep, true);
    sw->add_option("--jobs", jobs, "worker threads for sweep cells")->check(CLI::PositiveNumber);

    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference and sampler checks");

    CLI::App* rep = app.add_subcommand("report", "aggregate run records in a directory into CSV");
    rep->add_option("run_dir", run_dir, "directory containing record_*.json files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : SELNET_EINVAL;
    }

    if (gc->parsed()) {
        char* text = nullptr;
        int rc = selnet_gradcheck(&text);
        if (text) {
            std::fputs(text, stdout);
            selnet_string_free(text);
        }
        if (rc != SELNET_OK && !text) return fail(rc);
        return rc;
    }

    if (rep->parsed()) {
        char* csv = nullptr;
        int rc = selnet_report(run_dir.c_str(), &csv);
        if (rc != SELNET_OK) return fail(rc);
        std::fputs(csv, stdout);
        selnet_string_free(csv);
        return SELNET_OK;
    }

    selnet_experiment* exp = nullptr;
    if (int rc = selnet_experiment_open(config_path.c_str(), &exp)) return fail(rc);

    int rc = SELNET_OK;
    if (train->parsed()) {
        rc = apply_overrides(exp, ov_train);
        if (rc == SELNET_OK) {
            char* summary = nullptr;
            rc = selnet_experiment_train(exp, &summary);
            if (rc == SELNET_OK) {
                std::fputs(summary, stdout);
                std::fputc('\n', stdout);
            }
            if (summary) selnet_string_free(summary);
        }
    } else {
        rc = apply_overrides(exp, ov_sweep);
        if (rc == SELNET_OK) {
            char* csv = nullptr;
            rc = selnet_experiment_sweep(exp, jobs, &csv);
            if (rc == SELNET_OK) std::fputs(csv, stdout);
            if (csv) selnet_string_free(csv);
        }
    }
    if (rc != SELNET_OK) fail(rc);
    selnet_experiment_close(exp);
    return rc;
}

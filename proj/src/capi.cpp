#include "selnet/selnet.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

#include "experiment.hpp"
#include "gradcheck.hpp"

using namespace selnet;

struct selnet_experiment {
    ExperimentConfig config;
};

namespace {

thread_local std::string g_last_error;

void set_last_error(const std::string& msg) { g_last_error = msg; }

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

// Runs fn, translating exceptions into error codes at the boundary.
template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        return SELNET_OK;
    } catch (const std::invalid_argument& e) {
        set_last_error(e.what());
        return SELNET_EINVAL;
    } catch (const std::exception& e) {
        set_last_error(e.what());
        return SELNET_ERUNTIME;
    } catch (...) {
        set_last_error("unknown error");
        return SELNET_ERUNTIME;
    }
}

int require_handle(selnet_experiment* exp) {
    if (!exp) {
        set_last_error("null experiment handle");
        return SELNET_EINVAL;
    }
    return SELNET_OK;
}

}  // namespace

extern "C" {

const char* selnet_version(void) { return "0.1.0"; }

const char* selnet_last_error(void) { return g_last_error.c_str(); }

void selnet_string_free(char* s) { std::free(s); }

int selnet_experiment_open(const char* config_path, selnet_experiment** out) {
    if (!config_path || !out) {
        set_last_error("null argument");
        return SELNET_EINVAL;
    }
    *out = nullptr;
    return guarded([&] { *out = new selnet_experiment{load_config(config_path)}; });
}

int selnet_experiment_open_json(const char* config_json, selnet_experiment** out) {
    if (!config_json || !out) {
        set_last_error("null argument");
        return SELNET_EINVAL;
    }
    *out = nullptr;
    return guarded([&] {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(config_json);
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
        }
        *out = new selnet_experiment{config_from_json(j)};
    });
}

void selnet_experiment_close(selnet_experiment* exp) { delete exp; }

int selnet_experiment_set_mode(selnet_experiment* exp, const char* mode) {
    if (int rc = require_handle(exp)) return rc;
    if (!mode) {
        set_last_error("null mode");
        return SELNET_EINVAL;
    }
    return guarded([&] {
        ExperimentConfig c = exp->config;
        c.mode = mode;
        validate_config(c);
        exp->config = std::move(c);
    });
}

int selnet_experiment_set_coverage(selnet_experiment* exp, double coverage) {
    if (int rc = require_handle(exp)) return rc;
    return guarded([&] {
        ExperimentConfig c = exp->config;
        c.coverage = coverage;
        c.coverages = {coverage};
        validate_config(c);
        exp->config = std::move(c);
    });
}

int selnet_experiment_set_seed(selnet_experiment* exp, uint64_t seed) {
    if (int rc = require_handle(exp)) return rc;
    return guarded([&] {
        ExperimentConfig c = exp->config;
        c.seeds = {seed};
        validate_config(c);
        exp->config = std::move(c);
    });
}

int selnet_experiment_set_output_dir(selnet_experiment* exp, const char* dir) {
    if (int rc = require_handle(exp)) return rc;
    if (!dir) {
        set_last_error("null output dir");
        return SELNET_EINVAL;
    }
    return guarded([&] {
        ExperimentConfig c = exp->config;
        c.output_dir = dir;
        validate_config(c);
        exp->config = std::move(c);
    });
}

int selnet_experiment_set_combine_train_val(selnet_experiment* exp, int enabled) {
    if (int rc = require_handle(exp)) return rc;
    exp->config.combine_train_val = enabled != 0;
    return SELNET_OK;
}

int selnet_experiment_config_json(selnet_experiment* exp, char** out_json) {
    if (int rc = require_handle(exp)) return rc;
    if (!out_json) {
        set_last_error("null out pointer");
        return SELNET_EINVAL;
    }
    return guarded([&] { *out_json = dup_string(config_to_json(exp->config).dump(2)); });
}

int selnet_experiment_train(selnet_experiment* exp, char** out_summary_json) {
    if (int rc = require_handle(exp)) return rc;
    return guarded([&] {
        const ExperimentConfig& cfg = exp->config;
        nlohmann::json records = nlohmann::json::array();
        nlohmann::json values = nlohmann::json::array();
        double sum = 0.0;
        for (std::uint64_t seed : cfg.seeds) {
            RunRecord rec = train_single(cfg, cfg.coverage, seed);
            std::string path =
                (std::filesystem::path(cfg.output_dir) / record_filename(cfg.mode, cfg.coverage, seed)).string();
            write_run_record(path, rec);
            records.push_back(path);
            values.push_back(rec.metric_value);
            sum += rec.metric_value;
        }
        nlohmann::json summary{{"dataset", cfg.dataset},
                               {"mode", cfg.mode},
                               {"coverage", cfg.coverage},
                               {"metric", MetricSpec::from_string(cfg.metric).id()},
                               {"records", records},
                               {"values", values},
                               {"mean", sum / static_cast<double>(cfg.seeds.size())}};
        if (out_summary_json) *out_summary_json = dup_string(summary.dump(2));
    });
}

int selnet_experiment_sweep(selnet_experiment* exp, int jobs, char** out_report_csv) {
    if (int rc = require_handle(exp)) return rc;
    if (jobs < 0) {
        set_last_error("jobs must be >= 0");
        return SELNET_EINVAL;
    }
    return guarded([&] {
        SweepResult res = sweep(exp->config, jobs == 0 ? 1 : static_cast<std::size_t>(jobs));
        if (out_report_csv) *out_report_csv = dup_string(report_csv(exp->config.mode, exp->config.dataset, res.rows));
    });
}

int selnet_report(const char* run_dir, char** out_report_csv) {
    if (!run_dir) {
        set_last_error("null run dir");
        return SELNET_EINVAL;
    }
    return guarded([&] {
        std::string csv = render_report_csv(report_run_dir(run_dir));
        if (out_report_csv) *out_report_csv = dup_string(csv);
    });
}

int selnet_gradcheck(char** out_report_text) {
    GradCheckReport rep;
    int rc = guarded([&] { rep = run_gradient_checks(); });
    if (rc != SELNET_OK) return rc;
    if (out_report_text) *out_report_text = dup_string(rep.to_text());
    if (!rep.all_pass()) {
        set_last_error("gradient checks failed");
        return SELNET_ERUNTIME;
    }
    return SELNET_OK;
}

}  // extern "C"

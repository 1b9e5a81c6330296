#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "data.hpp"
#include "eval.hpp"
#include "selective.hpp"

namespace selnet {

struct ExperimentConfig {
    std::string dataset;  // display name used in reports
    std::string csv_path;
    std::string target_column;
    std::vector<std::string> drop_columns;

    SplitSpec split;  // seed field is ignored here; derived per trial
    bool combine_train_val = true;

    std::string architecture;
    std::string mode = "gumbel";
    double coverage = 1.0;            // train target for the single-run command
    std::vector<double> coverages;    // sweep grid
    double lambda = 32.0;
    double alpha = 0.5;
    std::size_t epochs = 800;
    std::size_t batch_size = 128;
    double lr = 0.007;
    std::vector<std::size_t> lr_milestones;
    double lr_factor = 0.5;
    TemperatureSchedule temperature{30.0, 0.985, 5};
    std::string metric = "mse";
    std::vector<std::uint64_t> seeds = {1};
    std::string output_dir = "runs/out";
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);
void validate_config(const ExperimentConfig& c);  // throws invalid_argument

struct EpochStats {
    double loss = 0.0;
    double coverage = 0.0;  // empirical phi over the epoch's batches
    double lr = 0.0;
    double tau = 0.0;
};

struct RunRecord {
    nlohmann::json config;  // exact snapshot of the config this run came from
    std::string dataset;
    std::string mode;
    std::string metric;  // metric id, e.g. "mse"
    std::uint64_t seed = 0;
    double coverage = 1.0;
    std::vector<EpochStats> epochs;
    nlohmann::json parameters;  // trained weights: [{name, shape, values}, ...]
    std::vector<double> prediction, confidence, target;  // test set, natural units
    double metric_value = 0.0;                           // after calibration at `coverage`
    double wall_seconds = 0.0;                           // excluded from determinism comparisons
};

nlohmann::json record_to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);
void write_run_record(const std::string& path, const RunRecord& r);
RunRecord read_run_record(const std::string& path);
std::string record_filename(const std::string& mode, double coverage, std::uint64_t seed);

// One full trial: derived seed streams, split, preprocess, train, evaluate.
RunRecord train_single(const ExperimentConfig& cfg, double coverage, std::uint64_t seed);

struct SweepResult {
    std::vector<RunRecord> records;
    std::vector<RiskCoverageRow> rows;  // one per coverage, aggregated over seeds
    std::string report_path;
    std::size_t trained = 0;
    std::size_t reused = 0;  // cells skipped because their record already existed
};

// coverage grid x seeds; each cell writes <output_dir>/<record name>.json and
// existing records are reused, so an interrupted sweep resumes where it
// stopped. jobs > 1 trains cells on worker threads; results are identical
// regardless of thread count because every cell derives its own rng streams.
SweepResult sweep(const ExperimentConfig& cfg, std::size_t jobs = 1);

std::vector<RiskCoverageRow> aggregate_records(const std::vector<RunRecord>& records, const MetricSpec& metric);

struct ReportTable {
    std::string method, dataset;
    std::vector<RiskCoverageRow> rows;
};

// Reads every record_*.json in a run directory and aggregates per method.
std::vector<ReportTable> report_run_dir(const std::string& dir);
std::string render_report_csv(const std::vector<ReportTable>& tables);

}  // namespace selnet

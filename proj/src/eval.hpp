#pragma once

#include <span>
#include <string>
#include <vector>

namespace selnet {

// Test-set outputs in natural target units plus the selection confidence.
struct ScoredPredictions {
    std::vector<double> prediction;
    std::vector<double> confidence;
    std::vector<double> target;

    std::size_t size() const { return prediction.size(); }
    void validate() const;
};

// Indices of the floor(c*m + 0.5) most confident samples; ties broken toward
// the lower index so calibration is deterministic.
std::vector<std::size_t> calibrate_coverage(const ScoredPredictions& sp, double coverage);

enum class MetricKind { MSE, MAE };

struct MetricSpec {
    MetricKind kind = MetricKind::MSE;
    double divisor = 1.0;

    std::string label() const;
    static MetricSpec from_string(const std::string& s);  // "mse" | "mae" | "mae10k"
    std::string id() const;
};

double selective_metric(const ScoredPredictions& sp, std::span<const std::size_t> keep, const MetricSpec& metric);

struct RiskCoverageRow {
    double coverage = 1.0;  // target coverage as a fraction
    std::string metric;
    double mean = 0.0;
    double stddev = 0.0;  // sample std over trials; 0 for a single trial
    std::size_t trials = 0;
};

RiskCoverageRow aggregate_cell(double coverage, const MetricSpec& metric, std::span<const double> trial_values);

// One row per requested coverage: each trial is calibrated independently and
// the per-trial metrics are aggregated across trials.
std::vector<RiskCoverageRow> risk_coverage_report(std::span<const ScoredPredictions> trials,
                                                  std::span<const double> coverages,
                                                  const MetricSpec& metric);

// CSV with header method,dataset,coverage,metric,mean,std,trials; coverage
// reported in percent.
std::string report_csv(const std::string& method, const std::string& dataset,
                       const std::vector<RiskCoverageRow>& rows);

std::string format_double(double v);  // shortest round-trip representation

}  // namespace selnet

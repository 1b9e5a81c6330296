#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace selnet {

void ScoredPredictions::validate() const {
    if (prediction.size() != confidence.size() || prediction.size() != target.size())
        throw std::invalid_argument("scored predictions: prediction/confidence/target lengths differ");
    if (prediction.empty()) throw std::invalid_argument("scored predictions: empty");
}

std::vector<std::size_t> calibrate_coverage(const ScoredPredictions& sp, double coverage) {
    sp.validate();
    if (coverage < 0.0 || coverage > 1.0) throw std::invalid_argument("coverage must be in [0, 1]");
    std::size_t m = sp.size();
    auto k = static_cast<std::size_t>(std::floor(coverage * static_cast<double>(m) + 0.5));
    if (k > m) k = m;
    if (k == 0)
        throw std::invalid_argument("calibrated selection is empty (coverage " + format_double(coverage) +
                                    " of " + std::to_string(m) + " samples rounds to zero)");
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sp.confidence[a] > sp.confidence[b];  // stable: equal confidences keep index order
    });
    order.resize(k);
    return order;
}

std::string MetricSpec::label() const {
    std::string base = kind == MetricKind::MSE ? "mse" : "mae";
    if (divisor != 1.0) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%g", divisor);
        return base + "/" + buf;
    }
    return base;
}

MetricSpec MetricSpec::from_string(const std::string& s) {
    if (s == "mse") return {MetricKind::MSE, 1.0};
    if (s == "mae") return {MetricKind::MAE, 1.0};
    if (s == "mae10k") return {MetricKind::MAE, 10000.0};
    throw std::invalid_argument("unknown metric '" + s + "' (expected mse|mae|mae10k)");
}

std::string MetricSpec::id() const {
    if (kind == MetricKind::MSE) return "mse";
    return divisor == 10000.0 ? "mae10k" : "mae";
}

double selective_metric(const ScoredPredictions& sp, std::span<const std::size_t> keep, const MetricSpec& metric) {
    sp.validate();
    if (keep.empty()) throw std::invalid_argument("selective_metric: empty selection");
    double sum = 0.0;
    for (std::size_t i : keep) {
        if (i >= sp.size()) throw std::invalid_argument("selective_metric: index out of range");
        double d = sp.prediction[i] - sp.target[i];
        sum += metric.kind == MetricKind::MSE ? d * d : std::fabs(d);
    }
    return sum / static_cast<double>(keep.size()) / metric.divisor;
}

RiskCoverageRow aggregate_cell(double coverage, const MetricSpec& metric, std::span<const double> trial_values) {
    if (trial_values.empty()) throw std::invalid_argument("aggregate_cell: no trials");
    RiskCoverageRow row;
    row.coverage = coverage;
    row.metric = metric.label();
    row.trials = trial_values.size();
    double sum = 0.0;
    for (double v : trial_values) sum += v;
    row.mean = sum / static_cast<double>(trial_values.size());
    if (trial_values.size() > 1) {
        double ss = 0.0;
        for (double v : trial_values) {
            double d = v - row.mean;
            ss += d * d;
        }
        row.stddev = std::sqrt(ss / static_cast<double>(trial_values.size() - 1));
    }
    return row;
}

std::vector<RiskCoverageRow> risk_coverage_report(std::span<const ScoredPredictions> trials,
                                                  std::span<const double> coverages,
                                                  const MetricSpec& metric) {
    if (trials.empty()) throw std::invalid_argument("risk_coverage_report: no trials");
    std::vector<RiskCoverageRow> rows;
    rows.reserve(coverages.size());
    for (double c : coverages) {
        std::vector<double> values;
        values.reserve(trials.size());
        for (const ScoredPredictions& sp : trials) {
            auto keep = calibrate_coverage(sp, c);
            values.push_back(selective_metric(sp, keep, metric));
        }
        rows.push_back(aggregate_cell(c, metric, values));
    }
    return rows;
}

std::string format_double(double v) {
    char buf[40];
    // integral values print plainly ("50", not "5e+01")
    if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15) {
        std::snprintf(buf, sizeof buf, "%.0f", v);
        return buf;
    }
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v) break;
    }
    return buf;
}

std::string report_csv(const std::string& method, const std::string& dataset,
                       const std::vector<RiskCoverageRow>& rows) {
    std::string out = "method,dataset,coverage,metric,mean,std,trials\n";
    for (const RiskCoverageRow& r : rows) {
        out += method;
        out += ',';
        out += dataset;
        out += ',';
        out += format_double(r.coverage * 100.0);
        out += ',';
        out += r.metric;
        out += ',';
        out += format_double(r.mean);
        out += ',';
        out += format_double(r.stddev);
        out += ',';
        out += std::to_string(r.trials);
        out += '\n';
    }
    return out;
}

}  // namespace selnet

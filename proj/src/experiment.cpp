#include "experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include "optim.hpp"
#include "rng.hpp"

namespace selnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const json& require(const json& j, const char* key) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("config: missing key '") + key + "'");
    return j.at(key);
}

void reject_unknown_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + where + it.key() + "'");
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
    reject_unknown_keys(j,
                        {"dataset", "csv_path", "target_column", "drop_columns", "split", "combine_train_val",
                         "architecture", "mode", "coverage", "coverages", "lambda", "alpha", "epochs", "batch_size",
                         "lr", "lr_milestones", "lr_factor", "temperature", "metric", "seeds", "output_dir"},
                        "");
    ExperimentConfig c;
    c.dataset = require(j, "dataset").get<std::string>();
    c.csv_path = require(j, "csv_path").get<std::string>();
    c.target_column = require(j, "target_column").get<std::string>();
    if (j.contains("drop_columns")) c.drop_columns = j.at("drop_columns").get<std::vector<std::string>>();

    const json& s = require(j, "split");
    reject_unknown_keys(s, {"kind", "train", "val", "test"}, "split.");
    std::string kind = require(s, "kind").get<std::string>();
    if (kind == "fractions") {
        c.split.kind = SplitSpec::Kind::Fractions;
        c.split.train_frac = require(s, "train").get<double>();
        c.split.val_frac = require(s, "val").get<double>();
        c.split.test_frac = require(s, "test").get<double>();
    } else if (kind == "counts") {
        c.split.kind = SplitSpec::Kind::Counts;
        c.split.train_count = require(s, "train").get<std::size_t>();
        c.split.val_count = require(s, "val").get<std::size_t>();
    } else {
        throw std::invalid_argument("config: split.kind must be 'fractions' or 'counts'");
    }

    if (j.contains("combine_train_val")) c.combine_train_val = j.at("combine_train_val").get<bool>();
    c.architecture = require(j, "architecture").get<std::string>();
    if (j.contains("mode")) c.mode = j.at("mode").get<std::string>();
    if (j.contains("coverage")) c.coverage = j.at("coverage").get<double>();
    if (j.contains("coverages")) c.coverages = j.at("coverages").get<std::vector<double>>();
    if (c.coverages.empty()) c.coverages = {c.coverage};
    if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    c.epochs = require(j, "epochs").get<std::size_t>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
    c.lr = require(j, "lr").get<double>();
    if (j.contains("lr_milestones")) c.lr_milestones = j.at("lr_milestones").get<std::vector<std::size_t>>();
    if (j.contains("lr_factor")) c.lr_factor = j.at("lr_factor").get<double>();
    if (j.contains("temperature")) {
        const json& t = j.at("temperature");
        reject_unknown_keys(t, {"tau0", "rate", "step_epochs"}, "temperature.");
        c.temperature.tau0 = require(t, "tau0").get<double>();
        c.temperature.rate = require(t, "rate").get<double>();
        c.temperature.step_epochs = require(t, "step_epochs").get<std::size_t>();
    }
    if (j.contains("metric")) c.metric = j.at("metric").get<std::string>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    validate_config(c);
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json s;
    if (c.split.kind == SplitSpec::Kind::Fractions)
        s = {{"kind", "fractions"},
             {"train", c.split.train_frac},
             {"val", c.split.val_frac},
             {"test", c.split.test_frac}};
    else
        s = {{"kind", "counts"}, {"train", c.split.train_count}, {"val", c.split.val_count}};
    return json{{"dataset", c.dataset},
                {"csv_path", c.csv_path},
                {"target_column", c.target_column},
                {"drop_columns", c.drop_columns},
                {"split", s},
                {"combine_train_val", c.combine_train_val},
                {"architecture", c.architecture},
                {"mode", c.mode},
                {"coverage", c.coverage},
                {"coverages", c.coverages},
                {"lambda", c.lambda},
                {"alpha", c.alpha},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"lr", c.lr},
                {"lr_milestones", c.lr_milestones},
                {"lr_factor", c.lr_factor},
                {"temperature",
                 {{"tau0", c.temperature.tau0}, {"rate", c.temperature.rate}, {"step_epochs", c.temperature.step_epochs}}},
                {"metric", c.metric},
                {"seeds", c.seeds},
                {"output_dir", c.output_dir}};
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config '" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

void validate_config(const ExperimentConfig& c) {
    if (c.dataset.empty()) throw std::invalid_argument("config: dataset name is empty");
    if (c.csv_path.empty()) throw std::invalid_argument("config: csv_path is empty");
    if (c.target_column.empty()) throw std::invalid_argument("config: target_column is empty");
    architecture(c.architecture);           // throws on unknown id
    selection_mode_from_string(c.mode);     // throws on unknown mode
    MetricSpec::from_string(c.metric);      // throws on unknown metric
    c.temperature.validate();
    if (!(c.coverage > 0.0 && c.coverage <= 1.0))
        throw std::invalid_argument("config: coverage must be in (0, 1]");
    for (double cov : c.coverages)
        if (!(cov > 0.0 && cov <= 1.0)) throw std::invalid_argument("config: coverages must be in (0, 1]");
    if (c.coverages.empty()) throw std::invalid_argument("config: empty coverage grid");
    if (!(c.lambda >= 0.0)) throw std::invalid_argument("config: lambda must be >= 0");
    if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw std::invalid_argument("config: alpha must be in [0, 1]");
    if (c.epochs == 0) throw std::invalid_argument("config: epochs must be >= 1");
    if (c.batch_size < 2) throw std::invalid_argument("config: batch_size must be >= 2");
    MultiStepLR(c.lr, c.lr_milestones, c.lr_factor);  // validates lr, milestones, factor
    if (c.seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
    std::set<std::uint64_t> uniq(c.seeds.begin(), c.seeds.end());
    if (uniq.size() != c.seeds.size()) throw std::invalid_argument("config: duplicate seeds");
    if (c.output_dir.empty()) throw std::invalid_argument("config: output_dir is empty");
}

namespace {

json epochs_to_json(const std::vector<EpochStats>& epochs) {
    json arr = json::array();
    for (const EpochStats& e : epochs) arr.push_back({e.loss, e.coverage, e.lr, e.tau});
    return arr;
}

std::vector<EpochStats> epochs_from_json(const json& arr) {
    std::vector<EpochStats> out;
    out.reserve(arr.size());
    for (const json& e : arr) {
        if (!e.is_array() || e.size() != 4) throw std::invalid_argument("record: malformed epoch entry");
        out.push_back({e[0].get<double>(), e[1].get<double>(), e[2].get<double>(), e[3].get<double>()});
    }
    return out;
}

}  // namespace

json record_to_json(const RunRecord& r) {
    return json{{"config", r.config},
                {"dataset", r.dataset},
                {"mode", r.mode},
                {"metric", r.metric},
                {"seed", r.seed},
                {"coverage", r.coverage},
                {"epochs", epochs_to_json(r.epochs)},
                {"parameters", r.parameters},
                {"prediction", r.prediction},
                {"confidence", r.confidence},
                {"target", r.target},
                {"metric_value", r.metric_value},
                {"wall_seconds", r.wall_seconds}};
}

RunRecord record_from_json(const json& j) {
    RunRecord r;
    r.config = require(j, "config");
    r.dataset = require(j, "dataset").get<std::string>();
    r.mode = require(j, "mode").get<std::string>();
    r.metric = require(j, "metric").get<std::string>();
    r.seed = require(j, "seed").get<std::uint64_t>();
    r.coverage = require(j, "coverage").get<double>();
    r.epochs = epochs_from_json(require(j, "epochs"));
    r.parameters = require(j, "parameters");
    if (!r.parameters.is_array()) throw std::invalid_argument("record: parameters must be an array");
    r.prediction = require(j, "prediction").get<std::vector<double>>();
    r.confidence = require(j, "confidence").get<std::vector<double>>();
    r.target = require(j, "target").get<std::vector<double>>();
    r.metric_value = require(j, "metric_value").get<double>();
    r.wall_seconds = require(j, "wall_seconds").get<double>();
    if (r.prediction.size() != r.confidence.size() || r.prediction.size() != r.target.size())
        throw std::invalid_argument("record: prediction/confidence/target lengths differ");
    return r;
}

void write_run_record(const std::string& path, const RunRecord& r) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << record_to_json(r).dump(2) << '\n';
}

RunRecord read_run_record(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open record '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("record '" + path + "' is not valid JSON: " + e.what());
    }
    return record_from_json(j);
}

std::string record_filename(const std::string& mode, double coverage, std::uint64_t seed) {
    long pct = std::lround(coverage * 100.0);
    return "record_" + mode + "_c" + std::to_string(pct) + "_s" + std::to_string(seed) + ".json";
}

RunRecord train_single(const ExperimentConfig& cfg, double coverage, std::uint64_t seed) {
    validate_config(cfg);
    if (!(coverage > 0.0 && coverage <= 1.0)) throw std::invalid_argument("coverage must be in (0, 1]");
    auto t0 = std::chrono::steady_clock::now();

    if (!fs::exists(cfg.csv_path))
        throw std::invalid_argument("dataset file '" + cfg.csv_path +
                                    "' not found; run `python3 scripts/fetch_datasets.py` from the repository "
                                    "root to download the benchmark datasets (see README.md)");
    RawTable table = load_csv(cfg.csv_path);
    SplitSpec sspec = cfg.split;
    sspec.seed = derive_seed(seed, Stream::Split);
    SplitIndices si = split(table.rows(), sspec);

    std::vector<std::size_t> fit = si.train;
    if (cfg.combine_train_val) fit.insert(fit.end(), si.val.begin(), si.val.end());

    PreprocessSpec pspec{cfg.target_column, cfg.drop_columns, true, true};
    Dataset ds = preprocess(table, pspec, fit);
    std::size_t d = ds.X.cols();

    Tensor Xtr = gather_rows(ds.X, fit);
    Tensor ytr = gather_rows(ds.y, fit);
    Tensor Xte = gather_rows(ds.X, si.test);
    const Column& target_col = table.column(cfg.target_column);

    SelectiveModel model(architecture(cfg.architecture), d, 1, derive_seed(seed, Stream::Init));
    Adam opt(model.parameters());
    MultiStepLR lrs(cfg.lr, cfg.lr_milestones, cfg.lr_factor);
    Rng noise(derive_seed(seed, Stream::Noise));
    Rng shuffler(derive_seed(seed, Stream::Shuffle));
    SelectionMode mode = selection_mode_from_string(cfg.mode);

    std::size_t n = fit.size();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;

    RunRecord rec;
    rec.config = config_to_json(cfg);
    rec.dataset = cfg.dataset;
    rec.mode = cfg.mode;
    rec.metric = MetricSpec::from_string(cfg.metric).id();
    rec.seed = seed;
    rec.coverage = coverage;
    rec.epochs.reserve(cfg.epochs);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = lrs.at_epoch(epoch);
        double tau = cfg.temperature.at_epoch(epoch);
        shuffler.shuffle(perm);

        double loss_sum = 0.0, cov_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            std::size_t b = std::min(cfg.batch_size, n - start);
            if (b < 2) break;  // a singleton tail has no batch statistics
            Tensor Xb = Tensor::zeros({b, d});
            Tensor yb = Tensor::zeros({b, 1});
            for (std::size_t i = 0; i < b; ++i) {
                std::size_t r = perm[start + i];
                for (std::size_t jx = 0; jx < d; ++jx) Xb.at(i, jx) = Xtr.at(r, jx);
                yb.at(i, 0) = ytr.at(r, 0);
            }

            Tape t;
            Var x = t.leaf(std::move(Xb));
            Var y = t.leaf(std::move(yb));
            SelectiveHeads heads = model.forward(t, x, Mode::Train);
            Var lf = per_sample_loss(t, LossKind::Squared, heads.f, y);
            Var lh = per_sample_loss(t, LossKind::Squared, heads.h, y);
            Var z = mode == SelectionMode::Gumbel ? gumbel_softmax_binary(t, heads.g_prob, tau, noise).z_st
                                                  : heads.g_prob;
            SelectiveLossTerms terms = total_loss(t, lf, z, lh, coverage, cfg.lambda, cfg.alpha);

            double L = t.value(terms.total).item();
            if (!std::isfinite(L))
                throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch) + " (seed " +
                                         std::to_string(seed) + ")");
            GradientMap grads = t.backward(terms.total);
            opt.step(grads, lr);

            loss_sum += L;
            cov_sum += t.value(terms.coverage).item();
            ++batches;
        }
        if (batches == 0) throw std::runtime_error("no usable batches; training set smaller than 2 rows");
        rec.epochs.push_back({loss_sum / static_cast<double>(batches), cov_sum / static_cast<double>(batches), lr, tau});
    }

    rec.parameters = json::array();
    for (const Parameter* p : model.parameters()) {
        json vals = json::array();
        for (double v : p->value.data()) vals.push_back(v);
        rec.parameters.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"values", std::move(vals)}});
    }

    Prediction pred = predict(model, Xte);
    std::size_t mt = si.test.size();
    rec.prediction.resize(mt);
    rec.confidence.resize(mt);
    rec.target.resize(mt);
    for (std::size_t i = 0; i < mt; ++i) {
        rec.prediction[i] = ds.to_natural(pred.f.at(i, 0));
        rec.confidence[i] = pred.g_prob.at(i, 0);
        rec.target[i] = target_col.numeric[si.test[i]];
    }

    ScoredPredictions sp{rec.prediction, rec.confidence, rec.target};
    MetricSpec mspec = MetricSpec::from_string(cfg.metric);
    std::vector<std::size_t> keep = calibrate_coverage(sp, coverage);
    rec.metric_value = selective_metric(sp, keep, mspec);

    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

std::vector<RiskCoverageRow> aggregate_records(const std::vector<RunRecord>& records, const MetricSpec& metric) {
    // group by coverage, highest first (the usual table layout)
    std::vector<double> coverages;
    for (const RunRecord& r : records)
        if (std::find(coverages.begin(), coverages.end(), r.coverage) == coverages.end())
            coverages.push_back(r.coverage);
    std::sort(coverages.begin(), coverages.end(), std::greater<>());

    std::vector<RiskCoverageRow> rows;
    for (double cov : coverages) {
        std::vector<double> vals;
        for (const RunRecord& r : records)
            if (r.coverage == cov) vals.push_back(r.metric_value);
        rows.push_back(aggregate_cell(cov, metric, vals));
    }
    return rows;
}

SweepResult sweep(const ExperimentConfig& cfg, std::size_t jobs) {
    validate_config(cfg);
    if (jobs == 0) jobs = 1;
    fs::create_directories(cfg.output_dir);

    struct Cell {
        double coverage;
        std::uint64_t seed;
        std::string path;
    };
    std::vector<Cell> cells;
    for (double cov : cfg.coverages)
        for (std::uint64_t seed : cfg.seeds)
            cells.push_back({cov, seed, (fs::path(cfg.output_dir) / record_filename(cfg.mode, cov, seed)).string()});

    SweepResult result;
    result.records.resize(cells.size());
    std::vector<char> reused(cells.size(), 0);

    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;

    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            {
                std::lock_guard<std::mutex> lock(err_mu);
                if (first_error) return;
            }
            try {
                const Cell& cell = cells[i];
                if (fs::exists(cell.path)) {
                    try {
                        result.records[i] = read_run_record(cell.path);
                        reused[i] = 1;
                        continue;
                    } catch (const std::exception&) {
                        // unreadable record: retrain and overwrite
                    }
                }
                result.records[i] = train_single(cfg, cell.coverage, cell.seed);
                write_run_record(cell.path, result.records[i]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < std::min(jobs, cells.size()); ++k) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    for (char r : reused)
        r ? ++result.reused : ++result.trained;

    MetricSpec mspec = MetricSpec::from_string(cfg.metric);
    result.rows = aggregate_records(result.records, mspec);
    result.report_path = (fs::path(cfg.output_dir) / "report.csv").string();
    std::ofstream out(result.report_path);
    if (!out) throw std::runtime_error("cannot write '" + result.report_path + "'");
    out << report_csv(cfg.mode, cfg.dataset, result.rows);
    return result;
}

std::vector<ReportTable> report_run_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::invalid_argument("'" + dir + "' is not a directory");
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        if (name.rfind("record_", 0) == 0 && entry.path().extension() == ".json") paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw std::invalid_argument("no run records found in '" + dir + "'");

    std::vector<RunRecord> records;
    records.reserve(paths.size());
    for (const std::string& p : paths) records.push_back(read_run_record(p));

    std::vector<ReportTable> tables;
    for (const RunRecord& r : records) {
        auto it = std::find_if(tables.begin(), tables.end(), [&](const ReportTable& t) {
            return t.method == r.mode && t.dataset == r.dataset;
        });
        if (it == tables.end()) {
            tables.push_back({r.mode, r.dataset, {}});
        }
    }
    for (ReportTable& t : tables) {
        std::vector<RunRecord> group;
        MetricSpec mspec;
        for (const RunRecord& r : records)
            if (r.mode == t.method && r.dataset == t.dataset) {
                group.push_back(r);
                mspec = MetricSpec::from_string(r.metric);
            }
        t.rows = aggregate_records(group, mspec);
    }
    return tables;
}

std::string render_report_csv(const std::vector<ReportTable>& tables) {
    std::string out = "method,dataset,coverage,metric,mean,std,trials\n";
    for (const ReportTable& t : tables) {
        std::string body = report_csv(t.method, t.dataset, t.rows);
        out += body.substr(body.find('\n') + 1);  // strip the per-table header
    }
    return out;
}

}  // namespace selnet

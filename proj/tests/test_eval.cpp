#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "../src/eval.hpp"
#include "../src/rng.hpp"
#include <stdexcept>

using namespace selnet;

namespace {

ScoredPredictions make_sp(std::vector<double> pred, std::vector<double> conf, std::vector<double> tgt) {
    return {std::move(pred), std::move(conf), std::move(tgt)};
}

}  // namespace

TEST_CASE("coverage calibration picks the top-k by confidence") {
    ScoredPredictions sp = make_sp({1, 2, 3, 4}, {0.9, 0.1, 0.5, 0.7}, {0, 0, 0, 0});
    auto top2 = calibrate_coverage(sp, 0.5);
    REQUIRE(top2.size() == 2);
    CHECK(top2[0] == 0);
    CHECK(top2[1] == 3);

    auto all = calibrate_coverage(sp, 1.0);
    CHECK(all.size() == 4);

    ScoredPredictions ties = make_sp({1, 2, 3}, {0.5, 0.5, 0.5}, {0, 0, 0});
    auto two = calibrate_coverage(ties, 2.0 / 3.0);
    REQUIRE(two.size() == 2);
    CHECK(two[0] == 0);  // equal confidence: lower index first
    CHECK(two[1] == 1);

    CHECK_THROWS_AS(calibrate_coverage(sp, 0.01), std::invalid_argument);  // rounds to zero selected
    CHECK_THROWS_AS(calibrate_coverage(sp, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(calibrate_coverage(sp, 1.1), std::invalid_argument);
    ScoredPredictions broken = make_sp({1}, {0.5, 0.6}, {1});
    CHECK_THROWS_AS(calibrate_coverage(broken, 1.0), std::invalid_argument);
}

TEST_CASE("calibration invariants on random scores") {
    Rng rng(77);
    std::vector<double> conf(101), pred(101), tgt(101);
    for (std::size_t i = 0; i < conf.size(); ++i) {
        conf[i] = rng.uniform01();
        pred[i] = rng.uniform(-2, 2);
        tgt[i] = rng.uniform(-2, 2);
    }
    conf[10] = conf[20] = conf[30];  // force ties
    ScoredPredictions sp = make_sp(pred, conf, tgt);

    std::vector<double> grid = {1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.25, 0.1};
    std::vector<std::size_t> prev;
    for (double c : grid) {
        auto sel = calibrate_coverage(sp, c);
        CHECK(sel.size() == static_cast<std::size_t>(std::floor(c * 101.0 + 0.5)));
        if (!prev.empty()) {
            // nested: every index selected at lower coverage appears at higher coverage
            std::set<std::size_t> outer(prev.begin(), prev.end());
            for (std::size_t i : sel) CHECK(outer.count(i) == 1);
        }
        prev = sel;
    }
}

TEST_CASE("selective metric") {
    MetricSpec mse = MetricSpec::from_string("mse");
    MetricSpec mae = MetricSpec::from_string("mae");
    MetricSpec mae10k = MetricSpec::from_string("mae10k");
    CHECK(mse.label() == "mse");
    CHECK(mae10k.label() == "mae/10000");
    CHECK(mae10k.id() == "mae10k");
    CHECK_THROWS_AS(MetricSpec::from_string("rmse"), std::invalid_argument);

    ScoredPredictions sp = make_sp({1, 2}, {0.9, 0.8}, {1, 4});
    std::vector<std::size_t> both = {0, 1};
    CHECK(selective_metric(sp, both, mse) == 2.0);
    CHECK(selective_metric(sp, both, mae) == 1.0);
    std::vector<std::size_t> first = {0};
    CHECK(selective_metric(sp, first, mse) == 0.0);

    ScoredPredictions housing = make_sp({200000.0}, {0.7}, {175000.0});
    std::vector<std::size_t> one = {0};
    CHECK(selective_metric(housing, one, mae10k) == 2.5);  // $25,000 error

    std::vector<std::size_t> none;
    CHECK_THROWS_AS(selective_metric(sp, none, mse), std::invalid_argument);
    std::vector<std::size_t> oob = {5};
    CHECK_THROWS_AS(selective_metric(sp, oob, mse), std::invalid_argument);

    // c = 1.0 equals the plain full-test metric
    auto all = calibrate_coverage(sp, 1.0);
    CHECK(selective_metric(sp, all, mse) == (0.0 + 4.0) / 2.0);
}

TEST_CASE("aggregation over trials") {
    MetricSpec mse = MetricSpec::from_string("mse");
    std::vector<double> two = {2.0, 4.0};
    RiskCoverageRow row = aggregate_cell(0.7, mse, two);
    CHECK(row.mean == 3.0);
    CHECK(row.stddev == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(row.trials == 2);
    CHECK(row.coverage == 0.7);

    std::vector<double> one = {5.0};
    RiskCoverageRow single = aggregate_cell(1.0, mse, one);
    CHECK(single.mean == 5.0);
    CHECK(single.stddev == 0.0);
    CHECK(single.trials == 1);

    std::vector<double> empty;
    CHECK_THROWS_AS(aggregate_cell(0.5, mse, empty), std::invalid_argument);
}

TEST_CASE("risk-coverage report rows") {
    MetricSpec mse = MetricSpec::from_string("mse");
    ScoredPredictions t1 = make_sp({1, 2, 3, 4}, {0.9, 0.8, 0.2, 0.1}, {1, 2, 5, 8});
    ScoredPredictions t2 = make_sp({1, 2, 3, 4}, {0.1, 0.9, 0.8, 0.2}, {3, 2, 3, 4});
    std::vector<ScoredPredictions> trials = {t1, t2};
    std::vector<double> coverages = {1.0, 0.5};

    auto rows = risk_coverage_report(trials, coverages, mse);
    REQUIRE(rows.size() == 2);
    // c=1: t1 -> (0+0+4+16)/4 = 5; t2 -> (4+0+0+0)/4 = 1
    CHECK(rows[0].mean == 3.0);
    CHECK(rows[0].trials == 2);
    // c=0.5: t1 keeps {0,1} -> 0; t2 keeps {1,2} -> 0
    CHECK(rows[1].mean == 0.0);

    // invariant to trial ordering
    std::vector<ScoredPredictions> swapped = {t2, t1};
    auto rows2 = risk_coverage_report(swapped, coverages, mse);
    CHECK(rows2[0].mean == rows[0].mean);
    CHECK(rows2[0].stddev == rows[0].stddev);
}

TEST_CASE("csv formatting") {
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(100.0) == "100");
    CHECK(format_double(1.0 / 3.0) == "0.3333333333333333");

    MetricSpec mse = MetricSpec::from_string("mse");
    std::vector<double> vals = {2.0, 4.0};
    std::vector<RiskCoverageRow> rows = {aggregate_cell(0.5, mse, vals)};
    std::string csv = report_csv("gumbel", "ccs", rows);
    CHECK(csv.find("method,dataset,coverage,metric,mean,std,trials\n") == 0);
    CHECK(csv.find("gumbel,ccs,50,mse,3,") != std::string::npos);  // coverage in percent
    CHECK(csv.back() == '\n');
}

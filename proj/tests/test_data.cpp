#include <doctest.h>

#include <cmath>
#include <set>

#include "../src/data.hpp"
#include <stdexcept>

using namespace selnet;

TEST_CASE("csv parsing: quoting, escapes, newlines, missing markers") {
    RawTable t = parse_csv(
        "name,note,score\n"
        "alpha,\"hey, there\",1\n"
        "beta,\"line\nbreak\",2\r\n"
        "gamma,\"quote \"\" inside\",3\n"
        "delta,,4\n"
        "eps,NA,5\n",
        "mem");
    CHECK(t.rows() == 5);
    CHECK(t.columns.size() == 3);
    CHECK(t.column("note").cells[0].value() == "hey, there");
    CHECK(t.column("note").cells[1].value() == "line\nbreak");
    CHECK(t.column("note").cells[2].value() == "quote \" inside");
    CHECK(!t.column("note").cells[3].has_value());  // "" is missing
    CHECK(!t.column("note").cells[4].has_value());  // NA is missing
    CHECK(t.column("score").kind == ColumnKind::Numeric);
    CHECK(t.column("score").numeric[2] == 3.0);
    CHECK(t.column("name").kind == ColumnKind::Categorical);
}

TEST_CASE("csv type inference") {
    RawTable t = parse_csv("a,b,c\n1,1,-3.5e2\n2,2,.5\nx,3,7\n", "mem");
    CHECK(t.column("a").kind == ColumnKind::Categorical);  // {1,2,x}
    CHECK(t.column("b").kind == ColumnKind::Numeric);
    CHECK(t.column("c").kind == ColumnKind::Numeric);
    CHECK(t.column("c").numeric[0] == -350.0);

    // missing cells don't block numeric inference
    RawTable m = parse_csv("v\n1\n\n3\n", "mem");
    CHECK(m.column("v").kind == ColumnKind::Numeric);
    CHECK(std::isnan(m.column("v").numeric[1]));
}

TEST_CASE("csv parse errors carry line numbers") {
    CHECK_THROWS_WITH_AS(parse_csv("a,b\n1,2\n3\n", "mem"), doctest::Contains("mem:3:"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_csv("a,b\n1,2,3\n", "mem"), doctest::Contains("mem:2:"), std::invalid_argument);
    CHECK_THROWS_AS(parse_csv("a,\"b\n1,2\n", "mem"), std::invalid_argument);  // unterminated quote
    CHECK_THROWS_WITH_AS(parse_csv("a,3\"4\n1,2\n", "mem"), doctest::Contains("mem:1:"), std::invalid_argument);
    CHECK_THROWS_AS(parse_csv("", "mem"), std::invalid_argument);
    CHECK_THROWS_AS(parse_csv("a,b\n", "mem"), std::invalid_argument);      // header only
    CHECK_THROWS_AS(parse_csv("a,a\n1,2\n", "mem"), std::invalid_argument); // duplicate header
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), std::invalid_argument);
}

TEST_CASE("fixture file loads") {
    RawTable t = load_csv(std::string(SELNET_FIXTURE_DIR) + "/toy.csv");
    CHECK(t.rows() == 6);
    CHECK(t.column("y").kind == ColumnKind::Numeric);
}

TEST_CASE("concrete csv shape") {
    RawTable t = load_csv(std::string(SELNET_DATA_DIR) + "/concrete.csv");
    CHECK(t.rows() == 1030);
    CHECK(t.columns.size() == 9);  // 8 features + target
    for (const Column& c : t.columns) CHECK(c.kind == ColumnKind::Numeric);
}

TEST_CASE("split: sizes, determinism, disjoint cover") {
    SplitSpec spec;
    spec.seed = 5;
    SplitIndices s = split(10, spec);
    CHECK(s.train.size() == 6);
    CHECK(s.val.size() == 2);
    CHECK(s.test.size() == 2);

    SplitIndices s2 = split(10, spec);
    CHECK(s.train == s2.train);
    CHECK(s.val == s2.val);
    CHECK(s.test == s2.test);

    spec.seed = 6;
    SplitIndices s3 = split(10, spec);
    CHECK(s.train != s3.train);  // different seed shuffles differently

    std::set<std::size_t> all;
    for (auto v : {&s.train, &s.val, &s.test})
        for (std::size_t i : *v) CHECK(all.insert(i).second);
    CHECK(all.size() == 10);

    SplitSpec ames;
    ames.kind = SplitSpec::Kind::Counts;
    ames.train_count = 1022;
    ames.val_count = 0;
    ames.seed = 1;
    SplitIndices a = split(1460, ames);
    CHECK(a.train.size() == 1022);
    CHECK(a.val.empty());
    CHECK(a.test.size() == 438);

    SplitSpec bad;
    bad.train_frac = 0.5;
    bad.val_frac = 0.2;
    bad.test_frac = 0.2;  // sums to 0.9
    CHECK_THROWS_AS(split(10, bad), std::invalid_argument);

    SplitSpec tiny;  // 60/20/20 of 3 -> 2/1/0: empty test is a hard error
    CHECK_THROWS_AS(split(3, tiny), std::invalid_argument);

    SplitSpec ok3;
    ok3.train_frac = 0.34;
    ok3.val_frac = 0.33;
    ok3.test_frac = 0.33;
    SplitIndices t3 = split(3, ok3);
    CHECK(t3.train.size() + t3.val.size() + t3.test.size() == 3);
}

TEST_CASE("preprocess: imputation, one-hot, standardization") {
    RawTable t = parse_csv(
        "num,cat,const,y\n"
        "1,a,7,10\n"
        ",b,7,20\n"
        "3,a,7,30\n"
        "5,zed,7,40\n",
        "mem");
    std::vector<std::size_t> fit = {0, 2};  // rows 1 and 3 are held out
    Dataset ds = preprocess(t, {"y", {}, true, true}, fit);

    // blocks: num (mean of fit rows 1,3 = 2), cat vocab {a} + unseen, const
    const FeatureBlock* num = nullptr;
    const FeatureBlock* cat = nullptr;
    for (const FeatureBlock& b : ds.blocks) {
        if (b.source == "num") num = &b;
        if (b.source == "cat") cat = &b;
    }
    REQUIRE(num != nullptr);
    REQUIRE(cat != nullptr);
    CHECK(num->impute_value == 2.0);
    CHECK(cat->vocab.size() == 2);  // {"a"} + unseen bucket
    CHECK(cat->vocab[0] == "a");
    CHECK(cat->impute_token == "a");

    // feature names: num, cat=a, cat=<unseen>, const
    REQUIRE(ds.feature_names.size() == 4);
    CHECK(ds.feature_names[0] == "num");
    CHECK(ds.feature_names[1] == "cat=a");
    CHECK(ds.feature_names[2] == "cat=<unseen>");
    CHECK(ds.feature_names[3] == "const");

    // one-hot before standardization sums to 1 per source column; here both
    // fit rows are "a", so the encoded columns are constant on fit rows and
    // standardize to zero; rows 1 and 3 stay distinguishable pre-scaling.
    // Standardized fit rows: mean 0, var 1 per non-constant column.
    double mu = 0.5 * (ds.X.at(0, 0) + ds.X.at(2, 0));
    CHECK(std::fabs(mu) < 1e-9);
    double var = 0.5 * (ds.X.at(0, 0) * ds.X.at(0, 0) + ds.X.at(2, 0) * ds.X.at(2, 0));
    CHECK(std::fabs(var - 1.0) < 1e-6);

    // constant columns collapse to exactly zero everywhere
    for (std::size_t r = 0; r < 4; ++r) CHECK(ds.X.at(r, 3) == 0.0);

    // unseen category ("b" and "zed" were not in fit rows) hits the unseen bucket
    CHECK(ds.blocks.size() == 3);
    CHECK(all_finite(ds.X));

    // target standardized on fit rows (10, 30): mu=20, sigma=10
    CHECK(ds.target_mu == 20.0);
    CHECK(ds.target_sigma == 10.0);
    CHECK(ds.y.at(0, 0) == -1.0);
    CHECK(ds.y.at(2, 0) == 1.0);
    CHECK(ds.to_natural(ds.y.at(3, 0)) == 40.0);
}

TEST_CASE("preprocess: one-hot [a,b,a] fixture") {
    RawTable t = parse_csv("cat,y\na,1\nb,2\na,3\n", "mem");
    std::vector<std::size_t> fit = {0, 1, 2};
    Dataset ds = preprocess(t, {"y", {}, false, false}, fit);
    REQUIRE(ds.feature_names.size() == 3);  // a, b, unseen bucket
    CHECK(ds.feature_names[0] == "cat=a");
    CHECK(ds.feature_names[1] == "cat=b");
    CHECK(ds.X.at(0, 0) == 1.0);
    CHECK(ds.X.at(0, 1) == 0.0);
    CHECK(ds.X.at(1, 0) == 0.0);
    CHECK(ds.X.at(1, 1) == 1.0);
    CHECK(ds.X.at(2, 0) == 1.0);
    for (std::size_t r = 0; r < 3; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 3; ++c) sum += ds.X.at(r, c);
        CHECK(sum == 1.0);  // unseen bucket included
    }
}

TEST_CASE("preprocess: categorical mode tie breaks to smallest token") {
    RawTable t = parse_csv("cat,y\nb,1\na,2\n,3\nb,4\na,5\n", "mem");
    std::vector<std::size_t> fit = {0, 1, 3, 4};  // two a's, two b's
    Dataset ds = preprocess(t, {"y", {}, false, false}, fit);
    CHECK(ds.blocks[0].impute_token == "a");
}

TEST_CASE("preprocess: drop columns and error cases") {
    RawTable t = parse_csv("a,b,y\n1,x,1\n2,y,2\n3,z,3\n", "mem");
    std::vector<std::size_t> fit = {0, 1, 2};

    Dataset ds = preprocess(t, {"y", {"b"}, true, true}, fit);
    for (const std::string& n : ds.feature_names) CHECK(n.find("b=") == std::string::npos);

    CHECK_THROWS_AS(preprocess(t, {"y", {"nope"}, true, true}, fit), std::invalid_argument);
    CHECK_THROWS_AS(preprocess(t, {"b", {}, true, true}, fit), std::invalid_argument);     // non-numeric target
    CHECK_THROWS_AS(preprocess(t, {"missing", {}, true, true}, fit), std::invalid_argument);

    RawTable holes = parse_csv("a,y\n,1\n,2\n3,3\n", "mem");
    std::vector<std::size_t> fit01 = {0, 1};
    CHECK_THROWS_WITH_AS(preprocess(holes, {"y", {}, true, true}, fit01), doctest::Contains("'a'"),
                         std::invalid_argument);  // all-missing numeric column on fit rows

    RawTable consty = parse_csv("a,y\n1,5\n2,5\n", "mem");
    std::vector<std::size_t> both = {0, 1};
    CHECK_THROWS_AS(preprocess(consty, {"y", {}, true, true}, both), std::invalid_argument);

    RawTable missy = parse_csv("a,y\n1,5\n2,\n", "mem");
    CHECK_THROWS_AS(preprocess(missy, {"y", {}, true, true}, both), std::invalid_argument);  // missing target
}

TEST_CASE("preprocess: no leakage from non-fit rows") {
    RawTable t = parse_csv("num,cat,y\n1,a,1\n2,a,2\n3,b,3\n4,c,4\n", "mem");
    std::vector<std::size_t> fit = {0, 1};
    Dataset before = preprocess(t, {"y", {}, true, true}, fit);

    // mutate the held-out rows: statistics fitted on rows {0,1} must not move
    RawTable mutated = t;
    mutated.columns[0].cells[2] = "1000";
    mutated.columns[0].numeric[2] = 1000.0;
    mutated.columns[1].cells[3] = "weird";
    mutated.columns[2].cells[3] = "99";
    mutated.columns[2].numeric[3] = 99.0;
    Dataset after = preprocess(mutated, {"y", {}, true, true}, fit);

    CHECK(before.blocks[0].impute_value == after.blocks[0].impute_value);
    CHECK(before.blocks[1].vocab == after.blocks[1].vocab);
    CHECK(before.feature_mu == after.feature_mu);
    CHECK(before.feature_sigma == after.feature_sigma);
    CHECK(before.target_mu == after.target_mu);
    CHECK(before.target_sigma == after.target_sigma);
    for (std::size_t i : fit)
        for (std::size_t c = 0; c < before.X.cols(); ++c) CHECK(before.X.at(i, c) == after.X.at(i, c));
}

TEST_CASE("gather_rows") {
    Tensor X = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
    std::vector<std::size_t> idx = {2, 0};
    Tensor G = gather_rows(X, idx);
    CHECK(G.rows() == 2);
    CHECK(G.at(0, 0) == 5.0);
    CHECK(G.at(1, 1) == 2.0);
}

#include "data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "rng.hpp"

namespace selnet {

namespace {

bool is_missing_token(const std::string& s) { return s.empty() || s == "NA"; }

bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\t')) --e;
    if (b == e) return false;
    auto [ptr, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && ptr == e;
}

// splits raw text into records of fields, tracking line numbers for errors
struct CsvReader {
    const std::string& text;
    const std::string& origin;
    std::size_t pos = 0;
    std::size_t line = 1;

    bool eof() const { return pos >= text.size(); }

    // returns false at end of input
    bool next_record(std::vector<std::string>& fields, std::size_t& record_line) {
        fields.clear();
        if (eof()) return false;
        record_line = line;
        std::string field;
        bool in_quotes = false;
        bool saw_any = false;
        while (pos < text.size()) {
            char c = text[pos];
            if (in_quotes) {
                if (c == '"') {
                    if (pos + 1 < text.size() && text[pos + 1] == '"') {
                        field += '"';
                        pos += 2;
                    } else {
                        in_quotes = false;
                        ++pos;
                    }
                } else {
                    if (c == '\n') ++line;
                    field += c;
                    ++pos;
                }
                continue;
            }
            if (c == '"') {
                if (!field.empty())
                    throw std::invalid_argument(origin + ":" + std::to_string(line) + ": stray quote inside unquoted field");
                in_quotes = true;
                saw_any = true;
                ++pos;
            } else if (c == ',') {
                fields.push_back(std::move(field));
                field.clear();
                saw_any = true;
                ++pos;
            } else if (c == '\r') {
                ++pos;  // swallow; the \n (if any) terminates the record
            } else if (c == '\n') {
                ++pos;
                ++line;
                fields.push_back(std::move(field));
                return true;
            } else {
                field += c;
                saw_any = true;
                ++pos;
            }
        }
        if (in_quotes) throw std::invalid_argument(origin + ":" + std::to_string(record_line) + ": unterminated quoted field");
        if (!saw_any && fields.empty()) return false;  // trailing newline already consumed
        fields.push_back(std::move(field));
        return true;
    }
};

}  // namespace

bool RawTable::has_column(const std::string& name) const {
    for (const Column& c : columns)
        if (c.name == name) return true;
    return false;
}

const Column& RawTable::column(const std::string& name) const {
    for (const Column& c : columns)
        if (c.name == name) return c;
    throw std::invalid_argument("no column named '" + name + "'");
}

RawTable parse_csv(const std::string& text, const std::string& origin) {
    CsvReader reader{text, origin};
    std::vector<std::string> fields;
    std::size_t record_line = 0;
    if (!reader.next_record(fields, record_line))
        throw std::invalid_argument(origin + ": empty file, expected a header row");

    RawTable table;
    table.columns.resize(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
        if (fields[j].empty())
            throw std::invalid_argument(origin + ":" + std::to_string(record_line) + ": empty column name in header");
        for (std::size_t k = 0; k < j; ++k)
            if (table.columns[k].name == fields[j])
                throw std::invalid_argument(origin + ":" + std::to_string(record_line) + ": duplicate column name '" +
                                         fields[j] + "'");
        table.columns[j].name = fields[j];
    }

    std::size_t ncols = table.columns.size();
    while (reader.next_record(fields, record_line)) {
        if (fields.size() != ncols)
            throw std::invalid_argument(origin + ":" + std::to_string(record_line) + ": expected " +
                                     std::to_string(ncols) + " fields, got " + std::to_string(fields.size()));
        for (std::size_t j = 0; j < ncols; ++j) {
            if (is_missing_token(fields[j]))
                table.columns[j].cells.emplace_back(std::nullopt);
            else
                table.columns[j].cells.emplace_back(std::move(fields[j]));
        }
    }
    if (table.rows() == 0) throw std::invalid_argument(origin + ": no data rows");

    // a column is numeric when every present cell parses; cache the values
    for (Column& col : table.columns) {
        bool numeric = true;
        std::vector<double> vals(col.cells.size(), std::numeric_limits<double>::quiet_NaN());
        for (std::size_t i = 0; i < col.cells.size() && numeric; ++i) {
            if (!col.cells[i]) continue;
            double v;
            if (parse_double(*col.cells[i], v))
                vals[i] = v;
            else
                numeric = false;
        }
        bool any_present = false;
        for (const auto& c : col.cells)
            if (c) any_present = true;
        col.kind = (numeric && any_present) ? ColumnKind::Numeric : ColumnKind::Categorical;
        if (col.kind == ColumnKind::Numeric) col.numeric = std::move(vals);
    }
    return table;
}

RawTable load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), path);
}

SplitIndices split(std::size_t m, const SplitSpec& spec) {
    if (m == 0) throw std::invalid_argument("split: empty table");
    std::size_t n_train = 0, n_val = 0;
    if (spec.kind == SplitSpec::Kind::Fractions) {
        if (!(spec.train_frac > 0.0) || spec.val_frac < 0.0 || !(spec.test_frac > 0.0))
            throw std::invalid_argument("split: fractions must satisfy train > 0, val >= 0, test > 0");
        if (std::fabs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) > 1e-9)
            throw std::invalid_argument("split: fractions must sum to 1");
        n_train = static_cast<std::size_t>(std::floor(spec.train_frac * static_cast<double>(m) + 0.5));
        n_val = static_cast<std::size_t>(std::floor(spec.val_frac * static_cast<double>(m) + 0.5));
    } else {
        n_train = spec.train_count;
        n_val = spec.val_count;
    }
    if (n_train == 0 || n_train + n_val >= m)
        throw std::invalid_argument("split: sizes leave no test rows (m=" + std::to_string(m) + ", train=" +
                                    std::to_string(n_train) + ", val=" + std::to_string(n_val) + ")");

    std::vector<std::size_t> perm(m);
    for (std::size_t i = 0; i < m; ++i) perm[i] = i;
    Rng rng(spec.seed);
    rng.shuffle(perm);

    SplitIndices out;
    out.train.assign(perm.begin(), perm.begin() + n_train);
    out.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    out.test.assign(perm.begin() + n_train + n_val, perm.end());
    return out;
}

Dataset preprocess(const RawTable& table, const PreprocessSpec& spec, std::span<const std::size_t> fit_rows) {
    if (fit_rows.empty()) throw std::invalid_argument("preprocess: no fit rows");
    std::size_t m = table.rows();
    for (std::size_t r : fit_rows)
        if (r >= m) throw std::invalid_argument("preprocess: fit row index out of range");

    const Column& target = table.column(spec.target_column);
    if (target.kind != ColumnKind::Numeric)
        throw std::invalid_argument("target column '" + spec.target_column + "' is not numeric");
    for (std::size_t i = 0; i < m; ++i)
        if (!target.cells[i])
            throw std::invalid_argument("target column '" + spec.target_column + "' has a missing value at data row " +
                                        std::to_string(i + 1));

    auto dropped = [&](const std::string& name) {
        return std::find(spec.drop_columns.begin(), spec.drop_columns.end(), name) != spec.drop_columns.end();
    };
    for (const std::string& d : spec.drop_columns)
        if (!table.has_column(d)) throw std::invalid_argument("drop column '" + d + "' does not exist");

    Dataset ds;
    std::vector<std::vector<double>> cols;  // encoded feature columns, pre-standardization

    for (const Column& col : table.columns) {
        if (col.name == spec.target_column || dropped(col.name)) continue;
        FeatureBlock block;
        block.source = col.name;
        block.kind = col.kind;
        if (col.kind == ColumnKind::Numeric) {
            double sum = 0.0;
            std::size_t n = 0;
            for (std::size_t r : fit_rows)
                if (col.cells[r]) {
                    sum += col.numeric[r];
                    ++n;
                }
            if (n == 0)
                throw std::invalid_argument("numeric column '" + col.name +
                                            "' has no present values among the fit rows");
            block.impute_value = sum / static_cast<double>(n);
            std::vector<double> v(m);
            for (std::size_t i = 0; i < m; ++i) v[i] = col.cells[i] ? col.numeric[i] : block.impute_value;
            cols.push_back(std::move(v));
            ds.feature_names.push_back(col.name);
        } else {
            std::map<std::string, std::size_t> counts;
            for (std::size_t r : fit_rows)
                if (col.cells[r]) ++counts[*col.cells[r]];
            block.vocab.reserve(counts.size());
            std::size_t best = 0;
            for (const auto& [tok, cnt] : counts) {
                block.vocab.push_back(tok);  // std::map iterates sorted
                if (cnt > best) {
                    best = cnt;
                    block.impute_token = tok;  // first max wins = lexicographically smallest
                }
            }
            if (block.vocab.empty()) block.impute_token = "";
            std::size_t seen = block.vocab.size();
            std::size_t width = seen + 1;  // trailing unseen bucket
            std::vector<std::vector<double>> hot(width, std::vector<double>(m, 0.0));
            auto last = block.vocab.begin() + static_cast<std::ptrdiff_t>(seen);
            for (std::size_t i = 0; i < m; ++i) {
                const std::string& tok = col.cells[i] ? *col.cells[i] : block.impute_token;
                auto it = std::lower_bound(block.vocab.begin(), last, tok);
                std::size_t j = (it != last && *it == tok)
                                    ? static_cast<std::size_t>(it - block.vocab.begin())
                                    : seen;
                hot[j][i] = 1.0;
            }
            block.vocab.push_back("<unseen>");  // the bucket is part of the published vocabulary
            for (std::size_t j = 0; j < width; ++j) {
                cols.push_back(std::move(hot[j]));
                ds.feature_names.push_back(col.name + "=" + block.vocab[j]);
            }
        }
        ds.blocks.push_back(std::move(block));
    }

    std::size_t d = cols.size();
    if (d == 0) throw std::invalid_argument("preprocess: no feature columns left");

    ds.feature_mu.assign(d, 0.0);
    ds.feature_sigma.assign(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
        double mu = 0.0;
        for (std::size_t r : fit_rows) mu += cols[j][r];
        mu /= static_cast<double>(fit_rows.size());
        double var = 0.0;
        for (std::size_t r : fit_rows) {
            double dv = cols[j][r] - mu;
            var += dv * dv;
        }
        var /= static_cast<double>(fit_rows.size());
        double sigma = std::sqrt(var);
        ds.feature_mu[j] = mu;
        ds.feature_sigma[j] = sigma;
        if (spec.standardize_features) {
            if (var > 1e-12)
                for (double& v : cols[j]) v = (v - mu) / sigma;
            else
                for (double& v : cols[j]) v = 0.0;  // constant column carries no signal
        }
    }

    ds.X = Tensor::zeros({m, d});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) ds.X.at(i, j) = cols[j][i];

    double tmu = 0.0;
    for (std::size_t r : fit_rows) tmu += target.numeric[r];
    tmu /= static_cast<double>(fit_rows.size());
    double tvar = 0.0;
    for (std::size_t r : fit_rows) {
        double dv = target.numeric[r] - tmu;
        tvar += dv * dv;
    }
    tvar /= static_cast<double>(fit_rows.size());
    double tsigma = std::sqrt(tvar);

    ds.y = Tensor::zeros({m, 1});
    if (spec.standardize_target) {
        if (tvar <= 1e-12) throw std::invalid_argument("target column is constant on the fit rows");
        ds.target_mu = tmu;
        ds.target_sigma = tsigma;
        for (std::size_t i = 0; i < m; ++i) ds.y.at(i, 0) = (target.numeric[i] - tmu) / tsigma;
    } else {
        for (std::size_t i = 0; i < m; ++i) ds.y.at(i, 0) = target.numeric[i];
    }
    return ds;
}

Tensor gather_rows(const Tensor& X, std::span<const std::size_t> idx) {
    if (X.rank() != 2) throw std::invalid_argument("gather_rows: expects a matrix");
    std::size_t d = X.cols();
    Tensor out = Tensor::zeros({idx.size(), d});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= X.rows()) throw std::invalid_argument("gather_rows: index out of range");
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) = X.at(idx[i], j);
    }
    return out;
}

}  // namespace selnet

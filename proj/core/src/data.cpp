#include "tabncd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace tabncd::data {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool in_quotes = false;
    for (char c : line) {
        if (c == '"') {
            in_quotes = !in_quotes;
        } else if (c == ',' && !in_quotes) {
            cells.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    cells.push_back(cell);
    return cells;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& s, double& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    const char* begin = t.data();
    const char* end = begin + t.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

// sort raw label values numerically when they all parse, else lexicographically
std::vector<std::string> sorted_class_values(const std::vector<std::string>& labels) {
    std::set<std::string> distinct(labels.begin(), labels.end());
    std::vector<std::string> values(distinct.begin(), distinct.end());
    bool all_numeric = true;
    std::vector<double> parsed(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!parse_double(values[i], parsed[i])) {
            all_numeric = false;
            break;
        }
    }
    if (all_numeric) {
        std::vector<std::size_t> order(values.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return parsed[a] < parsed[b]; });
        std::vector<std::string> sorted;
        sorted.reserve(values.size());
        for (auto i : order) sorted.push_back(values[i]);
        return sorted;
    }
    return values;  // std::set already gives lexicographic order
}

}  // namespace

std::vector<int> TabularDataset::train_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < n_rows(); ++i)
        if (is_train[i]) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> TabularDataset::train_labelled_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < n_rows(); ++i)
        if (is_train[i] && is_labelled[i]) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> TabularDataset::train_unlabelled_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < n_rows(); ++i)
        if (is_train[i] && !is_labelled[i]) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> TabularDataset::test_labelled_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < n_rows(); ++i)
        if (!is_train[i] && is_labelled[i]) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> TabularDataset::test_unlabelled_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < n_rows(); ++i)
        if (!is_train[i] && !is_labelled[i]) out.push_back(static_cast<int>(i));
    return out;
}

Matrix TabularDataset::rows(const std::vector<int>& indices) const {
    Matrix out(static_cast<Eigen::Index>(indices.size()), features.cols());
    for (std::size_t i = 0; i < indices.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = features.row(indices[i]);
    return out;
}

std::vector<int> TabularDataset::unknown_truth(const std::vector<int>& indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    const int offset = n_known();
    for (int idx : indices) {
        const int label = labels[idx];
        if (label < offset) throw InputError("unknown_truth: row belongs to a known class");
        out.push_back(label - offset);
    }
    return out;
}

RawTable load_csv(const std::string& path, const std::vector<ColumnSpec>& schema,
                  const std::string& label_column) {
    std::ifstream is(path);
    if (!is) throw IngestionError("load_csv: cannot open " + path);

    std::string line;
    if (!std::getline(is, line)) throw IngestionError("load_csv: empty file " + path);
    const auto header = split_line(line);

    std::unordered_map<std::string, const ColumnSpec*> by_name;
    for (const auto& spec : schema) by_name[spec.name] = &spec;

    int label_idx = -1;
    std::vector<const ColumnSpec*> col_spec(header.size(), nullptr);
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string name = trim(header[c]);
        if (name == label_column) {
            if (label_idx >= 0) throw IngestionError("load_csv: duplicate label column");
            label_idx = static_cast<int>(c);
            continue;
        }
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw IngestionError("load_csv: column '" + name + "' not covered by schema");
        col_spec[c] = it->second;
    }
    if (label_idx < 0)
        throw IngestionError("load_csv: label column '" + label_column + "' not found");

    RawTable table;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (static_cast<int>(c) == label_idx) continue;
        table.feature_names.push_back(col_spec[c]->name);
        table.feature_kinds.push_back(col_spec[c]->kind);
    }

    std::size_t row_no = 1;
    while (std::getline(is, line)) {
        ++row_no;
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size()) {
            std::ostringstream os;
            os << "load_csv: row " << row_no << " has " << cells.size()
               << " cells, header has " << header.size();
            throw IngestionError(os.str());
        }
        std::vector<double> numeric;
        std::vector<std::string> categorical;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (static_cast<int>(c) == label_idx) continue;
            const std::string cell = trim(cells[c]);
            if (cell.empty()) {
                std::ostringstream os;
                os << "load_csv: missing value at row " << row_no << ", column '"
                   << header[c] << "'";
                throw IngestionError(os.str());
            }
            if (col_spec[c]->kind == ColumnKind::Numeric) {
                double value;
                if (!parse_double(cell, value)) {
                    std::ostringstream os;
                    os << "load_csv: unparsable numeric cell '" << cell << "' at row "
                       << row_no << ", column '" << header[c] << "'";
                    throw IngestionError(os.str());
                }
                numeric.push_back(value);
            } else {
                const auto& declared = col_spec[c]->categories;
                if (!declared.empty() &&
                    std::find(declared.begin(), declared.end(), cell) == declared.end()) {
                    std::ostringstream os;
                    os << "load_csv: unknown category '" << cell << "' at row " << row_no
                       << ", column '" << header[c] << "'";
                    throw IngestionError(os.str());
                }
                categorical.push_back(cell);
            }
        }
        table.numeric_values.push_back(std::move(numeric));
        table.categorical_values.push_back(std::move(categorical));
        table.labels.push_back(trim(cells[label_idx]));
    }
    return table;
}

namespace {

struct MergedRaw {
    const RawTable* train;
    const RawTable* test;  // may be null

    std::size_t n_rows() const {
        return train->n_rows() + (test ? test->n_rows() : 0);
    }
    const std::string& label(std::size_t i) const {
        return i < train->n_rows() ? train->labels[i]
                                   : test->labels[i - train->n_rows()];
    }
    const std::vector<double>& numeric(std::size_t i) const {
        return i < train->n_rows() ? train->numeric_values[i]
                                   : test->numeric_values[i - train->n_rows()];
    }
    const std::vector<std::string>& categorical(std::size_t i) const {
        return i < train->n_rows() ? train->categorical_values[i]
                                   : test->categorical_values[i - train->n_rows()];
    }
};

}  // namespace

TabularDataset preprocess(const RawTable& raw, const SplitConfig& split,
                          const RawTable* test_raw) {
    if (raw.n_rows() == 0) throw InputError("preprocess: empty table");
    if (test_raw && test_raw->feature_names != raw.feature_names)
        throw InputError("preprocess: train/test schemas differ");
    if (split.train_fraction <= 0.0 || split.train_fraction >= 1.0)
        throw ConfigError("preprocess: train_fraction outside (0,1)");

    MergedRaw merged{&raw, test_raw};
    const std::size_t n = merged.n_rows();

    // class inventory over all rows
    std::vector<std::string> all_labels;
    all_labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) all_labels.push_back(merged.label(i));
    const auto class_values = sorted_class_values(all_labels);
    const int n_classes = static_cast<int>(class_values.size());
    if (n_classes < 4)
        throw InputError("preprocess: need at least 4 classes for a known/unknown split");

    // unknown-class selection: explicit list, else the highest-sorting half
    std::set<std::string> unknown_set;
    if (!split.unknown_classes.empty()) {
        for (const auto& value : split.unknown_classes) {
            if (std::find(class_values.begin(), class_values.end(), value) ==
                class_values.end())
                throw ConfigError("preprocess: unknown_classes entry '" + value +
                                  "' is not a class of the dataset");
            unknown_set.insert(value);
        }
    } else {
        int n_unknown = static_cast<int>(std::lround(n_classes * split.unknown_fraction));
        n_unknown = std::clamp(n_unknown, 2, n_classes - 2);
        for (int i = n_classes - n_unknown; i < n_classes; ++i)
            unknown_set.insert(class_values[i]);
    }
    if (unknown_set.size() < 2 || class_values.size() - unknown_set.size() < 2)
        throw ConfigError("preprocess: need at least 2 known and 2 unknown classes");

    // remap: known classes first, then unknown, both in sorted order
    std::vector<std::string> class_names;
    for (const auto& value : class_values)
        if (!unknown_set.count(value)) class_names.push_back(value);
    const int n_known = static_cast<int>(class_names.size());
    for (const auto& value : class_values)
        if (unknown_set.count(value)) class_names.push_back(value);
    std::map<std::string, int> class_id;
    for (std::size_t i = 0; i < class_names.size(); ++i)
        class_id[class_names[i]] = static_cast<int>(i);

    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = class_id.at(merged.label(i));

    // train/test membership
    std::vector<std::uint8_t> is_train(n, 0);
    if (test_raw) {
        for (std::size_t i = 0; i < raw.n_rows(); ++i) is_train[i] = 1;
    } else {
        // stratified split so every class lands on both sides
        std::map<int, std::vector<int>> per_class;
        for (std::size_t i = 0; i < n; ++i) per_class[labels[i]].push_back(static_cast<int>(i));
        Rng rng = make_rng(split.seed, 0xDA7A);
        for (auto& [cls, rows] : per_class) {
            if (rows.size() < 2) {
                throw InputError("preprocess: class '" + class_names[cls] +
                                 "' has fewer than 2 rows, cannot split");
            }
            std::shuffle(rows.begin(), rows.end(), rng);
            auto n_train = static_cast<std::size_t>(
                std::lround(split.train_fraction * static_cast<double>(rows.size())));
            n_train = std::clamp<std::size_t>(n_train, 1, rows.size() - 1);
            for (std::size_t i = 0; i < n_train; ++i) is_train[rows[i]] = 1;
        }
    }

    // fit column statistics on training rows only
    std::size_t numeric_seen = 0, categorical_seen = 0;
    std::vector<ColumnSpec> specs;
    std::vector<std::uint8_t> dropped;  // parallel to specs
    specs.reserve(raw.feature_names.size());
    std::vector<std::string> warnings;

    std::vector<int> train_rows;
    for (std::size_t i = 0; i < n; ++i)
        if (is_train[i]) train_rows.push_back(static_cast<int>(i));
    const double n_train_d = static_cast<double>(train_rows.size());

    for (std::size_t c = 0; c < raw.feature_names.size(); ++c) {
        ColumnSpec spec;
        spec.name = raw.feature_names[c];
        spec.kind = raw.feature_kinds[c];
        bool drop = false;
        if (spec.kind == ColumnKind::Numeric) {
            const std::size_t nc = numeric_seen++;
            double mean = 0.0;
            for (int r : train_rows) mean += merged.numeric(r)[nc];
            mean /= n_train_d;
            double var = 0.0;
            for (int r : train_rows) {
                const double d = merged.numeric(r)[nc] - mean;
                var += d * d;
            }
            var /= n_train_d;  // population variance
            spec.mean = mean;
            spec.std = std::sqrt(var);
            if (spec.std == 0.0) {
                warnings.push_back("dropped constant numeric column '" + spec.name + "'");
                drop = true;
            }
        } else {
            const std::size_t cc = categorical_seen++;
            std::vector<std::string> cats;
            for (int r : train_rows) {
                const auto& v = merged.categorical(r)[cc];
                if (std::find(cats.begin(), cats.end(), v) == cats.end()) cats.push_back(v);
            }
            spec.categories = std::move(cats);
        }
        specs.push_back(std::move(spec));
        dropped.push_back(drop ? 1 : 0);
    }

    // encode
    std::size_t d = 0;
    for (std::size_t c = 0; c < specs.size(); ++c) {
        if (dropped[c]) continue;
        d += specs[c].kind == ColumnKind::Numeric ? 1 : specs[c].categories.size();
    }
    if (d == 0) throw InputError("preprocess: no usable feature columns");

    Matrix features = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t col = 0, nc = 0, cc = 0;
        for (std::size_t c = 0; c < specs.size(); ++c) {
            const auto& spec = specs[c];
            if (spec.kind == ColumnKind::Numeric) {
                const double value = merged.numeric(i)[nc++];
                if (!dropped[c])
                    features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col++)) =
                        (value - spec.mean) / spec.std;
            } else {
                const auto& value = merged.categorical(i)[cc++];
                const auto it =
                    std::find(spec.categories.begin(), spec.categories.end(), value);
                if (it == spec.categories.end())
                    throw IngestionError("preprocess: category '" + value + "' of column '" +
                                         spec.name + "' never appears in training rows");
                const auto offset = static_cast<std::size_t>(
                    std::distance(spec.categories.begin(), it));
                features(static_cast<Eigen::Index>(i),
                         static_cast<Eigen::Index>(col + offset)) = 1.0;
                col += spec.categories.size();
            }
        }
    }

    // fitted specs exclude dropped columns
    std::vector<ColumnSpec> kept_specs;
    kept_specs.reserve(specs.size());
    for (std::size_t c = 0; c < specs.size(); ++c)
        if (!dropped[c]) kept_specs.push_back(std::move(specs[c]));
    specs = std::move(kept_specs);

    TabularDataset ds;
    ds.features = std::move(features);
    ds.labels = std::move(labels);
    ds.is_train = std::move(is_train);
    ds.is_labelled.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        ds.is_labelled[i] = ds.labels[i] < n_known ? 1 : 0;
    for (int i = 0; i < n_known; ++i) ds.known_classes.push_back(i);
    for (int i = n_known; i < n_classes; ++i) ds.unknown_classes.push_back(i);
    ds.column_specs = std::move(specs);
    ds.class_names = std::move(class_names);
    ds.warnings = std::move(warnings);
    return ds;
}

BatchSampler::BatchSampler(const TabularDataset& ds, int batch_size, std::uint64_t seed)
    : batch_size_(batch_size), seed_(seed) {
    if (batch_size < 2) throw ConfigError("BatchSampler: batch_size must be >= 2");
    train_rows_ = ds.train_indices();
    labelled_.reserve(train_rows_.size());
    for (int idx : train_rows_) labelled_.push_back(ds.is_labelled[idx]);
}

std::vector<Batch> BatchSampler::epoch(int epoch_index) const {
    std::vector<std::size_t> order(train_rows_.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(seed_, 0xBA7C000 + static_cast<std::uint64_t>(epoch_index));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size_) {
        const std::size_t stop = std::min(order.size(), start + batch_size_);
        Batch batch;
        for (std::size_t i = start; i < stop; ++i) {
            const std::size_t pick = order[i];
            const int pos = static_cast<int>(batch.rows.size());
            batch.rows.push_back(train_rows_[pick]);
            if (labelled_[pick])
                batch.labelled_pos.push_back(pos);
            else
                batch.unlabelled_pos.push_back(pos);
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

}  // namespace tabncd::data

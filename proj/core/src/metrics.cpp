#include "tabncd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace tabncd::metrics {

namespace {

// contingency counts over compressed ids, keeping the original id values
struct Contingency {
    std::vector<std::vector<long>> counts;  // [pred][truth]
    std::vector<long> pred_totals, truth_totals;
    std::vector<int> pred_values, truth_values;  // compressed id -> original id
    long n = 0;
};

Contingency build_contingency(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size())
        throw DimensionError("metrics: pred/truth length mismatch");
    if (pred.empty()) throw InputError("metrics: empty labelings");
    std::map<int, int> pred_ids, truth_ids;
    for (int p : pred) pred_ids.emplace(p, 0);
    for (int t : truth) truth_ids.emplace(t, 0);
    Contingency c;
    int next = 0;
    for (auto& [k, v] : pred_ids) {
        v = next++;
        c.pred_values.push_back(k);
    }
    next = 0;
    for (auto& [k, v] : truth_ids) {
        v = next++;
        c.truth_values.push_back(k);
    }

    c.counts.assign(pred_ids.size(), std::vector<long>(truth_ids.size(), 0));
    c.pred_totals.assign(pred_ids.size(), 0);
    c.truth_totals.assign(truth_ids.size(), 0);
    c.n = static_cast<long>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred_ids[pred[i]];
        const int t = truth_ids[truth[i]];
        ++c.counts[p][t];
        ++c.pred_totals[p];
        ++c.truth_totals[t];
    }
    return c;
}

double entropy(const std::vector<long>& totals, long n) {
    double h = 0.0;
    for (long cnt : totals) {
        if (cnt == 0) continue;
        const double p = static_cast<double>(cnt) / static_cast<double>(n);
        h -= p * std::log(p);
    }
    return h;
}

}  // namespace

std::vector<int> hungarian_assignment(const Matrix& cost) {
    const int nr = static_cast<int>(cost.rows());
    const int nc = static_cast<int>(cost.cols());
    const int n = std::max(nr, nc);
    if (n == 0) return {};

    // pad to square with zero-cost slots
    Matrix c = Matrix::Zero(n, n);
    c.topLeftCorner(nr, nc) = cost;

    // shortest augmenting paths with potentials, 1-based working arrays
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> assignment(nr, -1);
    for (int j = 1; j <= n; ++j) {
        const int i = match[j];
        if (i >= 1 && i <= nr && j <= nc) assignment[i - 1] = j - 1;
    }
    return assignment;
}

AccResult clustering_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    const auto c = build_contingency(pred, truth);
    const int np = static_cast<int>(c.counts.size());
    const int nt = static_cast<int>(c.counts[0].size());
    const int size = std::max(np, nt);

    // maximize matched count == minimize negated counts
    Matrix cost = Matrix::Zero(size, size);
    for (int p = 0; p < np; ++p)
        for (int t = 0; t < nt; ++t) cost(p, t) = -static_cast<double>(c.counts[p][t]);
    const auto assignment = hungarian_assignment(cost);

    std::vector<int> matched_truth(np, -1);  // compressed pred id -> compressed truth id
    AccResult result;
    long matched = 0;
    for (int p = 0; p < np; ++p) {
        const int t = assignment[p];
        if (t >= 0 && t < nt) {
            matched_truth[p] = t;
            matched += c.counts[p][t];
            result.mapping.emplace_back(c.pred_values[p], c.truth_values[t]);
        }
    }
    result.acc = static_cast<double>(matched) / static_cast<double>(c.n);

    // balanced accuracy: mean per-true-class recall under the same mapping
    double recall_sum = 0.0;
    for (int t = 0; t < nt; ++t) {
        long hit = 0;
        for (int p = 0; p < np; ++p)
            if (matched_truth[p] == t) hit = c.counts[p][t];
        recall_sum += static_cast<double>(hit) / static_cast<double>(c.truth_totals[t]);
    }
    result.bacc = recall_sum / static_cast<double>(nt);
    return result;
}

double nmi(const std::vector<int>& pred, const std::vector<int>& truth) {
    const auto c = build_contingency(pred, truth);
    const double hp = entropy(c.pred_totals, c.n);
    const double ht = entropy(c.truth_totals, c.n);
    if (hp == 0.0 && ht == 0.0) return 1.0;  // both single-cluster: identical partitions
    if (hp == 0.0 || ht == 0.0) return 0.0;

    double mi = 0.0;
    const double n = static_cast<double>(c.n);
    for (std::size_t p = 0; p < c.counts.size(); ++p) {
        for (std::size_t t = 0; t < c.counts[p].size(); ++t) {
            const long nij = c.counts[p][t];
            if (nij == 0) continue;
            const double pij = static_cast<double>(nij) / n;
            mi += pij * std::log(n * static_cast<double>(nij) /
                                 (static_cast<double>(c.pred_totals[p]) *
                                  static_cast<double>(c.truth_totals[t])));
        }
    }
    return mi / (0.5 * (hp + ht));
}

double ari(const std::vector<int>& pred, const std::vector<int>& truth) {
    const auto c = build_contingency(pred, truth);
    auto comb2 = [](long x) {
        return 0.5 * static_cast<double>(x) * static_cast<double>(x - 1);
    };
    double sum_ij = 0.0;
    for (const auto& row : c.counts)
        for (long nij : row) sum_ij += comb2(nij);
    double sum_p = 0.0, sum_t = 0.0;
    for (long a : c.pred_totals) sum_p += comb2(a);
    for (long b : c.truth_totals) sum_t += comb2(b);
    const double total = comb2(c.n);
    const double expected = sum_p * sum_t / total;
    const double max_index = 0.5 * (sum_p + sum_t);
    if (max_index == expected) return 1.0;  // degenerate: single cluster on both sides
    return (sum_ij - expected) / (max_index - expected);
}

EvalReport evaluate(const std::vector<int>& pred_clusters, const data::TabularDataset& ds,
                    std::uint64_t seed, const std::string& run_id) {
    const auto rows = ds.test_unlabelled_indices();
    if (rows.empty()) throw InputError("evaluate: empty unlabelled test set");
    if (pred_clusters.size() != rows.size())
        throw DimensionError("evaluate: one prediction per unlabelled test row required");
    const auto truth = ds.unknown_truth(rows);

    const auto acc = clustering_accuracy(pred_clusters, truth);
    EvalReport report;
    report.acc = acc.acc;
    report.bacc = acc.bacc;
    report.mapping = acc.mapping;
    report.nmi = nmi(pred_clusters, truth);
    report.ari = ari(pred_clusters, truth);
    report.n_eval = static_cast<int>(rows.size());
    report.seed = seed;
    report.run_id = run_id;
    return report;
}

}  // namespace tabncd::metrics

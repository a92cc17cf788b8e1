#include "tabncd/augment.hpp"

#include <algorithm>
#include <numeric>

namespace tabncd::augment {

namespace {

RowVector interpolate(const RowVector& x, const RowVector& neighbor, double lambda) {
    return x + lambda * (neighbor - x);
}

// one synthesis step shared by all entry points: uniform neighbor, uniform lambda
RowVector synthesize_row(const RowVector& x, const Matrix& pool,
                         const std::vector<int>& neighbor_ids, Rng& rng,
                         int* fallback_count) {
    if (neighbor_ids.empty()) {
        if (fallback_count) ++(*fallback_count);
        return x;
    }
    std::uniform_int_distribution<std::size_t> pick(0, neighbor_ids.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int nn = neighbor_ids[pick(rng)];
    const double lambda = unit(rng);
    return interpolate(x, pool.row(nn), lambda);
}

}  // namespace

std::vector<int> k_nearest_neighbors(const Matrix& pool, const RowVector& query, int k,
                                     int exclude_index) {
    if (k < 1) throw ConfigError("k_nearest_neighbors: k must be >= 1");
    std::vector<int> candidates;
    candidates.reserve(pool.rows());
    for (int r = 0; r < pool.rows(); ++r)
        if (r != exclude_index) candidates.push_back(r);
    const int take = std::min<int>(k, static_cast<int>(candidates.size()));
    Vector dist2(pool.rows());
    for (int r : candidates) dist2(r) = (pool.row(r) - query).squaredNorm();
    std::partial_sort(candidates.begin(), candidates.begin() + take, candidates.end(),
                      [&](int a, int b) {
                          if (dist2(a) != dist2(b)) return dist2(a) < dist2(b);
                          return a < b;
                      });
    candidates.resize(take);
    return candidates;
}

Matrix augment_labelled(const Matrix& batch_rows, const std::vector<int>& batch_labels,
                        const Matrix& pool, const std::vector<int>& pool_labels,
                        const AugmentConfig& cfg, Rng& rng,
                        const std::vector<int>* self_indices, int* fallback_count) {
    if (static_cast<std::size_t>(batch_rows.rows()) != batch_labels.size())
        throw DimensionError("augment_labelled: one label per batch row required");
    if (static_cast<std::size_t>(pool.rows()) != pool_labels.size())
        throw DimensionError("augment_labelled: one label per pool row required");

    Matrix out(batch_rows.rows(), batch_rows.cols());
    for (Eigen::Index i = 0; i < batch_rows.rows(); ++i) {
        // restrict the pool to same-class rows, then search within it
        std::vector<int> same_class;
        for (int r = 0; r < pool.rows(); ++r)
            if (pool_labels[r] == batch_labels[i]) same_class.push_back(r);
        Matrix class_pool(static_cast<Eigen::Index>(same_class.size()), pool.cols());
        int exclude = -1;
        for (std::size_t r = 0; r < same_class.size(); ++r) {
            class_pool.row(static_cast<Eigen::Index>(r)) = pool.row(same_class[r]);
            if (self_indices && (*self_indices)[i] == same_class[r])
                exclude = static_cast<int>(r);
        }
        std::vector<int> nn;
        if (class_pool.rows() > (exclude >= 0 ? 1 : 0))
            nn = k_nearest_neighbors(class_pool, batch_rows.row(i), cfg.k_neighbors, exclude);
        out.row(i) = synthesize_row(batch_rows.row(i), class_pool, nn, rng, fallback_count);
    }
    return out;
}

Matrix augment_unlabelled(const Matrix& batch_rows, const Matrix& pool,
                          const AugmentConfig& cfg, Rng& rng,
                          const std::vector<int>* self_indices, int* fallback_count) {
    Matrix out(batch_rows.rows(), batch_rows.cols());
    for (Eigen::Index i = 0; i < batch_rows.rows(); ++i) {
        const int exclude = self_indices ? (*self_indices)[i] : -1;
        std::vector<int> nn;
        if (pool.rows() > (exclude >= 0 ? 1 : 0))
            nn = k_nearest_neighbors(pool, batch_rows.row(i), cfg.k_neighbors, exclude);
        out.row(i) = synthesize_row(batch_rows.row(i), pool, nn, rng, fallback_count);
    }
    return out;
}

Augmenter::Augmenter(const data::TabularDataset& ds, const AugmentConfig& cfg)
    : ds_(&ds), cfg_(cfg) {
    if (cfg.k_neighbors < 1) throw ConfigError("Augmenter: k_neighbors must be >= 1");

    // labelled rows: k nearest same-class labelled training rows
    const auto labelled = ds.train_labelled_indices();
    std::unordered_map<int, std::vector<int>> per_class;
    for (int idx : labelled) per_class[ds.labels[idx]].push_back(idx);
    for (const auto& [cls, members] : per_class) {
        Matrix class_pool(static_cast<Eigen::Index>(members.size()), ds.features.cols());
        for (std::size_t r = 0; r < members.size(); ++r)
            class_pool.row(static_cast<Eigen::Index>(r)) = ds.features.row(members[r]);
        for (std::size_t r = 0; r < members.size(); ++r) {
            auto nn = k_nearest_neighbors(class_pool, class_pool.row(static_cast<Eigen::Index>(r)),
                                          cfg.k_neighbors, static_cast<int>(r));
            std::vector<int> ids;
            ids.reserve(nn.size());
            for (int local : nn) ids.push_back(members[local]);
            neighbors_[members[r]] = std::move(ids);
        }
    }

    // unlabelled rows: k nearest unlabelled training rows
    const auto unlabelled = ds.train_unlabelled_indices();
    Matrix u_pool(static_cast<Eigen::Index>(unlabelled.size()), ds.features.cols());
    for (std::size_t r = 0; r < unlabelled.size(); ++r)
        u_pool.row(static_cast<Eigen::Index>(r)) = ds.features.row(unlabelled[r]);
    for (std::size_t r = 0; r < unlabelled.size(); ++r) {
        auto nn = k_nearest_neighbors(u_pool, u_pool.row(static_cast<Eigen::Index>(r)),
                                      cfg_.k_neighbors, static_cast<int>(r));
        std::vector<int> ids;
        ids.reserve(nn.size());
        for (int local : nn) ids.push_back(unlabelled[local]);
        neighbors_[unlabelled[r]] = std::move(ids);
    }
}

const std::vector<int>& Augmenter::neighbors_of(int row_id) const {
    auto it = neighbors_.find(row_id);
    if (it == neighbors_.end())
        throw InputError("Augmenter: row is not a training row with neighbors");
    return it->second;
}

Matrix Augmenter::synthesize(const std::vector<int>& row_ids, Rng& rng) const {
    Matrix out(static_cast<Eigen::Index>(row_ids.size()), ds_->features.cols());
    for (std::size_t i = 0; i < row_ids.size(); ++i) {
        const auto& nn = neighbors_of(row_ids[i]);
        out.row(static_cast<Eigen::Index>(i)) = synthesize_row(
            ds_->features.row(row_ids[i]), ds_->features, nn, rng, &fallback_count_);
    }
    return out;
}

Matrix Augmenter::augment_labelled(const std::vector<int>& row_ids, Rng& rng) const {
    for (int id : row_ids)
        if (!ds_->is_labelled[id] || !ds_->is_train[id])
            throw InputError("augment_labelled: row is not a labelled training row");
    return synthesize(row_ids, rng);
}

Matrix Augmenter::augment_unlabelled(const std::vector<int>& row_ids, Rng& rng) const {
    for (int id : row_ids)
        if (ds_->is_labelled[id] || !ds_->is_train[id])
            throw InputError("augment_unlabelled: row is not an unlabelled training row");
    return synthesize(row_ids, rng);
}

}  // namespace tabncd::augment

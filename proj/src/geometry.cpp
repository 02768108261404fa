#include "mvtm/geometry.hpp"

#include "mvtm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace mvtm {

namespace {

Eigen::MatrixXd coordinate_matrix(std::span<const AugmentedLocation> points) {
    if (points.empty()) return {};
    const Eigen::Index dim = points[0].spatial.size() + points[0].latent.size();
    Eigen::MatrixXd x(dim, static_cast<Eigen::Index>(points.size()));
    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto& p = points[k];
        if (p.spatial.size() + p.latent.size() != dim)
            throw InputError("augmented locations have inconsistent dimensions");
        if (!p.spatial.allFinite() || !p.latent.allFinite())
            throw InputError("non-finite coordinate at component " + std::to_string(p.component_id));
        x.col(static_cast<Eigen::Index>(k)) << p.spatial, p.latent;
    }
    return x;
}

// Appends the greedy maxmin ordering of `segment` to `order`, measuring
// min-distances against everything already in `order`.
void order_segment(const Eigen::MatrixXd& x, const std::vector<int>& segment, std::vector<int>& order) {
    if (segment.empty()) return;
    const std::size_t count = segment.size();
    std::vector<double> min_d2(count, std::numeric_limits<double>::infinity());
    std::vector<char> taken(count, 0);

    auto absorb = [&](int chosen) {
        for (std::size_t k = 0; k < count; ++k) {
            if (taken[k]) continue;
            const double d2 = (x.col(segment[k]) - x.col(chosen)).squaredNorm();
            if (d2 < min_d2[k]) min_d2[k] = d2;
        }
    };
    for (int prev : order) absorb(prev);

    std::size_t first = 0;
    if (order.empty()) {
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(x.rows());
        for (int idx : segment) centroid += x.col(idx);
        centroid /= static_cast<double>(count);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < count; ++k) {
            const double d2 = (x.col(segment[k]) - centroid).squaredNorm();
            if (d2 < best) {
                best = d2;
                first = k;
            }
        }
    } else {
        for (std::size_t k = 1; k < count; ++k)
            if (min_d2[k] > min_d2[first]) first = k;
    }

    std::size_t next = first;
    for (std::size_t step = 0; step < count; ++step) {
        taken[next] = 1;
        order.push_back(segment[next]);
        absorb(segment[next]);
        // segment is sorted by location index, so the first maximum found is
        // the lowest component id.
        std::size_t best = count;
        for (std::size_t k = 0; k < count; ++k) {
            if (taken[k]) continue;
            if (best == count || min_d2[k] > min_d2[best]) best = k;
        }
        next = best;
    }
}

}  // namespace

Eigen::VectorXd AugmentedLocation::joined() const {
    Eigen::VectorXd out(spatial.size() + latent.size());
    out << spatial, latent;
    return out;
}

std::vector<int> OrderingPlan::zero_distance_positions() const {
    std::vector<int> out;
    for (int n = 1; n < size(); ++n)
        if (nearest_prev_distance[n] <= 0.0) out.push_back(n);
    return out;
}

std::vector<int> OrderingPlan::positions() const {
    std::vector<int> inv(permutation.size());
    for (std::size_t n = 0; n < permutation.size(); ++n) inv[permutation[n]] = static_cast<int>(n);
    return inv;
}

std::vector<AugmentedLocation> augment_locations(std::span<const SpatialSite> sites,
                                                 const Eigen::MatrixXd& latent_positions) {
    const Eigen::Index num_processes = latent_positions.rows();
    if (num_processes < 1) throw InputError("latent position matrix has no rows");
    std::vector<AugmentedLocation> out;
    out.reserve(sites.size());
    Eigen::Index spatial_dim = sites.empty() ? 0 : sites[0].coords.size();
    for (std::size_t k = 0; k < sites.size(); ++k) {
        const auto& s = sites[k];
        if (s.process_id < 1 || s.process_id > num_processes)
            throw InputError("unknown process id " + std::to_string(s.process_id) + " at component " +
                             std::to_string(k + 1));
        if (s.coords.size() != spatial_dim)
            throw InputError("spatial dimension mismatch at component " + std::to_string(k + 1));
        AugmentedLocation loc;
        loc.spatial = s.coords;
        loc.latent = latent_positions.row(s.process_id - 1).transpose();
        loc.process_id = s.process_id;
        loc.component_id = static_cast<int>(k) + 1;
        out.push_back(std::move(loc));
    }
    return out;
}

double squared_distance(const AugmentedLocation& a, const AugmentedLocation& b) {
    if (a.spatial.size() != b.spatial.size() || a.latent.size() != b.latent.size())
        throw InputError("augmented locations have different dimensions");
    return (a.spatial - b.spatial).squaredNorm() + (a.latent - b.latent).squaredNorm();
}

double distance(const AugmentedLocation& a, const AugmentedLocation& b) { return std::sqrt(squared_distance(a, b)); }

std::vector<int> maxmin_order(std::span<const AugmentedLocation> points, std::span<const int> block_last) {
    const int total = static_cast<int>(points.size());
    if (total == 0) throw InputError("cannot order an empty point set");
    const Eigen::MatrixXd x = coordinate_matrix(points);

    std::vector<char> in_block(points.size(), 0);
    for (int idx : block_last) {
        if (idx < 0 || idx >= total) throw InputError("block-last index out of range: " + std::to_string(idx));
        in_block[idx] = 1;
    }
    std::vector<int> head, tail;
    for (int k = 0; k < total; ++k) (in_block[k] ? tail : head).push_back(k);

    std::vector<int> order;
    order.reserve(points.size());
    order_segment(x, head, order);
    order_segment(x, tail, order);
    return order;
}

OrderingPlan conditioning_sets(std::span<const AugmentedLocation> points, std::vector<int> permutation, int m,
                               int block_start) {
    if (m < 1) throw InputError("conditioning set size must be positive");
    if (permutation.size() != points.size()) throw InputError("permutation length does not match point count");
    const Eigen::MatrixXd x = coordinate_matrix(points);
    const int total = static_cast<int>(points.size());

    OrderingPlan plan;
    plan.permutation = std::move(permutation);
    plan.block_start = block_start;
    plan.max_conditioning = m;
    plan.conditioning.resize(points.size());
    plan.nearest_prev_distance.assign(points.size(), 0.0);

    std::vector<std::pair<double, int>> cand;
    cand.reserve(points.size());
    for (int n = 1; n < total; ++n) {
        const auto xn = x.col(plan.permutation[n]);
        cand.clear();
        for (int j = 0; j < n; ++j) cand.emplace_back((x.col(plan.permutation[j]) - xn).squaredNorm(), j);
        const int keep = std::min(m, n);
        std::partial_sort(cand.begin(), cand.begin() + keep, cand.end());
        auto& c = plan.conditioning[n];
        c.reserve(keep);
        for (int i = 0; i < keep; ++i) c.push_back(cand[i].second);
        plan.nearest_prev_distance[n] = std::sqrt(cand[0].first);
    }
    return plan;
}

OrderingPlan build_plan(std::span<const AugmentedLocation> points, int m, std::span<const int> block_last) {
    auto order = maxmin_order(points, block_last);
    std::vector<int> unique_block(block_last.begin(), block_last.end());
    std::sort(unique_block.begin(), unique_block.end());
    unique_block.erase(std::unique(unique_block.begin(), unique_block.end()), unique_block.end());
    const int block_start = static_cast<int>(points.size() - unique_block.size());
    return conditioning_sets(points, std::move(order), m, block_start);
}

}  // namespace mvtm

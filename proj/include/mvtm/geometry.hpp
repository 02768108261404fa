#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace mvtm {

/// A spatial site of one marginal field. Process ids are 1-based.
struct SpatialSite {
    Eigen::VectorXd coords;
    int process_id = 1;
};

/// Spatial coordinates concatenated with the latent position of the
/// site's process. component_id is 1-based and equals index + 1 in the
/// vector the location came from.
struct AugmentedLocation {
    Eigen::VectorXd spatial;
    Eigen::VectorXd latent;
    int process_id = 1;
    int component_id = 1;

    Eigen::VectorXd joined() const;
};

/// Permutation plus Vecchia neighbour structure.
///
/// `permutation[n]` is the location index placed at ordered position n.
/// `conditioning[n]` lists ordered positions (< n) nearest first, and
/// `nearest_prev_distance[n]` is the distance to the first of them
/// (0 for n = 0, where it is undefined).
struct OrderingPlan {
    std::vector<int> permutation;
    std::vector<std::vector<int>> conditioning;
    std::vector<double> nearest_prev_distance;
    /// First ordered position of the block-last segment; equals N when the
    /// ordering is unconstrained.
    int block_start = 0;
    int max_conditioning = 0;

    int size() const { return static_cast<int>(permutation.size()); }
    bool constrained() const { return block_start < size(); }
    /// Ordered positions n >= 1 whose nearest previous neighbour is at
    /// distance zero (duplicate augmented coordinates).
    std::vector<int> zero_distance_positions() const;
    /// Inverse permutation: location index -> ordered position.
    std::vector<int> positions() const;
};

/// `latent_positions` has one row per process; the model uses P-1 columns
/// but any width is accepted.
std::vector<AugmentedLocation> augment_locations(std::span<const SpatialSite> sites,
                                                 const Eigen::MatrixXd& latent_positions);

double squared_distance(const AugmentedLocation& a, const AugmentedLocation& b);
double distance(const AugmentedLocation& a, const AugmentedLocation& b);

/// Greedy maxmin ordering. The first point is the one nearest the centroid;
/// ties go to the lowest component id. Indices listed in `block_last` are
/// ordered after every other point, continuing the same greedy criterion.
std::vector<int> maxmin_order(std::span<const AugmentedLocation> points,
                              std::span<const int> block_last = {});

/// Fills conditioning sets (up to m nearest previously ordered points, ties
/// to the lowest ordered position) and nearest-previous distances.
OrderingPlan conditioning_sets(std::span<const AugmentedLocation> points,
                               std::vector<int> permutation, int m, int block_start);

OrderingPlan build_plan(std::span<const AugmentedLocation> points, int m,
                        std::span<const int> block_last = {});

}  // namespace mvtm

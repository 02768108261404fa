#pragma once

#include "mvtm/geometry.hpp"
#include "mvtm/likelihood.hpp"
#include "mvtm/prior.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace mvtm {

enum class ComponentKind {
    Gp,      ///< conjugate GP / inverse-Gamma posterior
    Pinned,  ///< known linear conditional mean and variance (degenerate prior)
};

struct MapComponent {
    ComponentKind kind = ComponentKind::Gp;
    ComponentPrior prior;
    Eigen::MatrixXd train_neighbors;
    Eigen::MatrixXd gram_factor;
    Eigen::VectorXd weights;
    double alpha_tilde = 0.0;
    double beta_tilde = 0.0;

    Eigen::VectorXd pinned_weights;
    double pinned_variance = 1.0;
};

/// Location-scale Student-t; dof is +inf for pinned components.
struct Predictive {
    double location = 0.0;
    double scale = 1.0;
    double dof = std::numeric_limits<double>::infinity();

    double log_pdf(double y) const;
    double cdf(double y) const;
    double upper_tail(double y) const;
};

struct FittedMap {
    int num_processes = 1;
    std::vector<SpatialSite> sites;
    Eigen::MatrixXd latent_positions;
    Eigen::MatrixXd latent_basis;
    HyperParams theta;
    double g = kDefaultG;
    OrderingPlan plan;
    std::vector<MapComponent> components;  ///< indexed by ordered position
    /// Set when the map was fitted with a block-last ordering for
    /// conditional inference; the block is ordered positions >= plan.block_start.
    bool conditional = false;
    int target_process = 0;

    int size() const { return static_cast<int>(components.size()); }
    /// Location indices of the block-last segment in ascending order.
    std::vector<int> target_locations() const;
};

FittedMap build_map(std::vector<SpatialSite> sites, const Eigen::MatrixXd& latent_basis, const HyperParams& theta,
                    OrderingPlan plan, const Eigen::MatrixXd& train, double g = kDefaultG);

/// Map whose components have fixed linear weights over their conditioning
/// sets and fixed Gaussian variances (the limit of a prior concentrated at
/// known values).
FittedMap make_pinned_map(std::vector<SpatialSite> sites, const Eigen::MatrixXd& latent_positions,
                          OrderingPlan plan, const std::vector<Eigen::VectorXd>& weights,
                          const std::vector<double>& variances);

Predictive predictive(const MapComponent& component, const Eigen::Ref<const Eigen::VectorXd>& neighbor_values);

/// Sum of conditional log densities over ordered positions >= first_position.
/// `field` is indexed by location index.
double log_density(const FittedMap& map, const Eigen::Ref<const Eigen::VectorXd>& field, int first_position = 0);

/// Log density of the block-last segment given the rest of `field`.
double conditional_log_density(const FittedMap& map, const Eigen::Ref<const Eigen::VectorXd>& field);

/// count x N matrix of joint samples (columns = location index).
Eigen::MatrixXd sample(const FittedMap& map, int count, std::uint64_t seed);

/// count x |block| samples of the block-last segment (columns follow
/// target_locations()) given the observed values in `observed`.
Eigen::MatrixXd conditional_sample(const FittedMap& map, const Eigen::Ref<const Eigen::VectorXd>& observed, int count,
                                   std::uint64_t seed);

/// Rosenblatt transform to the standard-normal reference (indexed by
/// location index).
Eigen::VectorXd forward_transform(const FittedMap& map, const Eigen::Ref<const Eigen::VectorXd>& field);

}  // namespace mvtm

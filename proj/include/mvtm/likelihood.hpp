#pragma once

#include "mvtm/geometry.hpp"
#include "mvtm/prior.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace mvtm {

/// Which pair of locations realises a component's nearest-neighbour
/// distance. Kept so that the distance can be re-evaluated when latent
/// positions move while the ordering stays fixed.
struct EllSource {
    double spatial_dist2 = 1.0;
    int process_a = 1;
    int process_b = 1;
};

/// One ordered component across R replicates.
struct ComponentData {
    Eigen::VectorXd responses;
    Eigen::MatrixXd neighbors;  ///< R x |c(n)|, nearest neighbour first
    double ell = 1.0;
    EllSource source;
    int position = 0;
};

struct PosteriorStats {
    double alpha_tilde = 0.0;
    double beta_tilde = 0.0;
    Eigen::MatrixXd gram_factor;  ///< lower Cholesky factor of G
    Eigen::VectorXd weights;      ///< G^{-1} y
    double log_det = 0.0;
};

/// Per-call settings shared by every component of a problem.
struct ModelContext {
    int num_processes = 1;
    double g = kDefaultG;
};

double component_loglik(const ComponentData& data, const ComponentPrior& prior);
PosteriorStats posterior_stats(const ComponentData& data, const ComponentPrior& prior);

/// Nearest-neighbour distance under the latent triangle in `theta`.
double component_ell(const EllSource& source, const HyperParams& theta);

/// Prior for a component under `theta`, with the distance re-evaluated.
ComponentPrior prior_for(const ComponentData& data, const HyperParams& theta, const ModelContext& ctx);

struct ObjectiveValue {
    double value = 0.0;
    Eigen::VectorXd gradient;
};

double batch_loglik(std::span<const ComponentData> batch, const HyperParams& theta, const ModelContext& ctx);
double batch_loglik(std::span<const ComponentData> all, std::span<const int> members, const HyperParams& theta,
                    const ModelContext& ctx);

ObjectiveValue batch_value_and_gradient(std::span<const ComponentData> batch, const HyperParams& theta,
                                        const ModelContext& ctx);
ObjectiveValue batch_value_and_gradient(std::span<const ComponentData> all, std::span<const int> members,
                                        const HyperParams& theta, const ModelContext& ctx);

Eigen::VectorXd gradient(std::span<const ComponentData> batch, const HyperParams& theta, const ModelContext& ctx);

/// Splits an R x N data matrix (columns = location index) into one
/// ComponentData per ordered position.
std::vector<ComponentData> extract_components(const Eigen::MatrixXd& data,
                                              std::span<const AugmentedLocation> points,
                                              const OrderingPlan& plan);

}  // namespace mvtm

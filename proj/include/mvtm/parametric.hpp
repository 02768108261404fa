#pragma once

#include "mvtm/geometry.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mvtm {

enum class CorrelationFamily { Matern32, Exponential };

/// Isotropic correlation C1(h) with the given range.
double correlation(CorrelationFamily family, double h, double range);
/// Distance at which C1 equals `value` (value in (0, 1]).
double inverse_correlation(CorrelationFamily family, double value, double range);

/// Separable model tau2 * C1(|s - s'|) * C2(p, p') + sigma2 * [same site].
struct ParametricParams {
    double tau2 = 1.0;
    double sigma2 = 0.1;
    double range = 0.1;
    Eigen::VectorXd corr_unconstrained;  ///< P(P-1)/2, row-major lower triangle

    int num_processes() const;
    /// [log tau2, log sigma2, log range, corr_unconstrained...]
    Eigen::VectorXd to_unconstrained() const;
    static ParametricParams from_unconstrained(const Eigen::VectorXd& x);
};

/// Canonical partial correlations via tanh, then the row-wise Cholesky
/// construction of a correlation matrix.
Eigen::MatrixXd corr_decode(const Eigen::VectorXd& unconstrained, int num_processes);
/// Inverse of corr_decode for a positive-definite correlation matrix.
Eigen::VectorXd corr_encode(const Eigen::MatrixXd& corr);

Eigen::MatrixXd parametric_covariance(const ParametricParams& params, std::span<const SpatialSite> sites);

/// Sum over the rows of `data` (R x n) of the zero-mean Gaussian log density.
double parametric_loglik(const ParametricParams& params, const Eigen::MatrixXd& data,
                         std::span<const SpatialSite> sites);

struct ParametricObjective {
    double value = 0.0;
    Eigen::VectorXd gradient;  ///< with respect to to_unconstrained()
};
ParametricObjective parametric_loglik_gradient(const ParametricParams& params, const Eigen::MatrixXd& data,
                                               std::span<const SpatialSite> sites);

struct ParametricFitConfig {
    int subsample_size = 256;
    std::uint64_t seed = 1;
    int max_iterations = 200;
};

struct ParametricFit {
    ParametricParams params;
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    std::vector<int> subsample;  ///< location indices used for the fit
    std::vector<std::string> warnings;
};

/// Seeded subsample of up to `per_process` locations of every process,
/// without replacement, returned in ascending order.
std::vector<int> subsample_locations(std::span<const SpatialSite> sites, int per_process, std::uint64_t seed);

ParametricFit fit_parametric(const Eigen::MatrixXd& data, std::span<const SpatialSite> sites, int num_processes,
                             const ParametricFitConfig& config);

struct PositionRecovery {
    Eigen::MatrixXd distances;         ///< P x P
    Eigen::MatrixXd latent_positions;  ///< P x (P-1), first row zero
    Eigen::MatrixXd basis;             ///< orthonormal (P-1) x (P-1)
    Eigen::MatrixXd triangle;          ///< upper triangular, positive diagonal
    std::vector<std::string> warnings;
};

inline constexpr double kMinLatentDiagonal = 1e-6;

/// Classical scaling of a P x P distance matrix followed by the QR split.
PositionRecovery positions_from_distances(const Eigen::MatrixXd& distances);

/// Distances from inverse correlations, then positions_from_distances.
/// Zero correlations map to `max_distance` with a warning.
PositionRecovery recover_positions(const Eigen::MatrixXd& corr, double range, CorrelationFamily family,
                                   double max_distance);

struct LatentEncoding {
    Eigen::MatrixXd basis;
    Eigen::VectorXd triangle;
};

/// Packs latent positions (P x k, any k) into a fixed basis plus the
/// log-diagonal triangle used in the hyperparameters.
LatentEncoding encode_latent(const Eigen::MatrixXd& latent_positions);

/// Exact Gaussian scoring under fitted parametric parameters.
class GaussianScorer {
public:
    GaussianScorer(const ParametricParams& params, std::span<const SpatialSite> sites, int target_process = 0);

    double log_density(const Eigen::Ref<const Eigen::VectorXd>& field) const;
    /// log p(target block | rest); requires target_process > 0.
    double conditional_log_density(const Eigen::Ref<const Eigen::VectorXd>& field) const;

private:
    Eigen::LLT<Eigen::MatrixXd> full_;
    Eigen::LLT<Eigen::MatrixXd> observed_;
    std::vector<int> observed_index_;
    int target_process_ = 0;
};

}  // namespace mvtm

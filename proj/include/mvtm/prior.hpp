#pragma once

#include <Eigen/Dense>

namespace mvtm {

/// Unconstrained hyperparameters of the transport-map priors.
///
/// The latent triangle packs the (P-1)x(P-1) upper-triangular R column by
/// column (column j holds rows 0..j); diagonal entries are stored as logs.
/// Column j of R is the position of process j+2 in the latent basis.
struct HyperParams {
    double theta_q = 0.0;
    double theta_gamma = 0.0;
    double theta_d1 = 0.0;
    double theta_d2 = 0.0;
    double theta_sigma1 = 0.0;
    double theta_sigma2 = 0.0;
    Eigen::VectorXd latent_triangle;

    static constexpr int kBaseCount = 6;
    enum Index : int { kQ = 0, kGamma, kD1, kD2, kSigma1, kSigma2 };

    int size() const { return kBaseCount + static_cast<int>(latent_triangle.size()); }
    int num_processes() const;
    Eigen::VectorXd to_vector() const;
    static HyperParams from_vector(const Eigen::VectorXd& values);
};

int triangle_size(int num_processes);

/// Conjugate prior of one map component.
struct ComponentPrior {
    double alpha = 0.0;
    double beta = 0.0;
    double sigma2 = 0.0;
    double expected_d2 = 1.0;
    Eigen::VectorXd q_diag;
    double gamma = 1.0;
};

struct PriorMoments {
    double alpha;
    double beta;
    double sigma2;
    double expected_d2;
};

inline constexpr int kMaxConditioning = 30;
inline constexpr double kDefaultG = 4.0;

/// Largest j with exp(-j exp(theta_q)) >= epsilon, clamped to [1, m_max].
int conditioning_size(double theta_q, double epsilon, int m_max = kMaxConditioning);

PriorMoments prior_params(const HyperParams& theta, double ell, double g = kDefaultG);

/// Relevance weights exp(-j exp(theta_q)), j = 1..count.
Eigen::VectorXd relevance_weights(double theta_q, int count);

ComponentPrior component_prior(const HyperParams& theta, double ell, int conditioning_count, double g = kDefaultG);

/// Matern correlation with smoothness 3/2.
double matern32(double t);

double kernel(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v,
              const ComponentPrior& prior);

/// R x R matrix of kernel values between the rows of `neighbors`, optionally
/// plus the identity. An empty conditioning set yields the identity (f = 0).
Eigen::MatrixXd gram(const Eigen::MatrixXd& neighbors, const ComponentPrior& prior, bool add_identity = true);

/// Rebuilds R from the packed triangle.
Eigen::MatrixXd latent_triangle_matrix(const Eigen::VectorXd& latent_triangle, int num_processes);

/// P x (P-1) latent positions: row 0 is the origin, row p is basis * R.col(p-1).
Eigen::MatrixXd decode_latent(const Eigen::VectorXd& latent_triangle, const Eigen::MatrixXd& basis);

}  // namespace mvtm

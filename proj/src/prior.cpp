#include "mvtm/prior.hpp"

#include "mvtm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mvtm {

int triangle_size(int num_processes) { return num_processes * (num_processes - 1) / 2; }

int HyperParams::num_processes() const {
    const auto t = latent_triangle.size();
    int p = 1;
    while (triangle_size(p) < t) ++p;
    if (triangle_size(p) != t) throw InputError("latent triangle length " + std::to_string(t) + " is not P(P-1)/2");
    return p;
}

Eigen::VectorXd HyperParams::to_vector() const {
    Eigen::VectorXd v(size());
    v.head<kBaseCount>() << theta_q, theta_gamma, theta_d1, theta_d2, theta_sigma1, theta_sigma2;
    v.tail(latent_triangle.size()) = latent_triangle;
    return v;
}

HyperParams HyperParams::from_vector(const Eigen::VectorXd& values) {
    if (values.size() < kBaseCount) throw InputError("hyperparameter vector too short");
    HyperParams h;
    h.theta_q = values[kQ];
    h.theta_gamma = values[kGamma];
    h.theta_d1 = values[kD1];
    h.theta_d2 = values[kD2];
    h.theta_sigma1 = values[kSigma1];
    h.theta_sigma2 = values[kSigma2];
    h.latent_triangle = values.tail(values.size() - kBaseCount);
    h.num_processes();
    return h;
}

int conditioning_size(double theta_q, double epsilon, int m_max) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw InputError("epsilon must lie in (0, 1)");
    // exp(-j r) >= eps  <=>  j <= -log(eps) / r
    const double rate = std::exp(theta_q);
    const double bound = -std::log(epsilon) / rate;
    if (!(bound < static_cast<double>(m_max))) return m_max;
    int m = static_cast<int>(std::floor(bound));
    // guard the floor against rounding at exact integers
    while (m + 1 <= m_max && std::exp(-(m + 1) * rate) >= epsilon) ++m;
    while (m >= 1 && std::exp(-m * rate) < epsilon) --m;
    return std::clamp(m, 1, m_max);
}

PriorMoments prior_params(const HyperParams& theta, double ell, double g) {
    if (!(ell > 0.0) || !std::isfinite(ell))
        throw InputError("nearest-neighbour distance must be positive (duplicate locations?)");
    if (!(g > 0.0)) throw InputError("g must be positive");
    const double log_ell = std::log(ell);
    PriorMoments out{};
    out.expected_d2 = std::exp(theta.theta_d1 + std::exp(theta.theta_d2) * log_ell);
    out.alpha = 2.0 + 1.0 / (g * g);
    out.beta = (out.alpha - 1.0) * out.expected_d2;
    out.sigma2 = std::exp(theta.theta_sigma1 + std::exp(theta.theta_sigma2) * log_ell);
    return out;
}

Eigen::VectorXd relevance_weights(double theta_q, int count) {
    const double rate = std::exp(theta_q);
    Eigen::VectorXd q(count);
    for (int j = 0; j < count; ++j) q[j] = std::exp(-(j + 1) * rate);
    return q;
}

ComponentPrior component_prior(const HyperParams& theta, double ell, int conditioning_count, double g) {
    const auto m = prior_params(theta, ell, g);
    ComponentPrior p;
    p.alpha = m.alpha;
    p.beta = m.beta;
    p.sigma2 = m.sigma2;
    p.expected_d2 = m.expected_d2;
    p.q_diag = relevance_weights(theta.theta_q, conditioning_count);
    p.gamma = std::exp(theta.theta_gamma);
    return p;
}

double matern32(double t) {
    const double a = std::sqrt(3.0) * t;
    return (1.0 + a) * std::exp(-a);
}

double kernel(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v,
              const ComponentPrior& prior) {
    if (u.size() != prior.q_diag.size() || v.size() != prior.q_diag.size())
        throw InputError("kernel input length does not match the conditioning set size");
    const double linear = (u.array() * prior.q_diag.array() * v.array()).sum();
    const double dist = std::sqrt(((u - v).array().square() * prior.q_diag.array()).sum());
    return (linear + prior.sigma2 * matern32(dist / prior.gamma)) / prior.expected_d2;
}

Eigen::MatrixXd gram(const Eigen::MatrixXd& neighbors, const ComponentPrior& prior, bool add_identity) {
    const Eigen::Index rows = neighbors.rows();
    if (!neighbors.allFinite()) throw NumericalError("non-finite neighbour values in Gram assembly");
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(rows, rows);
    if (neighbors.cols() > 0) {
        if (neighbors.cols() != prior.q_diag.size())
            throw InputError("neighbour matrix width does not match the conditioning set size");
        const Eigen::MatrixXd scaled = neighbors * prior.q_diag.cwiseSqrt().asDiagonal();
        g.noalias() = scaled * scaled.transpose();
        const Eigen::VectorXd sq = scaled.rowwise().squaredNorm();
        const double inv_gamma = 1.0 / prior.gamma;
        for (Eigen::Index j = 0; j < rows; ++j) {
            for (Eigen::Index i = j; i < rows; ++i) {
                const double d2 = std::max(0.0, sq[i] + sq[j] - 2.0 * g(i, j));
                const double val = g(i, j) + prior.sigma2 * matern32(std::sqrt(d2) * inv_gamma);
                g(i, j) = val;
                g(j, i) = val;
            }
        }
        g /= prior.expected_d2;
    }
    if (add_identity) g.diagonal().array() += 1.0;
    return g;
}

Eigen::MatrixXd latent_triangle_matrix(const Eigen::VectorXd& latent_triangle, int num_processes) {
    const int dim = num_processes - 1;
    if (latent_triangle.size() != triangle_size(num_processes))
        throw InputError("latent triangle has wrong length for P = " + std::to_string(num_processes));
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(dim, dim);
    int k = 0;
    for (int j = 0; j < dim; ++j)
        for (int i = 0; i <= j; ++i, ++k) r(i, j) = (i == j) ? std::exp(latent_triangle[k]) : latent_triangle[k];
    return r;
}

Eigen::MatrixXd decode_latent(const Eigen::VectorXd& latent_triangle, const Eigen::MatrixXd& basis) {
    const int dim = static_cast<int>(basis.rows());
    if (basis.cols() != dim) throw InputError("latent basis must be square");
    if (triangle_size(dim + 1) != latent_triangle.size())
        throw InputError("latent basis is missing or does not match the latent triangle");
    const Eigen::MatrixXd r = latent_triangle_matrix(latent_triangle, dim + 1);
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(dim + 1, dim);
    if (dim > 0) s.bottomRows(dim) = (basis * r).transpose();
    return s;
}

}  // namespace mvtm

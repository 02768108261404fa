#include "mvtm/likelihood.hpp"

#include "mvtm/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace mvtm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::string where(const ComponentData& d) { return " (ordered position " + std::to_string(d.position) + ")"; }

Eigen::VectorXd process_offset(const Eigen::MatrixXd& r, int process_id) {
    if (process_id <= 1) return Eigen::VectorXd::Zero(r.rows());
    return r.col(process_id - 2);
}

// Scratch space for a component's Gram matrix pieces.
struct GramParts {
    Eigen::MatrixXd linear;   // U Q U^T
    Eigen::MatrixXd scaled_distance;  // t_ij = sqrt((u_i-u_j)^T Q (u_i-u_j)) / gamma
    Eigen::MatrixXd matern;
    Eigen::MatrixXd k_bar;
};

void assemble(const Eigen::MatrixXd& u, const ComponentPrior& prior, GramParts& parts) {
    const Eigen::Index rows = u.rows();
    const Eigen::MatrixXd scaled = u * prior.q_diag.cwiseSqrt().asDiagonal();
    parts.linear.noalias() = scaled * scaled.transpose();
    const Eigen::VectorXd sq = scaled.rowwise().squaredNorm();
    parts.scaled_distance.resize(rows, rows);
    parts.matern.resize(rows, rows);
    const double inv_gamma = 1.0 / prior.gamma;
    for (Eigen::Index j = 0; j < rows; ++j) {
        for (Eigen::Index i = j; i < rows; ++i) {
            const double d2 = i == j ? 0.0 : std::max(0.0, sq[i] + sq[j] - 2.0 * parts.linear(i, j));
            const double t = std::sqrt(d2) * inv_gamma;
            parts.scaled_distance(i, j) = parts.scaled_distance(j, i) = t;
            parts.matern(i, j) = parts.matern(j, i) = matern32(t);
        }
    }
    parts.k_bar = (parts.linear + prior.sigma2 * parts.matern) / prior.expected_d2;
}

double closed_form(double alpha, double beta, double log_det, double quad, Eigen::Index rows, double& beta_tilde,
                   double& alpha_tilde) {
    alpha_tilde = alpha + 0.5 * static_cast<double>(rows);
    beta_tilde = beta + 0.5 * quad;
    return -0.5 * static_cast<double>(rows) * kLog2Pi - 0.5 * log_det + alpha * std::log(beta) -
           alpha_tilde * std::log(beta_tilde) + std::lgamma(alpha_tilde) - std::lgamma(alpha);
}

void check_shapes(const ComponentData& data, const ComponentPrior& prior) {
    if (data.neighbors.cols() > 0 && data.neighbors.rows() != data.responses.size())
        throw InputError("neighbour matrix rows do not match responses" + where(data));
    if (data.neighbors.cols() != prior.q_diag.size())
        throw InputError("prior relevance weights do not match the conditioning set" + where(data));
    if (!data.responses.allFinite() || !data.neighbors.allFinite())
        throw NumericalError("non-finite data" + where(data));
}

// Accumulates value and gradient for one component into `grad`.
double accumulate(const ComponentData& data, const HyperParams& theta, const Eigen::MatrixXd& r, double g,
                  Eigen::VectorXd& grad) {
    const Eigen::VectorXd diff = process_offset(r, data.source.process_a) - process_offset(r, data.source.process_b);
    const double ell2 = data.source.spatial_dist2 + diff.squaredNorm();
    const double ell = std::sqrt(ell2);
    if (!(ell > 0.0)) throw InputError("zero nearest-neighbour distance (duplicate locations)" + where(data));
    const Eigen::Index m = data.neighbors.cols();
    const ComponentPrior prior = component_prior(theta, ell, static_cast<int>(m), g);
    check_shapes(data, prior);

    const Eigen::Index rows = data.responses.size();
    const auto& y = data.responses;
    GramParts parts;
    Eigen::MatrixXd gm = Eigen::MatrixXd::Identity(rows, rows);
    if (m > 0) {
        assemble(data.neighbors, prior, parts);
        gm += parts.k_bar;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(gm);
    if (llt.info() != Eigen::Success) throw NumericalError("Cholesky of Gram matrix failed" + where(data));
    const Eigen::VectorXd w = llt.solve(y);
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    double alpha_tilde = 0.0, beta_tilde = 0.0;
    const double value = closed_form(prior.alpha, prior.beta, log_det, y.dot(w), rows, beta_tilde, alpha_tilde);

    const double ratio = alpha_tilde / beta_tilde;
    double d_log_e = prior.alpha - ratio * prior.beta;
    double d_log_sigma2 = 0.0;
    double d_gamma = 0.0;
    double d_q = 0.0;
    if (m > 0) {
        Eigen::MatrixXd a = -llt.solve(Eigen::MatrixXd::Identity(rows, rows));
        a.noalias() += ratio * (w * w.transpose());
        a *= 0.5;

        const double inv_e = 1.0 / prior.expected_d2;
        const double rate = std::exp(theta.theta_q);
        const double gamma2 = prior.gamma * prior.gamma;
        d_log_e -= (a.array() * parts.k_bar.array()).sum();
        d_log_sigma2 = prior.sigma2 * inv_e * (a.array() * parts.matern.array()).sum();

        Eigen::VectorXd wq(m);
        for (Eigen::Index k = 0; k < m; ++k) wq[k] = std::sqrt(static_cast<double>(k + 1) * prior.q_diag[k]);
        const Eigen::MatrixXd uw = data.neighbors * wq.asDiagonal();
        const Eigen::MatrixXd lin_w = uw * uw.transpose();
        const Eigen::VectorXd sqw = uw.rowwise().squaredNorm();

        double acc_gamma = 0.0, acc_q_lin = 0.0, acc_q_rbf = 0.0;
        for (Eigen::Index j = 0; j < rows; ++j) {
            for (Eigen::Index i = 0; i < rows; ++i) {
                const double t = parts.scaled_distance(i, j);
                const double e = std::exp(-std::sqrt(3.0) * t);
                const double aij = a(i, j);
                acc_gamma += aij * 3.0 * t * t * e;
                const double d2w = i == j ? 0.0 : std::max(0.0, sqw[i] + sqw[j] - 2.0 * lin_w(i, j));
                acc_q_lin += aij * lin_w(i, j);
                acc_q_rbf += aij * e * d2w;
            }
        }
        d_gamma = prior.sigma2 * inv_e * acc_gamma;
        d_q = inv_e * (-rate * acc_q_lin + prior.sigma2 * 1.5 * rate / gamma2 * acc_q_rbf);
    }

    const double log_ell = std::log(ell);
    const double slope_d = std::exp(theta.theta_d2);
    const double slope_s = std::exp(theta.theta_sigma2);
    grad[HyperParams::kQ] += d_q;
    grad[HyperParams::kGamma] += d_gamma;
    grad[HyperParams::kD1] += d_log_e;
    grad[HyperParams::kD2] += d_log_e * slope_d * log_ell;
    grad[HyperParams::kSigma1] += d_log_sigma2;
    grad[HyperParams::kSigma2] += d_log_sigma2 * slope_s * log_ell;

    if (data.source.process_a != data.source.process_b && r.size() > 0) {
        const double d_log_ell = d_log_e * slope_d + d_log_sigma2 * slope_s;
        const double factor = d_log_ell / ell2;
        const int dim = static_cast<int>(r.rows());
        auto push = [&](int process, double sign) {
            if (process <= 1) return;
            const int col = process - 2;
            // packed offset of column `col` is col(col+1)/2
            const int base = HyperParams::kBaseCount + col * (col + 1) / 2;
            for (int i = 0; i <= col && i < dim; ++i) {
                double d = sign * factor * diff[i];
                if (i == col) d *= r(i, col);
                grad[base + i] += d;
            }
        };
        push(data.source.process_a, 1.0);
        push(data.source.process_b, -1.0);
    }
    return value;
}

}  // namespace

double component_loglik(const ComponentData& data, const ComponentPrior& prior) {
    const auto stats = posterior_stats(data, prior);
    double at = 0.0, bt = 0.0;
    return closed_form(prior.alpha, prior.beta, stats.log_det, data.responses.dot(stats.weights),
                       data.responses.size(), bt, at);
}

PosteriorStats posterior_stats(const ComponentData& data, const ComponentPrior& prior) {
    check_shapes(data, prior);
    const Eigen::Index rows = data.responses.size();
    Eigen::MatrixXd gm = data.neighbors.cols() > 0 ? gram(data.neighbors, prior, true)
                                                   : Eigen::MatrixXd::Identity(rows, rows).eval();
    Eigen::LLT<Eigen::MatrixXd> llt(gm);
    if (llt.info() != Eigen::Success) throw NumericalError("Cholesky of Gram matrix failed" + where(data));
    PosteriorStats s;
    s.gram_factor = llt.matrixL();
    s.weights = llt.solve(data.responses);
    s.log_det = 2.0 * s.gram_factor.diagonal().array().log().sum();
    s.alpha_tilde = prior.alpha + 0.5 * static_cast<double>(rows);
    s.beta_tilde = prior.beta + 0.5 * data.responses.dot(s.weights);
    return s;
}

double component_ell(const EllSource& source, const HyperParams& theta) {
    const int p = theta.num_processes();
    const Eigen::MatrixXd r = latent_triangle_matrix(theta.latent_triangle, p);
    const Eigen::VectorXd diff = process_offset(r, source.process_a) - process_offset(r, source.process_b);
    return std::sqrt(source.spatial_dist2 + diff.squaredNorm());
}

ComponentPrior prior_for(const ComponentData& data, const HyperParams& theta, const ModelContext& ctx) {
    const double ell = component_ell(data.source, theta);
    if (!(ell > 0.0)) throw InputError("zero nearest-neighbour distance (duplicate locations)" + where(data));
    return component_prior(theta, ell, static_cast<int>(data.neighbors.cols()), ctx.g);
}

double batch_loglik(std::span<const ComponentData> batch, const HyperParams& theta, const ModelContext& ctx) {
    double total = 0.0;
    for (const auto& d : batch) total += component_loglik(d, prior_for(d, theta, ctx));
    if (!std::isfinite(total)) throw NumericalError("non-finite integrated likelihood");
    return total;
}

double batch_loglik(std::span<const ComponentData> all, std::span<const int> members, const HyperParams& theta,
                    const ModelContext& ctx) {
    double total = 0.0;
    for (int k : members) total += component_loglik(all[k], prior_for(all[k], theta, ctx));
    if (!std::isfinite(total)) throw NumericalError("non-finite integrated likelihood");
    return total;
}

ObjectiveValue batch_value_and_gradient(std::span<const ComponentData> all, std::span<const int> members,
                                        const HyperParams& theta, const ModelContext& ctx) {
    if (theta.num_processes() != ctx.num_processes)
        throw InputError("hyperparameters do not match the number of processes");
    const Eigen::MatrixXd r = latent_triangle_matrix(theta.latent_triangle, ctx.num_processes);
    ObjectiveValue out;
    out.gradient = Eigen::VectorXd::Zero(theta.size());
    for (int k : members) out.value += accumulate(all[k], theta, r, ctx.g, out.gradient);
    if (!std::isfinite(out.value) || !out.gradient.allFinite())
        throw NumericalError("non-finite integrated likelihood or gradient");
    return out;
}

ObjectiveValue batch_value_and_gradient(std::span<const ComponentData> batch, const HyperParams& theta,
                                        const ModelContext& ctx) {
    std::vector<int> members(batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) members[k] = static_cast<int>(k);
    return batch_value_and_gradient(batch, members, theta, ctx);
}

Eigen::VectorXd gradient(std::span<const ComponentData> batch, const HyperParams& theta, const ModelContext& ctx) {
    return batch_value_and_gradient(batch, theta, ctx).gradient;
}

std::vector<ComponentData> extract_components(const Eigen::MatrixXd& data, std::span<const AugmentedLocation> points,
                                              const OrderingPlan& plan) {
    const int total = plan.size();
    if (data.cols() != total || static_cast<int>(points.size()) != total)
        throw InputError("data has " + std::to_string(data.cols()) + " columns but the ordering has " +
                         std::to_string(total) + " components");
    std::vector<ComponentData> out(static_cast<std::size_t>(total));
    int widest = -1;
    for (int n = 0; n < total; ++n) {
        auto& c = out[n];
        const int loc = plan.permutation[n];
        c.position = n;
        c.responses = data.col(loc);
        const auto& cond = plan.conditioning[n];
        c.neighbors.resize(data.rows(), static_cast<Eigen::Index>(cond.size()));
        for (std::size_t i = 0; i < cond.size(); ++i)
            c.neighbors.col(static_cast<Eigen::Index>(i)) = data.col(plan.permutation[cond[i]]);
        if (n > 0) {
            const auto& a = points[loc];
            const auto& b = points[plan.permutation[cond[0]]];
            c.ell = plan.nearest_prev_distance[n];
            c.source = {(a.spatial - b.spatial).squaredNorm(), a.process_id, b.process_id};
            if (widest < 0 || c.ell > out[widest].ell) widest = n;
        }
    }
    if (widest > 0) {
        out[0].ell = out[widest].ell;
        out[0].source = out[widest].source;
    } else {
        out[0].ell = 1.0;
        out[0].source = {1.0, 1, 1};
    }
    return out;
}

}  // namespace mvtm

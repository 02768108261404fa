#include "mvtm/parametric.hpp"

#include "mvtm/errors.hpp"
#include "mvtm/prior.hpp"

#include <boost/random/uniform_int_distribution.hpp>
#include <ceres/ceres.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace mvtm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr int kBaseParams = 3;

// Forward-mode dual number, enough for the correlation construction.
struct Dual {
    double v = 0.0;
    double d = 0.0;
};
Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
Dual operator-(double a, Dual b) { return {a - b.v, -b.d}; }
Dual sqrt(Dual a) {
    const double s = std::sqrt(a.v);
    return {s, s > 0.0 ? 0.5 * a.d / s : 0.0};
}
Dual tanh(Dual a) {
    const double t = std::tanh(a.v);
    return {t, (1.0 - t * t) * a.d};
}
double value_of(double x) { return x; }

template <class T>
std::vector<T> corr_cholesky(const std::vector<T>& y, int p) {
    using std::sqrt;
    using std::tanh;
    std::vector<T> l(static_cast<std::size_t>(p * p), T{});
    auto at = [&](int i, int j) -> T& { return l[static_cast<std::size_t>(i * p + j)]; };
    at(0, 0) = T{1.0};
    std::size_t k = 0;
    for (int i = 1; i < p; ++i) {
        at(i, 0) = tanh(y[k++]);
        T sum_sq = at(i, 0) * at(i, 0);
        for (int j = 1; j < i; ++j) {
            at(i, j) = tanh(y[k++]) * sqrt(1.0 - sum_sq);
            sum_sq = sum_sq + at(i, j) * at(i, j);
        }
        at(i, i) = sqrt(1.0 - sum_sq);
    }
    return l;
}

template <class T>
std::vector<T> corr_product(const std::vector<T>& l, int p) {
    std::vector<T> c(static_cast<std::size_t>(p * p), T{});
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            T s{};
            for (int k = 0; k <= std::min(i, j); ++k) s = s + l[i * p + k] * l[j * p + k];
            c[i * p + j] = s;
        }
    return c;
}

// dC2/du_k for every unconstrained entry.
std::vector<Eigen::MatrixXd> corr_jacobian(const Eigen::VectorXd& u, int p) {
    std::vector<Eigen::MatrixXd> out;
    for (Eigen::Index k = 0; k < u.size(); ++k) {
        std::vector<Dual> y(static_cast<std::size_t>(u.size()));
        for (Eigen::Index i = 0; i < u.size(); ++i) y[i] = {u[i], i == k ? 1.0 : 0.0};
        const auto c = corr_product(corr_cholesky(y, p), p);
        Eigen::MatrixXd d(p, p);
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) d(i, j) = c[i * p + j].d;
        out.push_back(std::move(d));
    }
    return out;
}

Eigen::MatrixXd site_distances(std::span<const SpatialSite> sites) {
    const auto n = static_cast<Eigen::Index>(sites.size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = j + 1; i < n; ++i) h(i, j) = h(j, i) = (sites[i].coords - sites[j].coords).norm();
    return h;
}

struct CovarianceParts {
    Eigen::MatrixXd signal_corr;  // C1 .* C2[p, p']
    Eigen::MatrixXd spatial;      // C1
    Eigen::MatrixXd range_deriv;  // d C1 / d log range
    Eigen::MatrixXd cross;        // C2
};

CovarianceParts covariance_parts(const ParametricParams& params, std::span<const SpatialSite> sites,
                                 const Eigen::MatrixXd& h) {
    const int p = params.num_processes();
    CovarianceParts parts;
    parts.cross = corr_decode(params.corr_unconstrained, p);
    const auto n = static_cast<Eigen::Index>(sites.size());
    parts.spatial.resize(n, n);
    parts.range_deriv.resize(n, n);
    parts.signal_corr.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j; i < n; ++i) {
            const double t = std::sqrt(3.0) * h(i, j) / params.range;
            const double e = std::exp(-t);
            const double c1 = (1.0 + t) * e;
            const double dc1 = t * t * e;  // d/d log range of (1 + t) e^{-t} with t ∝ 1 / range
            const double c2 = parts.cross(sites[i].process_id - 1, sites[j].process_id - 1);
            parts.spatial(i, j) = parts.spatial(j, i) = c1;
            parts.range_deriv(i, j) = parts.range_deriv(j, i) = dc1 * c2;
            parts.signal_corr(i, j) = parts.signal_corr(j, i) = c1 * c2;
        }
    }
    return parts;
}

void check_sites(std::span<const SpatialSite> sites, int p) {
    for (const auto& s : sites)
        if (s.process_id < 1 || s.process_id > p) throw InputError("site has unknown process id");
}

class NegativeLoglik final : public ceres::FirstOrderFunction {
public:
    NegativeLoglik(const Eigen::MatrixXd& data, std::vector<SpatialSite> sites, int p)
        : data_(data), sites_(std::move(sites)), p_(p), scale_(1.0 / static_cast<double>(data.size())) {}

    bool Evaluate(const double* x, double* cost, double* grad) const override {
        const Eigen::Map<const Eigen::VectorXd> xv(x, NumParameters());
        if (!xv.allFinite() || xv.head<kBaseParams>().maxCoeff() > 30.0 || xv.head<kBaseParams>().minCoeff() < -30.0)
            return false;
        try {
            const auto params = ParametricParams::from_unconstrained(xv);
            const auto obj = parametric_loglik_gradient(params, data_, sites_);
            *cost = -obj.value * scale_;
            if (grad != nullptr)
                for (int k = 0; k < NumParameters(); ++k) grad[k] = -obj.gradient[k] * scale_;
            return std::isfinite(*cost);
        } catch (const NumericalError&) {
            return false;
        }
    }
    int NumParameters() const override { return kBaseParams + triangle_size(p_); }

private:
    Eigen::MatrixXd data_;
    std::vector<SpatialSite> sites_;
    int p_;
    double scale_;
};

}  // namespace

double correlation(CorrelationFamily family, double h, double range) {
    if (family == CorrelationFamily::Exponential) return std::exp(-h / range);
    return matern32(h / range);
}

double inverse_correlation(CorrelationFamily family, double value, double range) {
    if (!(value > 0.0 && value <= 1.0)) throw InputError("correlation to invert must lie in (0, 1]");
    if (value == 1.0) return 0.0;
    if (family == CorrelationFamily::Exponential) return -range * std::log(value);
    double lo = 0.0, hi = 1.0;
    while (matern32(hi) > value) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        (matern32(mid) > value ? lo : hi) = mid;
    }
    return range * 0.5 * (lo + hi);
}

int ParametricParams::num_processes() const {
    int p = 1;
    while (triangle_size(p) < corr_unconstrained.size()) ++p;
    if (triangle_size(p) != corr_unconstrained.size()) throw InputError("correlation parameter length is not P(P-1)/2");
    return p;
}

Eigen::VectorXd ParametricParams::to_unconstrained() const {
    Eigen::VectorXd x(kBaseParams + corr_unconstrained.size());
    x.head<kBaseParams>() << std::log(tau2), std::log(sigma2), std::log(range);
    x.tail(corr_unconstrained.size()) = corr_unconstrained;
    return x;
}

ParametricParams ParametricParams::from_unconstrained(const Eigen::VectorXd& x) {
    if (x.size() < kBaseParams) throw InputError("parametric parameter vector too short");
    ParametricParams p;
    p.tau2 = std::exp(x[0]);
    p.sigma2 = std::exp(x[1]);
    p.range = std::exp(x[2]);
    p.corr_unconstrained = x.tail(x.size() - kBaseParams);
    return p;
}

Eigen::MatrixXd corr_decode(const Eigen::VectorXd& unconstrained, int num_processes) {
    if (unconstrained.size() != triangle_size(num_processes))
        throw InputError("correlation parameter length does not match P");
    std::vector<double> y(unconstrained.data(), unconstrained.data() + unconstrained.size());
    const auto c = corr_product(corr_cholesky(y, num_processes), num_processes);
    Eigen::MatrixXd out(num_processes, num_processes);
    for (int i = 0; i < num_processes; ++i)
        for (int j = 0; j < num_processes; ++j) out(i, j) = value_of(c[i * num_processes + j]);
    out.diagonal().setOnes();
    return out;
}

Eigen::VectorXd corr_encode(const Eigen::MatrixXd& corr) {
    const int p = static_cast<int>(corr.rows());
    Eigen::LLT<Eigen::MatrixXd> llt(corr);
    if (llt.info() != Eigen::Success) throw InputError("correlation matrix is not positive definite");
    const Eigen::MatrixXd l = llt.matrixL();
    Eigen::VectorXd y(triangle_size(p));
    int k = 0;
    for (int i = 1; i < p; ++i) {
        double sum_sq = 0.0;
        for (int j = 0; j < i; ++j) {
            const double z = l(i, j) / std::sqrt(1.0 - sum_sq);
            y[k++] = std::atanh(z);
            sum_sq += l(i, j) * l(i, j);
        }
    }
    return y;
}

Eigen::MatrixXd parametric_covariance(const ParametricParams& params, std::span<const SpatialSite> sites) {
    check_sites(sites, params.num_processes());
    const auto parts = covariance_parts(params, sites, site_distances(sites));
    Eigen::MatrixXd k = params.tau2 * parts.signal_corr;
    k.diagonal().array() += params.sigma2;
    return k;
}

double parametric_loglik(const ParametricParams& params, const Eigen::MatrixXd& data,
                         std::span<const SpatialSite> sites) {
    if (data.cols() != static_cast<Eigen::Index>(sites.size()))
        throw InputError("data columns do not match the number of sites");
    Eigen::LLT<Eigen::MatrixXd> llt(parametric_covariance(params, sites));
    if (llt.info() != Eigen::Success) throw NumericalError("parametric covariance is not positive definite");
    const Eigen::MatrixXd l = llt.matrixL();
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    const Eigen::MatrixXd white = l.triangularView<Eigen::Lower>().solve(data.transpose());
    const auto reps = static_cast<double>(data.rows());
    const auto n = static_cast<double>(data.cols());
    return -0.5 * reps * (n * kLog2Pi + log_det) - 0.5 * white.squaredNorm();
}

ParametricObjective parametric_loglik_gradient(const ParametricParams& params, const Eigen::MatrixXd& data,
                                               std::span<const SpatialSite> sites) {
    const int p = params.num_processes();
    check_sites(sites, p);
    if (data.cols() != static_cast<Eigen::Index>(sites.size()))
        throw InputError("data columns do not match the number of sites");
    const auto parts = covariance_parts(params, sites, site_distances(sites));
    Eigen::MatrixXd k = params.tau2 * parts.signal_corr;
    k.diagonal().array() += params.sigma2;
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) throw NumericalError("parametric covariance is not positive definite");
    const Eigen::MatrixXd l = llt.matrixL();
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    const auto reps = static_cast<double>(data.rows());
    const auto n = static_cast<Eigen::Index>(data.cols());

    const Eigen::MatrixXd alpha = llt.solve(data.transpose());  // n x R
    ParametricObjective out;
    out.value = -0.5 * reps * (static_cast<double>(n) * kLog2Pi + log_det) -
                0.5 * (data.transpose().array() * alpha.array()).sum();

    // dL = 1/2 tr(W dK), W = K^{-1} S K^{-1} - R K^{-1}
    Eigen::MatrixXd w = alpha * alpha.transpose();
    w.noalias() -= reps * llt.solve(Eigen::MatrixXd::Identity(n, n));

    out.gradient = Eigen::VectorXd::Zero(kBaseParams + params.corr_unconstrained.size());
    out.gradient[0] = 0.5 * params.tau2 * (w.array() * parts.signal_corr.array()).sum();
    out.gradient[1] = 0.5 * params.sigma2 * w.trace();
    out.gradient[2] = 0.5 * params.tau2 * (w.array() * parts.range_deriv.array()).sum();
    if (p > 1) {
        Eigen::MatrixXd block = Eigen::MatrixXd::Zero(p, p);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < n; ++i)
                block(sites[i].process_id - 1, sites[j].process_id - 1) += w(i, j) * parts.spatial(i, j);
        const auto jac = corr_jacobian(params.corr_unconstrained, p);
        for (std::size_t c = 0; c < jac.size(); ++c)
            out.gradient[kBaseParams + static_cast<Eigen::Index>(c)] =
                0.5 * params.tau2 * (block.array() * jac[c].array()).sum();
    }
    return out;
}

std::vector<int> subsample_locations(std::span<const SpatialSite> sites, int per_process, std::uint64_t seed) {
    if (per_process < 1) throw InputError("subsample size must be positive");
    int max_process = 0;
    for (const auto& s : sites) max_process = std::max(max_process, s.process_id);
    std::mt19937_64 rng(seed);
    std::vector<int> out;
    for (int p = 1; p <= max_process; ++p) {
        std::vector<int> idx;
        for (std::size_t k = 0; k < sites.size(); ++k)
            if (sites[k].process_id == p) idx.push_back(static_cast<int>(k));
        const int take = std::min<int>(per_process, static_cast<int>(idx.size()));
        // partial Fisher-Yates with a portable distribution
        for (int i = 0; i < take; ++i) {
            boost::random::uniform_int_distribution<int> pick(i, static_cast<int>(idx.size()) - 1);
            std::swap(idx[i], idx[pick(rng)]);
        }
        out.insert(out.end(), idx.begin(), idx.begin() + take);
    }
    std::sort(out.begin(), out.end());
    return out;
}

ParametricFit fit_parametric(const Eigen::MatrixXd& data, std::span<const SpatialSite> sites, int num_processes,
                             const ParametricFitConfig& config) {
    check_sites(sites, num_processes);
    if (data.cols() != static_cast<Eigen::Index>(sites.size()))
        throw InputError("data columns do not match the number of sites");
    if (data.rows() < 1) throw InputError("parametric fit needs at least one replicate");
    ParametricFit fit;
    fit.subsample = subsample_locations(sites, config.subsample_size, config.seed);

    std::vector<SpatialSite> sub_sites;
    Eigen::MatrixXd sub_data(data.rows(), static_cast<Eigen::Index>(fit.subsample.size()));
    for (std::size_t k = 0; k < fit.subsample.size(); ++k) {
        sub_sites.push_back(sites[fit.subsample[k]]);
        sub_data.col(static_cast<Eigen::Index>(k)) = data.col(fit.subsample[k]);
    }

    // moment-based start: split the marginal variance 9:1, range a tenth of the extent
    const double var = std::max(1e-8, sub_data.array().square().mean());
    double extent = 0.0;
    for (const auto& s : sub_sites) extent = std::max(extent, (s.coords - sub_sites.front().coords).norm());
    ParametricParams start;
    start.tau2 = 0.9 * var;
    start.sigma2 = 0.1 * var;
    start.range = extent > 0.0 ? 0.1 * extent : 1.0;
    start.corr_unconstrained = Eigen::VectorXd::Zero(triangle_size(num_processes));

    Eigen::VectorXd x = start.to_unconstrained();
    ceres::GradientProblem problem(new NegativeLoglik(sub_data, sub_sites, num_processes));
    ceres::GradientProblemSolver::Options options;
    options.line_search_direction_type = ceres::LBFGS;
    options.max_num_iterations = config.max_iterations;
    options.logging_type = ceres::SILENT;
    options.minimizer_progress_to_stdout = false;
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(options, problem, x.data(), &summary);

    fit.params = ParametricParams::from_unconstrained(x);
    fit.loglik = parametric_loglik(fit.params, sub_data, sub_sites);
    fit.iterations = static_cast<int>(summary.iterations.size());
    fit.converged = summary.termination_type == ceres::CONVERGENCE;
    if (!fit.converged)
        fit.warnings.push_back("parametric fit did not converge (" + summary.message + "); using best parameters found");
    return fit;
}

PositionRecovery positions_from_distances(const Eigen::MatrixXd& distances) {
    const auto p = distances.rows();
    if (distances.cols() != p || p < 1) throw InputError("distance matrix must be square");
    PositionRecovery out;
    out.distances = distances;
    const Eigen::Index dim = p - 1;
    out.latent_positions = Eigen::MatrixXd::Zero(p, dim);
    out.basis = Eigen::MatrixXd::Identity(dim, dim);
    out.triangle = Eigen::MatrixXd::Zero(dim, dim);
    if (dim == 0) return out;

    // Gram matrix relative to the first process
    Eigen::MatrixXd e(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j)
            e(i, j) = 0.5 * (distances(0, j) * distances(0, j) + distances(i, 0) * distances(i, 0) -
                             distances(i, j) * distances(i, j));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(e);
    // eigenvalues ascending: keep the top P-1
    const Eigen::VectorXd lambda = eig.eigenvalues().tail(dim).cwiseMax(0.0);
    const Eigen::MatrixXd coords = eig.eigenvectors().rightCols(dim) * lambda.cwiseSqrt().asDiagonal();

    // positions are rows; factor their transpose so that position p = Q r_p
    const Eigen::MatrixXd b = coords.bottomRows(dim).transpose();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(b);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < dim; ++i) {
        if (r(i, i) < 0.0) {
            q.col(i) *= -1.0;
            r.row(i) *= -1.0;
        }
        if (r(i, i) < kMinLatentDiagonal) r(i, i) = kMinLatentDiagonal;
    }
    out.basis = q;
    out.triangle = r;
    out.latent_positions.bottomRows(dim) = (q * r).transpose();
    return out;
}

PositionRecovery recover_positions(const Eigen::MatrixXd& corr, double range, CorrelationFamily family,
                                   double max_distance) {
    const auto p = corr.rows();
    if (corr.cols() != p) throw InputError("correlation matrix must be square");
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(p, p);
    std::vector<std::string> warnings;
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = i + 1; j < p; ++j) {
            const double c = std::min(1.0, std::abs(corr(i, j)));
            double dist;
            if (c <= 0.0) {
                dist = max_distance;
                warnings.push_back("zero cross-correlation between processes " + std::to_string(i + 1) + " and " +
                                   std::to_string(j + 1) + "; distance clamped to " + std::to_string(max_distance));
            } else {
                dist = inverse_correlation(family, c, range);
            }
            d(i, j) = d(j, i) = dist;
        }
    }
    auto out = positions_from_distances(d);
    out.warnings.insert(out.warnings.end(), warnings.begin(), warnings.end());
    return out;
}

LatentEncoding encode_latent(const Eigen::MatrixXd& latent_positions) {
    const auto p = latent_positions.rows();
    if (p < 1) throw InputError("latent positions need at least one process");
    const Eigen::Index dim = p - 1;
    LatentEncoding out;
    out.triangle.resize(triangle_size(static_cast<int>(p)));
    if (dim == 0) {
        out.basis.resize(0, 0);
        return out;
    }
    Eigen::MatrixXd q, r;
    if (latent_positions.cols() == dim) {
        const Eigen::MatrixXd shifted = latent_positions.rowwise() - latent_positions.row(0);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(shifted.bottomRows(dim).transpose());
        q = qr.householderQ();
        r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (Eigen::Index i = 0; i < dim; ++i)
            if (r(i, i) < 0.0) {
                q.col(i) *= -1.0;
                r.row(i) *= -1.0;
            }
    } else {
        Eigen::MatrixXd d(p, p);
        for (Eigen::Index i = 0; i < p; ++i)
            for (Eigen::Index j = 0; j < p; ++j) d(i, j) = (latent_positions.row(i) - latent_positions.row(j)).norm();
        const auto rec = positions_from_distances(d);
        q = rec.basis;
        r = rec.triangle;
    }
    int k = 0;
    for (Eigen::Index j = 0; j < dim; ++j) {
        for (Eigen::Index i = 0; i <= j; ++i, ++k) {
            if (i == j) {
                if (!(r(i, i) > 0.0)) throw InputError("latent triangle has a nonpositive diagonal entry");
                out.triangle[k] = std::log(r(i, i));
            } else {
                out.triangle[k] = r(i, j);
            }
        }
    }
    out.basis = q;
    return out;
}

GaussianScorer::GaussianScorer(const ParametricParams& params, std::span<const SpatialSite> sites, int target_process)
    : target_process_(target_process) {
    const Eigen::MatrixXd k = parametric_covariance(params, sites);
    full_.compute(k);
    if (full_.info() != Eigen::Success) throw NumericalError("parametric covariance is not positive definite");
    if (target_process > 0) {
        for (std::size_t i = 0; i < sites.size(); ++i)
            if (sites[i].process_id != target_process) observed_index_.push_back(static_cast<int>(i));
        const auto n = static_cast<Eigen::Index>(observed_index_.size());
        Eigen::MatrixXd ko(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) ko(i, j) = k(observed_index_[i], observed_index_[j]);
        observed_.compute(ko);
        if (observed_.info() != Eigen::Success) throw NumericalError("observed-block covariance is not positive definite");
    }
}

namespace {
double gaussian_log_density(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& y) {
    const Eigen::MatrixXd& l = llt.matrixLLT();
    const Eigen::VectorXd white = llt.matrixL().solve(y);
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    return -0.5 * (static_cast<double>(y.size()) * kLog2Pi + log_det + white.squaredNorm());
}
}  // namespace

double GaussianScorer::log_density(const Eigen::Ref<const Eigen::VectorXd>& field) const {
    if (field.size() != full_.rows()) throw InputError("field length does not match the parametric model");
    return gaussian_log_density(full_, field);
}

double GaussianScorer::conditional_log_density(const Eigen::Ref<const Eigen::VectorXd>& field) const {
    if (target_process_ <= 0) throw ContractError("scorer was built without a target process");
    Eigen::VectorXd yo(static_cast<Eigen::Index>(observed_index_.size()));
    for (std::size_t i = 0; i < observed_index_.size(); ++i) yo[static_cast<Eigen::Index>(i)] = field[observed_index_[i]];
    return log_density(field) - gaussian_log_density(observed_, yo);
}

}  // namespace mvtm

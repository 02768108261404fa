#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the library code it checks.

#include "mvtm/geometry.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

inline Eigen::VectorXd coords(const mvtm::AugmentedLocation& p) {
    Eigen::VectorXd x(p.spatial.size() + p.latent.size());
    x << p.spatial, p.latent;
    return x;
}

inline double dist(const mvtm::AugmentedLocation& a, const mvtm::AugmentedLocation& b) {
    return (coords(a) - coords(b)).norm();
}

/// Greedy maxmin recomputing every min-distance from scratch at each step.
inline std::vector<int> maxmin(const std::vector<mvtm::AugmentedLocation>& pts, const std::vector<int>& block_last) {
    const int n = static_cast<int>(pts.size());
    std::vector<char> in_block(n, 0);
    for (int b : block_last) in_block[b] = 1;
    std::vector<int> order;
    std::vector<char> used(n, 0);
    for (int phase = 0; phase < 2; ++phase) {
        std::vector<int> cand;
        for (int k = 0; k < n; ++k)
            if (static_cast<int>(in_block[k]) == phase) cand.push_back(k);
        if (cand.empty()) continue;
        if (order.empty()) {
            Eigen::VectorXd c = Eigen::VectorXd::Zero(coords(pts[cand[0]]).size());
            for (int k : cand) c += coords(pts[k]);
            c /= static_cast<double>(cand.size());
            int best = cand[0];
            for (int k : cand)
                if ((coords(pts[k]) - c).squaredNorm() < (coords(pts[best]) - c).squaredNorm()) best = k;
            order.push_back(best);
            used[best] = 1;
        }
        while (true) {
            int best = -1;
            double best_val = -1.0;
            for (int k : cand) {
                if (used[k]) continue;
                double mind = std::numeric_limits<double>::infinity();
                for (int o : order) {
                    const Eigen::VectorXd d = coords(pts[k]) - coords(pts[o]);
                    mind = std::min(mind, d.squaredNorm());
                }
                if (mind > best_val) {
                    best_val = mind;
                    best = k;
                }
            }
            if (best < 0) break;
            order.push_back(best);
            used[best] = 1;
        }
    }
    return order;
}

/// Sort every previous position by (distance, position) and keep m.
inline std::vector<std::vector<int>> neighbours(const std::vector<mvtm::AugmentedLocation>& pts,
                                                const std::vector<int>& perm, int m) {
    std::vector<std::vector<int>> out(perm.size());
    for (std::size_t n = 1; n < perm.size(); ++n) {
        std::vector<std::pair<double, int>> all;
        for (std::size_t j = 0; j < n; ++j)
            all.emplace_back((coords(pts[perm[n]]) - coords(pts[perm[j]])).squaredNorm(), static_cast<int>(j));
        std::stable_sort(all.begin(), all.end());
        for (std::size_t i = 0; i < std::min<std::size_t>(m, all.size()); ++i) out[n].push_back(all[i].second);
    }
    return out;
}

/// log of the integral over s = d^2 of N(y; 0, s G) IG(s; alpha, beta),
/// computed by adaptive Gauss-Kronrod quadrature on log s.
inline double integrated_loglik(const Eigen::VectorXd& y, const Eigen::MatrixXd& g, double alpha, double beta) {
    const double r = static_cast<double>(y.size());
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(g);
    const double log_det = std::log(std::abs(lu.determinant()));
    const double quad = y.dot(lu.solve(y));
    auto log_integrand = [&](double t) {
        const double s = std::exp(t);
        const double log_normal = -0.5 * r * std::log(2.0 * std::numbers::pi) - 0.5 * r * t - 0.5 * log_det -
                                  0.5 * quad / s;
        const double log_ig = alpha * std::log(beta) - std::lgamma(alpha) - (alpha + 1.0) * t - beta / s;
        return log_normal + log_ig + t;  // dt Jacobian
    };
    // locate the mode on a coarse grid, then integrate around it
    double mode = 0.0;
    double peak = -std::numeric_limits<double>::infinity();
    for (double t = -60.0; t <= 60.0; t += 0.01) {
        const double v = log_integrand(t);
        if (v > peak) {
            peak = v;
            mode = t;
        }
    }
    auto f = [&](double t) { return std::exp(log_integrand(t) - peak); };
    double error = 0.0;
    const double width = 60.0;
    const double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, mode - width, mode + width,
                                                                                       20, 1e-14, &error);
    return peak + std::log(value);
}

/// Two-sided one-sample Kolmogorov-Smirnov test against N(0,1); returns the
/// asymptotic p-value with Stephens' small-sample correction.
inline double ks_pvalue_normal(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    const boost::math::normal_distribution<double> normal;
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = boost::math::cdf(normal, x[i]);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
    }
    const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
    double p = 0.0;
    for (int k = 1; k <= 200; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    return std::clamp(p, 0.0, 1.0);
}

/// Central finite difference of f along coordinate k.
inline double central_difference(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x, int k,
                                 double h) {
    const double x0 = x[k];
    x[k] = x0 + h;
    const double up = f(x);
    x[k] = x0 - h;
    const double down = f(x);
    return (up - down) / (2.0 * h);
}

/// log N(y; mu, cov) via an eigen-decomposition (independent of Cholesky).
inline double gaussian_logpdf(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const Eigen::VectorXd z = es.eigenvectors().transpose() * (y - mu);
    double out = -0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
    for (Eigen::Index i = 0; i < z.size(); ++i)
        out += -0.5 * std::log(es.eigenvalues()[i]) - 0.5 * z[i] * z[i] / es.eigenvalues()[i];
    return out;
}

}  // namespace oracle

#include "mvtm/map.hpp"

#include "mvtm/errors.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace mvtm {

namespace {

constexpr double kCdfClamp = 1e-12;

Eigen::VectorXd gather(const Eigen::Ref<const Eigen::VectorXd>& field, const OrderingPlan& plan, int n) {
    const auto& cond = plan.conditioning[n];
    Eigen::VectorXd u(static_cast<Eigen::Index>(cond.size()));
    for (std::size_t i = 0; i < cond.size(); ++i) u[static_cast<Eigen::Index>(i)] = field[plan.permutation[cond[i]]];
    return u;
}

void check_field(const FittedMap& map, const Eigen::Ref<const Eigen::VectorXd>& field) {
    if (field.size() != map.size())
        throw InputError("field has " + std::to_string(field.size()) + " values but the map has " +
                         std::to_string(map.size()) + " components");
    if (!field.allFinite()) throw InputError("non-finite value in field");
}

// Draws component n given already-populated conditioning values in `field`.
double draw(const MapComponent& c, const Eigen::VectorXd& u, std::mt19937_64& rng) {
    const Predictive pred = predictive(c, u);
    boost::random::normal_distribution<double> normal(0.0, 1.0);
    if (c.kind == ComponentKind::Pinned) return pred.location + pred.scale * normal(rng);
    // d^2 ~ IG(alpha~, beta~), y ~ N(mean, d^2 (1 + v)); pred.scale^2 = (beta~/alpha~)(1 + v)
    boost::random::gamma_distribution<double> gamma(c.alpha_tilde, 1.0);
    const double d2 = c.beta_tilde / gamma(rng);
    const double var = d2 * pred.scale * pred.scale * c.alpha_tilde / c.beta_tilde;
    return pred.location + std::sqrt(var) * normal(rng);
}

}  // namespace

double Predictive::log_pdf(double y) const {
    const double z = (y - location) / scale;
    if (!std::isfinite(dof)) return -0.5 * z * z - std::log(scale) - 0.5 * std::log(2.0 * std::numbers::pi);
    return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) - 0.5 * std::log(dof * std::numbers::pi) -
           std::log(scale) - 0.5 * (dof + 1.0) * std::log1p(z * z / dof);
}

double Predictive::cdf(double y) const {
    const double z = (y - location) / scale;
    if (!std::isfinite(dof)) return boost::math::cdf(boost::math::normal_distribution<double>(), z);
    return boost::math::cdf(boost::math::students_t_distribution<double>(dof), z);
}

double Predictive::upper_tail(double y) const {
    const double z = (y - location) / scale;
    if (!std::isfinite(dof)) return boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(), z));
    return boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<double>(dof), z));
}

std::vector<int> FittedMap::target_locations() const {
    std::vector<int> out(plan.permutation.begin() + plan.block_start, plan.permutation.end());
    std::sort(out.begin(), out.end());
    return out;
}

FittedMap build_map(std::vector<SpatialSite> sites, const Eigen::MatrixXd& latent_basis, const HyperParams& theta,
                    OrderingPlan plan, const Eigen::MatrixXd& train, double g) {
    FittedMap map;
    map.num_processes = theta.num_processes();
    map.latent_basis = latent_basis;
    map.latent_positions = decode_latent(theta.latent_triangle, latent_basis);
    map.theta = theta;
    map.g = g;
    const auto points = augment_locations(sites, map.latent_positions);
    const auto comps = extract_components(train, points, plan);
    const ModelContext ctx{map.num_processes, g};

    map.components.resize(comps.size());
    for (std::size_t n = 0; n < comps.size(); ++n) {
        auto& mc = map.components[n];
        mc.kind = ComponentKind::Gp;
        mc.prior = prior_for(comps[n], theta, ctx);
        const auto stats = posterior_stats(comps[n], mc.prior);
        mc.train_neighbors = comps[n].neighbors;
        mc.gram_factor = stats.gram_factor;
        mc.weights = stats.weights;
        mc.alpha_tilde = stats.alpha_tilde;
        mc.beta_tilde = stats.beta_tilde;
    }
    map.sites = std::move(sites);
    map.plan = std::move(plan);
    return map;
}

FittedMap make_pinned_map(std::vector<SpatialSite> sites, const Eigen::MatrixXd& latent_positions,
                          OrderingPlan plan, const std::vector<Eigen::VectorXd>& weights,
                          const std::vector<double>& variances) {
    const auto total = static_cast<std::size_t>(plan.size());
    if (weights.size() != total || variances.size() != total || sites.size() != total)
        throw InputError("pinned map needs one weight vector and variance per component");
    FittedMap map;
    map.num_processes = static_cast<int>(latent_positions.rows());
    map.latent_positions = latent_positions;
    map.latent_basis = Eigen::MatrixXd::Identity(map.num_processes - 1, map.num_processes - 1);
    map.theta.latent_triangle = Eigen::VectorXd::Zero(triangle_size(map.num_processes));
    map.components.resize(total);
    for (std::size_t n = 0; n < total; ++n) {
        if (static_cast<std::size_t>(weights[n].size()) != plan.conditioning[n].size())
            throw InputError("pinned weights do not match conditioning set at position " + std::to_string(n));
        if (!(variances[n] > 0.0)) throw InputError("pinned variance must be positive");
        auto& c = map.components[n];
        c.kind = ComponentKind::Pinned;
        c.pinned_weights = weights[n];
        c.pinned_variance = variances[n];
    }
    map.sites = std::move(sites);
    map.plan = std::move(plan);
    return map;
}

Predictive predictive(const MapComponent& c, const Eigen::Ref<const Eigen::VectorXd>& u) {
    Predictive p;
    if (c.kind == ComponentKind::Pinned) {
        p.location = u.size() > 0 ? c.pinned_weights.dot(u) : 0.0;
        p.scale = std::sqrt(c.pinned_variance);
        return p;
    }
    p.dof = 2.0 * c.alpha_tilde;
    const double noise = c.beta_tilde / c.alpha_tilde;
    const Eigen::Index m = c.train_neighbors.cols();
    if (m == 0) {
        p.scale = std::sqrt(noise);
        return p;
    }
    if (u.size() != m) throw InputError("neighbour vector length does not match the component");
    const auto& q = c.prior.q_diag;
    const Eigen::Index rows = c.train_neighbors.rows();
    Eigen::VectorXd k_star(rows);
    const double inv_gamma = 1.0 / c.prior.gamma;
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto ui = c.train_neighbors.row(i).transpose();
        const double lin = (q.array() * ui.array() * u.array()).sum();
        const double dist = std::sqrt((q.array() * (ui - u).array().square()).sum());
        k_star[i] = (lin + c.prior.sigma2 * matern32(dist * inv_gamma)) / c.prior.expected_d2;
    }
    const double k_self = ((q.array() * u.array().square()).sum() + c.prior.sigma2) / c.prior.expected_d2;
    const Eigen::VectorXd half = c.gram_factor.triangularView<Eigen::Lower>().solve(k_star);
    const double v = std::max(0.0, k_self - half.squaredNorm());
    p.location = k_star.dot(c.weights);
    p.scale = std::sqrt(noise * (1.0 + v));
    return p;
}

double log_density(const FittedMap& map, const Eigen::Ref<const Eigen::VectorXd>& field, int first_position) {
    check_field(map, field);
    double total = 0.0;
    for (int n = first_position; n < map.size(); ++n) {
        const Predictive p = predictive(map.components[n], gather(field, map.plan, n));
        total += p.log_pdf(field[map.plan.permutation[n]]);
    }
    return total;
}

double conditional_log_density(const FittedMap& map, const Eigen::Ref<const Eigen::VectorXd>& field) {
    if (!map.conditional) throw ContractError("map was not fitted with a block-last ordering");
    return log_density(map, field, map.plan.block_start);
}

Eigen::MatrixXd sample(const FittedMap& map, int count, std::uint64_t seed) {
    if (count < 0) throw InputError("sample count must be non-negative");
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd out(count, map.size());
    Eigen::VectorXd field(map.size());
    for (int r = 0; r < count; ++r) {
        for (int n = 0; n < map.size(); ++n)
            field[map.plan.permutation[n]] = draw(map.components[n], gather(field, map.plan, n), rng);
        out.row(r) = field.transpose();
    }
    return out;
}

Eigen::MatrixXd conditional_sample(const FittedMap& map, const Eigen::Ref<const Eigen::VectorXd>& observed, int count,
                                   std::uint64_t seed) {
    if (!map.conditional) throw ContractError("conditional sampling needs a map fitted with a block-last ordering");
    if (count < 0) throw InputError("sample count must be non-negative");
    if (observed.size() != map.size()) throw InputError("observed field length does not match the map");
    const int start = map.plan.block_start;
    for (int n = 0; n < start; ++n)
        if (!std::isfinite(observed[map.plan.permutation[n]]))
            throw InputError("observed values must cover every conditioning component");
    const auto targets = map.target_locations();
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd out(count, static_cast<Eigen::Index>(targets.size()));
    Eigen::VectorXd field = observed;
    for (int r = 0; r < count; ++r) {
        for (int n = start; n < map.size(); ++n)
            field[map.plan.permutation[n]] = draw(map.components[n], gather(field, map.plan, n), rng);
        for (std::size_t k = 0; k < targets.size(); ++k) out(r, static_cast<Eigen::Index>(k)) = field[targets[k]];
    }
    return out;
}

Eigen::VectorXd forward_transform(const FittedMap& map, const Eigen::Ref<const Eigen::VectorXd>& field) {
    check_field(map, field);
    const boost::math::normal_distribution<double> std_normal;
    Eigen::VectorXd z(map.size());
    for (int n = 0; n < map.size(); ++n) {
        const int loc = map.plan.permutation[n];
        const Predictive p = predictive(map.components[n], gather(field, map.plan, n));
        // work with the smaller tail so that large |z| keep full precision
        if (field[loc] <= p.location) {
            z[loc] = boost::math::quantile(std_normal, std::clamp(p.cdf(field[loc]), kCdfClamp, 1.0 - kCdfClamp));
        } else {
            const double upper = std::clamp(p.upper_tail(field[loc]), kCdfClamp, 1.0 - kCdfClamp);
            z[loc] = -boost::math::quantile(std_normal, upper);
        }
    }
    return z;
}

}  // namespace mvtm

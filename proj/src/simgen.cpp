#include "mvtm/simgen.hpp"

#include "mvtm/errors.hpp"
#include "mvtm/format.hpp"
#include "mvtm/map.hpp"
#include "mvtm/pipeline.hpp"

#include <boost/random/normal_distribution.hpp>

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

namespace mvtm {

namespace {

constexpr double kMinConditionalVariance = 1e-10;

struct MeanStd {
    double mean;
    double sd;
};

MeanStd summarize(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    return {mean, sd};
}

}  // namespace

WeightMode parse_weight_mode(const std::string& name) {
    if (name == "kriging") return WeightMode::Kriging;
    if (name == "kernel") return WeightMode::Kernel;
    throw InputError("unknown weight mode '" + name + "' (expected kriging or kernel)");
}

std::string to_string(WeightMode mode) { return mode == WeightMode::Kriging ? "kriging" : "kernel"; }

Eigen::MatrixXd default_latent_positions(int num_processes) {
    if (num_processes < 1 || num_processes > 5) throw InputError("default latent positions exist for P in 1..5");
    Eigen::MatrixXd all(5, 3);
    all << 0.0, 0.0, 0.0,
           0.2, 0.0, 0.0,
           0.0, 0.3, 0.0,
           0.0, 0.0, 0.4,
           0.3, 0.3, 0.0;
    return all.topRows(num_processes);
}

void DgpConfig::validate() const {
    if (num_processes < 1) throw InputError("P must be at least 1");
    if (grid_side < 2) throw InputError("grid side must be at least 2");
    if (r_train < 0 || r_val < 0 || r_test < 0) throw InputError("replicate counts must be non-negative");
    if (!(weight_range > 0.0)) throw InputError("weight range must be positive");
    if (m < 1) throw InputError("DGP conditioning size must be positive");
    if (latent_positions.size() == 0 && num_processes > 5)
        throw InputError("P > 5 needs explicit latent positions");
    if (latent_positions.size() > 0 && latent_positions.rows() != num_processes)
        throw InputError("latent positions must have one row per process");
}

Eigen::MatrixXd DgpConfig::resolved_latent() const {
    return latent_positions.size() > 0 ? latent_positions : default_latent_positions(num_processes);
}

std::vector<SpatialSite> grid_sites(int side, int num_processes) {
    std::vector<SpatialSite> out;
    out.reserve(static_cast<std::size_t>(side * side * num_processes));
    for (int p = 1; p <= num_processes; ++p)
        for (int r = 0; r < side; ++r)
            for (int c = 0; c < side; ++c) {
                SpatialSite s;
                s.coords = Eigen::Vector2d(static_cast<double>(c) / (side - 1), static_cast<double>(r) / (side - 1));
                s.process_id = p;
                out.push_back(std::move(s));
            }
    return out;
}

DgpWeights dgp_weights(std::span<const AugmentedLocation> points, const OrderingPlan& plan, double range,
                       WeightMode mode) {
    DgpWeights out;
    const int total = plan.size();
    out.weights.resize(static_cast<std::size_t>(total));
    out.sd.resize(static_cast<std::size_t>(total));
    for (int n = 0; n < total; ++n) {
        const auto& cond = plan.conditioning[n];
        const auto m = static_cast<Eigen::Index>(cond.size());
        const auto& here = points[plan.permutation[n]];
        Eigen::VectorXd k(m);
        for (Eigen::Index i = 0; i < m; ++i) k[i] = std::exp(-distance(here, points[plan.permutation[cond[i]]]) / range);
        if (n == 0) {
            out.weights[n] = Eigen::VectorXd(0);
            out.sd[n] = 1.0;
            continue;
        }
        if (mode == WeightMode::Kernel) {
            out.weights[n] = k;
            out.sd[n] = std::min(1.0, std::sqrt(plan.nearest_prev_distance[n]));
            continue;
        }
        Eigen::MatrixXd kc(m, m);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j)
                kc(i, j) = std::exp(-distance(points[plan.permutation[cond[i]]], points[plan.permutation[cond[j]]]) / range);
        Eigen::LLT<Eigen::MatrixXd> llt(kc);
        if (llt.info() != Eigen::Success) throw NumericalError("DGP kriging system is singular at position " + std::to_string(n));
        out.weights[n] = llt.solve(k);
        out.sd[n] = std::sqrt(std::max(kMinConditionalVariance, 1.0 - k.dot(out.weights[n])));
    }
    return out;
}

DgpTruth build_truth(const DgpConfig& config) {
    config.validate();
    DgpTruth truth;
    truth.sites = grid_sites(config.grid_side, config.num_processes);
    truth.latent_positions = config.resolved_latent();
    truth.nonlinearity = config.nonlinearity;
    const auto points = augment_locations(truth.sites, truth.latent_positions);
    truth.plan = build_plan(points, config.m);
    truth.weights = dgp_weights(points, truth.plan, config.weight_range, config.weight_mode);
    return truth;
}

double dgp_mean(const DgpTruth& truth, int n, const Eigen::Ref<const Eigen::VectorXd>& field) {
    const auto& cond = truth.plan.conditioning[n];
    const auto& b = truth.weights.weights[n];
    double linear = 0.0;
    double inner = 0.0;
    for (std::size_t i = 0; i < cond.size(); ++i) {
        const double v = field[truth.plan.permutation[cond[i]]];
        linear += b[static_cast<Eigen::Index>(i)] * v;
        if (i < 2) inner += b[static_cast<Eigen::Index>(i)] * v;
    }
    return linear + truth.nonlinearity * std::sin(4.0 * inner);
}

Eigen::VectorXd simulate_field(const DgpTruth& truth, const Eigen::Ref<const Eigen::VectorXd>& z) {
    const int total = truth.plan.size();
    if (z.size() != total) throw InputError("innovation vector length does not match the field");
    Eigen::VectorXd field = Eigen::VectorXd::Zero(total);
    for (int n = 0; n < total; ++n)
        field[truth.plan.permutation[n]] = dgp_mean(truth, n, field) + truth.weights.sd[n] * z[n];
    return field;
}

double truth_log_density(const DgpTruth& truth, const Eigen::Ref<const Eigen::VectorXd>& field, int target_process) {
    const int total = truth.plan.size();
    if (field.size() != total) throw InputError("field length does not match the generating process");
    if (target_process > 0)
        throw ContractError("the generating ordering is unconstrained; conditional truth densities are not closed-form");
    double total_lp = 0.0;
    for (int n = 0; n < total; ++n) {
        const double sd = truth.weights.sd[n];
        const double r = (field[truth.plan.permutation[n]] - dgp_mean(truth, n, field)) / sd;
        total_lp += -0.5 * r * r - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    return total_lp;
}

SimulatedData simulate(const DgpConfig& config) {
    SimulatedData out;
    out.truth = build_truth(config);
    const int total = out.truth.plan.size();
    std::mt19937_64 rng(config.seed);
    boost::random::normal_distribution<double> normal(0.0, 1.0);
    auto draw_set = [&](int count) {
        Eigen::MatrixXd set(count, total);
        Eigen::VectorXd z(total);
        for (int r = 0; r < count; ++r) {
            for (int n = 0; n < total; ++n) z[n] = normal(rng);
            set.row(r) = simulate_field(out.truth, z).transpose();
        }
        return set;
    };
    out.train = draw_set(config.r_train);
    out.validation = draw_set(config.r_val);
    out.test = draw_set(config.r_test);
    return out;
}

Method parse_method(const std::string& name) {
    if (name == "parametric") return Method::Parametric;
    if (name == "cpp" || name == "CPP") return Method::Cpp;
    if (name == "fo" || name == "FO") return Method::Fo;
    if (name == "or" || name == "OR") return Method::Or;
    throw InputError("unknown method '" + name + "'");
}

std::string to_string(Method m) {
    switch (m) {
        case Method::Parametric: return "parametric";
        case Method::Cpp: return "cpp";
        case Method::Fo: return "fo";
        case Method::Or: return "or";
    }
    return "parametric";
}

std::vector<ComparisonRow> run_comparison(const ComparisonConfig& config) {
    using clock = std::chrono::steady_clock;
    std::vector<ComparisonRow> rows;
    int max_r = 0;
    for (int r : config.replicate_counts) max_r = std::max(max_r, r);

    for (int p : config.process_counts) {
        for (std::uint64_t seed : config.seeds) {
            DgpConfig dgp = config.dgp;
            dgp.num_processes = p;
            dgp.r_train = max_r;
            dgp.seed = seed;
            if (dgp.latent_positions.size() > 0 && dgp.latent_positions.rows() != p) dgp.latent_positions.resize(0, 0);
            const SimulatedData data = simulate(dgp);
            const auto& sites = data.truth.sites;

            for (int r : config.replicate_counts) {
                const Eigen::MatrixXd train = data.train.topRows(r);
                auto record = [&](Method method, const std::string& objective, auto&& scorer, double seconds) {
                    ComparisonRow row{p, r, to_string(method), objective, 0.0, 0.0, seconds, seed, "ok"};
                    std::vector<double> scores;
                    for (Eigen::Index t = 0; t < data.test.rows(); ++t)
                        scores.push_back(scorer(Eigen::VectorXd(data.test.row(t).transpose())));
                    const auto s = summarize(scores);
                    row.mean_log_density = s.mean;
                    row.sd_log_density = s.sd;
                    rows.push_back(row);
                };
                auto failed = [&](Method method, const std::string& objective, const std::exception& e) {
                    ComparisonRow row{p, r, to_string(method), objective, std::nan(""), std::nan(""), 0.0, seed,
                                      std::string("failed: ") + e.what()};
                    rows.push_back(row);
                };

                // stage 1 is shared by every method of this cell
                std::optional<Stage1Result> stage1;
                double stage1_seconds = 0.0;
                try {
                    const auto t0 = clock::now();
                    ParametricFitConfig init = config.init;
                    init.seed = seed;
                    stage1 = run_stage1(train, sites, p, init);
                    stage1_seconds = std::chrono::duration<double>(clock::now() - t0).count();
                } catch (const std::exception& e) {
                    for (Method m : config.methods) failed(m, "joint", e);
                    continue;
                }

                for (Method method : config.methods) {
                    if (method == Method::Parametric) {
                        const GaussianScorer joint(stage1->parametric.params, sites);
                        record(method, "joint", [&](const Eigen::VectorXd& y) { return joint.log_density(y); },
                               stage1_seconds);
                        if (config.conditional && p > 1) {
                            const GaussianScorer cond(stage1->parametric.params, sites, 1);
                            record(method, "conditional",
                                   [&](const Eigen::VectorXd& y) { return cond.conditional_log_density(y); },
                                   stage1_seconds);
                        }
                        continue;
                    }
                    PipelineConfig pc;
                    pc.train = config.train;
                    pc.train.seed = seed;
                    pc.train.strategy = method == Method::Cpp ? Strategy::Cpp
                                        : method == Method::Fo ? Strategy::Fo
                                                               : Strategy::Or;
                    pc.init = config.init;
                    pc.latent_positions = stage1->positions.latent_positions;
                    std::vector<int> targets{0};
                    if (config.conditional && p > 1 && method != Method::Or) targets.push_back(1);
                    for (int target : targets) {
                        const std::string objective = target == 0 ? "joint" : "conditional";
                        try {
                            const auto t0 = clock::now();
                            pc.target_process = target;
                            const auto res = fit_pipeline(sites, p, train, data.validation, pc);
                            const double seconds =
                                stage1_seconds + std::chrono::duration<double>(clock::now() - t0).count();
                            if (target == 0)
                                record(method, objective,
                                       [&](const Eigen::VectorXd& y) { return log_density(res.map, y); }, seconds);
                            else
                                record(method, objective,
                                       [&](const Eigen::VectorXd& y) { return conditional_log_density(res.map, y); },
                                       seconds);
                        } catch (const std::exception& e) {
                            failed(method, objective, e);
                        }
                    }
                }
            }
        }
    }
    return rows;
}

void write_results_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
    out << "P,R,method,objective,mean_log_density,sd_log_density,wall_seconds,seed,status\n";
    for (const auto& r : rows)
        out << r.num_processes << ',' << r.replicates << ',' << r.method << ',' << r.objective << ','
            << format_double(r.mean_log_density) << ',' << format_double(r.sd_log_density) << ','
            << format_double(r.wall_seconds) << ',' << r.seed << ',' << r.status << '\n';
}

}  // namespace mvtm

// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "commands.hpp"

#include "mvtm/errors.hpp"
#include "mvtm/geometry.hpp"
#include "mvtm/likelihood.hpp"
#include "mvtm/map.hpp"
#include "mvtm/parametric.hpp"
#include "mvtm/pipeline.hpp"
#include "mvtm/prior.hpp"
#include "mvtm/simgen.hpp"

#include "../support/gaussian_case.hpp"
#include "../support/oracles.hpp"

#include <boost/random/gamma_distribution.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace mvtm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const std::string& id, const std::function<Outcome()>& check, double time_limit = 0.0) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (time_limit > 0.0 && secs >= time_limit) {
        o.pass = false;
        o.detail += "; over time limit " + std::to_string(time_limit) + " s";
    }
    if (!o.pass) ++failures;
    std::printf("%s %s %s (%.1f s)\n", id.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

ComponentPrior plain_prior(double alpha, double beta, int m) {
    ComponentPrior p;
    p.alpha = alpha;
    p.beta = beta;
    p.q_diag = Eigen::VectorXd::Ones(m);
    return p;
}

ComponentData make_data(Eigen::VectorXd y, Eigen::MatrixXd neighbors) {
    ComponentData d;
    d.responses = std::move(y);
    d.neighbors = std::move(neighbors);
    return d;
}

Eigen::MatrixXd pairwise(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd d(x.rows(), x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.rows(); ++j) d(i, j) = (x.row(i) - x.row(j)).norm();
    return d;
}

Outcome likelihood_oracle() {
    double worst = 0.0;
    const double pinned[3] = {
        component_loglik(make_data(Eigen::VectorXd::Zero(1), Eigen::MatrixXd(1, 0)), plain_prior(2, 1, 0)),
        component_loglik(make_data(Eigen::VectorXd::Zero(2), Eigen::MatrixXd(2, 0)), plain_prior(2, 1, 0)),
        component_loglik(make_data(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Ones(1, 1)), plain_prior(2, 1, 1))};
    const double expected[3] = {-0.6342557, -1.1447299, -0.9808293};
    bool pinned_ok = true;
    for (int k = 0; k < 3; ++k) pinned_ok &= std::abs(pinned[k] - expected[k]) <= 5e-8;

    std::mt19937_64 rng(101);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.2, 3.0);
    std::uniform_int_distribution<int> rows_d(1, 3), m_d(0, 2);
    for (int trial = 0; trial < 50; ++trial) {
        const int rows = rows_d(rng), m = m_d(rng);
        ComponentPrior prior = plain_prior(2.0 + u(rng), u(rng), m);
        prior.sigma2 = u(rng);
        prior.expected_d2 = u(rng);
        prior.gamma = u(rng);
        for (int j = 0; j < m; ++j) prior.q_diag[j] = std::exp(-(j + 1) * u(rng));
        Eigen::VectorXd y(rows);
        for (auto& v : y) v = 2.0 * n(rng);
        Eigen::MatrixXd nb(rows, m);
        for (Eigen::Index i = 0; i < nb.size(); ++i) nb.data()[i] = n(rng);
        const double lib = component_loglik(make_data(y, nb), prior);
        const double ref = oracle::integrated_loglik(y, gram(nb, prior), prior.alpha, prior.beta);
        worst = std::max(worst, std::abs(lib - ref) / std::abs(ref));
    }
    return {pinned_ok && worst <= 1e-6,
            "50 cases, max rel err " + fmt("%.2e", worst) + " (tol 1e-6); pinned " +
                (pinned_ok ? "match" : "MISMATCH") + fmt(" [%.7f", pinned[0]) + fmt(", %.7f", pinned[1]) +
                fmt(", %.7f]", pinned[2])};
}

Outcome gradient_gate() {
    std::mt19937_64 rng(202);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(-0.6, 0.6), w(0.05, 0.5);
    double worst = 0.0;
    int coords = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int processes = 1 + trial % 4;
        const int count = 4 + trial % 5, rows = 2 + trial % 4, m = 1 + trial % 4;
        std::uniform_int_distribution<int> proc(1, processes);
        std::vector<ComponentData> comps;
        for (int k = 0; k < count; ++k) {
            ComponentData d;
            d.responses.resize(rows);
            for (auto& v : d.responses) v = n(rng);
            d.neighbors.resize(rows, std::min(m, k));
            for (Eigen::Index i = 0; i < d.neighbors.size(); ++i) d.neighbors.data()[i] = n(rng);
            d.source = {w(rng) * w(rng), proc(rng), proc(rng)};
            d.position = k;
            comps.push_back(std::move(d));
        }
        HyperParams t;
        t.theta_q = -0.5 + u(rng);
        t.theta_gamma = u(rng);
        t.theta_d1 = u(rng);
        t.theta_d2 = u(rng);
        t.theta_sigma1 = u(rng);
        t.theta_sigma2 = u(rng);
        t.latent_triangle = Eigen::VectorXd(triangle_size(processes));
        for (auto& v : t.latent_triangle) v = -1.0 + u(rng);
        const ModelContext ctx{processes, 4.0};
        const Eigen::VectorXd g = gradient(comps, t, ctx);
        auto f = [&](const Eigen::VectorXd& x) { return batch_loglik(comps, HyperParams::from_vector(x), ctx); };
        for (int k = 0; k < t.size(); ++k) {
            const double fd = oracle::central_difference(f, t.to_vector(), k, 1e-5);
            worst = std::max(worst, std::abs(g[k] - fd) / std::max(std::abs(fd), 1e-6));
            ++coords;
        }
    }
    return {worst <= 1e-4, "20 configs (P 1-4), " + std::to_string(coords) + " coords, max rel err " +
                               fmt("%.2e", worst) + " (tol 1e-4, h 1e-5)"};
}

Outcome ordering_oracle() {
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> size_d(2, 200), m_d(1, 12), proc_d(1, 4);
    int mismatches = 0, constrained = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = size_d(rng), processes = proc_d(rng), m = m_d(rng);
        std::vector<SpatialSite> sites;
        for (int k = 0; k < n; ++k) sites.push_back({Eigen::Vector2d(u(rng), u(rng)), 1 + k % processes});
        Eigen::MatrixXd latent = Eigen::MatrixXd::Zero(processes, std::max(processes - 1, 0));
        for (int p = 1; p < processes; ++p)
            for (int c = 0; c < p; ++c) latent(p, c) = 0.5 * u(rng);
        const auto pts = augment_locations(sites, latent);
        std::vector<int> block;
        if (trial % 2 == 1) {
            const int target = 1 + trial % processes;
            for (int k = 0; k < n; ++k)
                if (pts[k].process_id == target) block.push_back(k);
            ++constrained;
        }
        const auto perm = maxmin_order(pts, block);
        const auto plan = build_plan(pts, m, block);
        if (perm != oracle::maxmin(pts, block) || plan.permutation != perm ||
            plan.conditioning != oracle::neighbours(pts, perm, m))
            ++mismatches;
    }
    return {mismatches == 0, "100 sets (N<=200, " + std::to_string(constrained) + " block-last), " +
                                 std::to_string(mismatches) + " mismatches"};
}

Outcome prior_moments() {
    HyperParams t;
    t.theta_d1 = -0.4;
    t.theta_d2 = 0.3;
    const auto p = prior_params(t, 0.2, 4.0);
    std::mt19937_64 rng(404);
    boost::random::gamma_distribution<double> gamma(p.alpha, 1.0);
    const int draws = 1000000;
    std::vector<double> x(draws);
    double s1 = 0.0;
    for (auto& v : x) s1 += (v = p.beta / gamma(rng));
    const double mean = s1 / draws;
    double m2 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double c = (v - mean) * (v - mean);
        m2 += c;
        m4 += c * c;
    }
    m2 /= draws;
    m4 /= draws;
    const double sd = std::sqrt(m2);
    const double target_sd = 4.0 * p.expected_d2;
    const double se_mean = sd / std::sqrt(double(draws));
    // delta method on the sample variance with the empirical fourth moment
    const double se_sd = std::sqrt(std::max(m4 - m2 * m2, 0.0) / draws) / (2.0 * sd);
    const double z_mean = (mean - p.expected_d2) / se_mean, z_sd = (sd - target_sd) / se_sd;
    return {std::abs(z_mean) <= 3.0 && std::abs(z_sd) <= 3.0,
            "1e6 draws, alpha " + fmt("%.4f", p.alpha) + ": mean " + fmt("%.6g", mean) + " vs " +
                fmt("%.6g", p.expected_d2) + " (z " + fmt("%.2f", z_mean) + "), SD " + fmt("%.6g", sd) + " vs " +
                fmt("%.6g", target_sd) + " (z " + fmt("%.2f", z_sd) + ", plug-in SE)"};
}

Outcome mds_round_trip() {
    std::mt19937_64 rng(505);
    std::normal_distribution<double> n(0.0, 0.3);
    double worst_rec = 0.0, worst_enc = 0.0;
    for (int p = 2; p <= 5; ++p) {
        for (int rep = 0; rep < 10; ++rep) {
            Eigen::MatrixXd x(p, p - 1);
            for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
            const Eigen::MatrixXd d = pairwise(x);
            const auto rec = positions_from_distances(d);
            worst_rec = std::max(worst_rec, (pairwise(rec.latent_positions) - d).cwiseAbs().maxCoeff());
            const auto enc = encode_latent(x);
            worst_enc = std::max(worst_enc, (pairwise(decode_latent(enc.triangle, enc.basis)) - d).cwiseAbs().maxCoeff());
        }
    }
    return {worst_rec <= 1e-8 && worst_enc <= 1e-12, "P 2-5 x 10: recover max err " + fmt("%.2e", worst_rec) +
                                                         " (tol 1e-8), encode/decode " + fmt("%.2e", worst_enc) +
                                                         " (tol 1e-12)"};
}

Outcome generative_consistency() {
    DgpConfig d;
    d.grid_side = 8;
    d.r_train = 20;
    d.r_val = 10;
    d.r_test = 0;
    d.seed = 606;
    const auto data = simulate(d);
    PipelineConfig pc;
    pc.train.batch_size = 64;
    pc.train.max_epochs = 60;
    pc.init.subsample_size = 128;
    const auto res = fit_pipeline(data.truth.sites, 2, data.train, data.validation, pc);
    const int draws = 1000;
    const Eigen::MatrixXd s = sample(res.map, draws, 607);
    Eigen::MatrixXd z(draws, s.cols());
    for (int r = 0; r < draws; ++r) z.row(r) = forward_transform(res.map, s.row(r).transpose()).transpose();
    const double level = 0.01 / static_cast<double>(s.cols());
    double min_p = 1.0;
    int rejected = 0;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        std::vector<double> col(z.col(c).data(), z.col(c).data() + draws);
        const double pv = oracle::ks_pvalue_normal(col);
        min_p = std::min(min_p, pv);
        rejected += pv < level;
    }
    return {rejected == 0, std::to_string(s.cols()) + " components x 1e3 samples, min KS p " + fmt("%.3g", min_p) +
                               ", Bonferroni level " + fmt("%.2e", level) + ", " + std::to_string(rejected) +
                               " rejected"};
}

Outcome gaussian_sanity() {
    const auto gc = oracle::gaussian_case(6, 10);
    Eigen::LLT<Eigen::MatrixXd> llt(gc.cov);
    std::mt19937_64 rng(707);
    std::normal_distribution<double> n(0.0, 1.0);
    double worst = 0.0;
    for (int r = 0; r < 20; ++r) {
        Eigen::VectorXd z(gc.cov.rows());
        for (auto& v : z) v = n(rng);
        const Eigen::VectorXd y = llt.matrixL() * z;
        worst = std::max(worst,
                         std::abs(log_density(gc.map, y) - oracle::gaussian_logpdf(y, Eigen::VectorXd::Zero(y.size()), gc.cov)));
    }

    const auto cc = oracle::gaussian_case(4, 8, 1);
    const auto targets = cc.map.target_locations();
    std::vector<int> obs;
    for (int k = 0; k < cc.map.size(); ++k)
        if (std::find(targets.begin(), targets.end(), k) == targets.end()) obs.push_back(k);
    const auto nt = static_cast<Eigen::Index>(targets.size()), no = static_cast<Eigen::Index>(obs.size());
    Eigen::MatrixXd s_oo(no, no), s_to(nt, no), s_tt(nt, nt);
    for (Eigen::Index i = 0; i < no; ++i)
        for (Eigen::Index j = 0; j < no; ++j) s_oo(i, j) = cc.cov(obs[i], obs[j]);
    for (Eigen::Index i = 0; i < nt; ++i) {
        for (Eigen::Index j = 0; j < no; ++j) s_to(i, j) = cc.cov(targets[i], obs[j]);
        for (Eigen::Index j = 0; j < nt; ++j) s_tt(i, j) = cc.cov(targets[i], targets[j]);
    }
    Eigen::VectorXd field = Eigen::VectorXd::Zero(cc.map.size()), y_o(no);
    for (Eigen::Index j = 0; j < no; ++j) field[obs[j]] = y_o[j] = std::cos(0.7 * j);
    const Eigen::VectorXd mu = s_to * s_oo.ldlt().solve(y_o);
    const Eigen::MatrixXd cov = s_tt - s_to * s_oo.ldlt().solve(s_to.transpose());
    const int draws = 1000;
    const Eigen::MatrixXd s = conditional_sample(cc.map, field, draws, 708);
    double worst_z = 0.0;
    for (Eigen::Index i = 0; i < nt; ++i)
        worst_z = std::max(worst_z, std::abs(s.col(targets[i]).mean() - mu[i]) / std::sqrt(cov(i, i) / draws));
    return {worst <= 1e-8 && worst_z <= 3.0, "20 replicates N=" + std::to_string(gc.cov.rows()) +
                                                 ", max |log density err| " + fmt("%.2e", worst) +
                                                 " (tol 1e-8); conditional means, " + std::to_string(nt) +
                                                 " targets, max |z| " + fmt("%.2f", worst_z) + " (tol 3)"};
}

struct ComparisonOutcomes {
    std::vector<ComparisonRow> rows;
    double seconds = 0.0;
};

ComparisonOutcomes run_desk_comparison() {
    ComparisonConfig c;
    c.process_counts = {2};
    c.replicate_counts = {10, 40, 80};
    c.methods = {Method::Parametric, Method::Cpp};
    c.seeds = {1, 2, 3};
    c.dgp.grid_side = 16;
    c.dgp.r_val = 20;
    c.dgp.r_test = 20;
    c.train.batch_size = 64;
    c.conditional = true;
    const auto t0 = std::chrono::steady_clock::now();
    ComparisonOutcomes out;
    out.rows = run_comparison(c);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ofstream csv("acceptance_comparison.csv");
    write_results_csv(csv, out.rows);
    return out;
}

double score_of(const std::vector<ComparisonRow>& rows, const std::string& method, const std::string& objective, int r,
                std::uint64_t seed) {
    for (const auto& row : rows)
        if (row.method == method && row.objective == objective && row.replicates == r && row.seed == seed) {
            if (row.status != "ok") throw NumericalError(method + " fit failed: " + row.status);
            return row.mean_log_density;
        }
    throw ContractError("missing comparison row");
}

Outcome crossover(const ComparisonOutcomes& cmp) {
    std::ostringstream d;
    bool beats = true, monotone = true;
    for (std::uint64_t seed : {1, 2, 3}) {
        const double c10 = score_of(cmp.rows, "cpp", "joint", 10, seed), c40 = score_of(cmp.rows, "cpp", "joint", 40, seed),
                     c80 = score_of(cmp.rows, "cpp", "joint", 80, seed);
        const double p80 = score_of(cmp.rows, "parametric", "joint", 80, seed);
        beats &= c80 > p80;
        monotone &= c10 <= c40 && c40 <= c80;
        d << "seed " << seed << ": cpp " << fmt("%.1f", c10) << "/" << fmt("%.1f", c40) << "/" << fmt("%.1f", c80)
          << " par@80 " << fmt("%.1f", p80) << "; ";
    }
    d << "comparison wall " << fmt("%.0f", cmp.seconds) << " s (limit 900)";
    return {beats && monotone && cmp.seconds < 900.0, d.str()};
}

Outcome conditional_variant(const ComparisonOutcomes& cmp) {
    std::ostringstream d;
    int wins = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
        const double c = score_of(cmp.rows, "cpp", "conditional", 80, seed);
        const double p = score_of(cmp.rows, "parametric", "conditional", 80, seed);
        wins += c > p;
        d << "seed " << seed << ": cpp " << fmt("%.1f", c) << " par " << fmt("%.1f", p) << "; ";
    }
    d << wins << "/3 wins (need 2)";
    return {wins >= 2, d.str()};
}

int invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "mvtm");
    std::vector<char*> argv;
    for (auto& s : args) argv.push_back(s.data());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "mvtm_acceptance_det";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path config = root / "config.json";
    std::ofstream(config) << R"({"dgp": {"grid_side": 8, "r_train": 20, "r_val": 10, "r_test": 10},
 "train": {"batch_size": 32, "max_epochs": 40, "strategy": "or"}, "init": {"subsample_size": 64}})";
    const auto once = [&](const std::string& tag) {
        const fs::path d = root / tag;
        if (invoke({"simulate", "--config", config.string(), "--seed", "11", "--out", d.string()}) != 0 ||
            invoke({"fit", "--config", config.string(), "--seed", "11", "--data", d.string(), "--out",
                    (d / "model.json").string()}) != 0 ||
            invoke({"sample", "--model-file", (d / "model.json").string(), "--count", "50", "--seed", "12", "--out",
                    (d / "samples.csv").string()}) != 0 ||
            invoke({"score", "--model", "map", "--model-file", (d / "model.json").string(), "--data",
                    (d / "test.csv").string(), "--out", (d / "scores.csv").string()}) != 0)
            throw NumericalError("pipeline step failed for run " + tag);
        return d;
    };
    const fs::path a = once("a"), b = once("b");
    int files = 0, differ = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        ++files;
        if (slurp(entry.path()) != slurp(b / entry.path().filename())) ++differ;
    }
    fs::remove_all(root);
    return {differ == 0 && files >= 9,
            std::to_string(files) + " artifacts compared, " + std::to_string(differ) + " differ"};
}

}  // namespace

int main() {
    report("AC1 likelihood-oracle", likelihood_oracle, 10.0);
    report("AC2 gradient-gate", gradient_gate, 30.0);
    report("AC3 ordering-oracle", ordering_oracle, 30.0);
    report("AC4 prior-moments", prior_moments);
    report("AC5 mds-round-trip", mds_round_trip);
    report("AC6 generative-self-consistency", generative_consistency);
    report("AC7 gaussian-sanity", gaussian_sanity);
    ComparisonOutcomes cmp;
    std::string cmp_error;
    try {
        cmp = run_desk_comparison();
    } catch (const std::exception& e) {
        cmp_error = e.what();
    }
    report("AC8 desk-scale-crossover", [&] {
        if (!cmp_error.empty()) return Outcome{false, "comparison failed: " + cmp_error};
        return crossover(cmp);
    });
    report("AC9 conditional-variant", [&] {
        if (!cmp_error.empty()) return Outcome{false, "comparison failed: " + cmp_error};
        return conditional_variant(cmp);
    });
    report("AC10 determinism", determinism);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}

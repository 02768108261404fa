#include "mvtm/pipeline.hpp"

#include "mvtm/errors.hpp"

#include <cmath>

namespace mvtm {

std::vector<int> process_locations(std::span<const SpatialSite> sites, int process_id) {
    std::vector<int> out;
    for (std::size_t k = 0; k < sites.size(); ++k)
        if (sites[k].process_id == process_id) out.push_back(static_cast<int>(k));
    return out;
}

Stage1Result run_stage1(const Eigen::MatrixXd& train, std::span<const SpatialSite> sites, int num_processes,
                        const ParametricFitConfig& config) {
    Stage1Result out;
    out.parametric = fit_parametric(train, sites, num_processes, config);
    double diameter = 0.0;
    for (const auto& a : sites)
        for (const auto& b : sites) diameter = std::max(diameter, (a.coords - b.coords).norm());
    const Eigen::MatrixXd corr = corr_decode(out.parametric.params.corr_unconstrained, num_processes);
    out.positions = recover_positions(corr, out.parametric.params.range, CorrelationFamily::Matern32, diameter);
    out.encoding = encode_latent(out.positions.latent_positions);
    return out;
}

HyperParams initial_theta(const Eigen::MatrixXd& train, const Eigen::VectorXd& latent_triangle) {
    const double level = std::log(std::max(1e-8, train.array().square().mean()));
    HyperParams h;
    h.theta_q = -1.0;
    h.theta_gamma = 0.0;
    h.theta_d1 = level;
    h.theta_d2 = 0.0;
    h.theta_sigma1 = level;
    h.theta_sigma2 = 0.0;
    h.latent_triangle = latent_triangle;
    return h;
}

PipelineResult fit_pipeline(std::vector<SpatialSite> sites, int num_processes, const Eigen::MatrixXd& train,
                            const Eigen::MatrixXd& validation, const PipelineConfig& config) {
    PipelineResult out;
    if (config.latent_positions) {
        if (config.latent_positions->rows() != num_processes)
            throw InputError("latent positions must have one row per process");
        out.encoding = encode_latent(*config.latent_positions);
    } else {
        out.stage1 = run_stage1(train, sites, num_processes, config.init);
        out.encoding = out.stage1->encoding;
    }
    out.theta0 = config.theta0 ? *config.theta0 : initial_theta(train, out.encoding.triangle);
    out.theta0.latent_triangle = out.encoding.triangle;

    TrainingProblem problem;
    problem.sites = sites;
    problem.num_processes = num_processes;
    problem.train = train;
    problem.validation = validation;
    problem.latent_basis = out.encoding.basis;
    if (config.target_process > 0) {
        if (config.target_process > num_processes) throw InputError("target process out of range");
        problem.block_last = process_locations(sites, config.target_process);
        problem.constrained = true;
    }
    out.fit = fit(problem, out.theta0, config.train);
    out.map = build_map(std::move(sites), out.encoding.basis, out.fit.best, out.fit.plan, train, config.train.g);
    out.map.conditional = problem.constrained;
    out.map.target_process = config.target_process;
    return out;
}

}  // namespace mvtm

#pragma once

#include "mvtm/map.hpp"
#include "mvtm/parametric.hpp"
#include "mvtm/trainer.hpp"

#include <optional>

namespace mvtm {

/// Stage 1: separable parametric fit and the latent positions it implies.
struct Stage1Result {
    ParametricFit parametric;
    PositionRecovery positions;
    LatentEncoding encoding;
};

Stage1Result run_stage1(const Eigen::MatrixXd& train, std::span<const SpatialSite> sites, int num_processes,
                        const ParametricFitConfig& config);

/// Starting hyperparameters: fixed defaults for the prior shape plus a
/// data-scaled level for the conditional variances.
HyperParams initial_theta(const Eigen::MatrixXd& train, const Eigen::VectorXd& latent_triangle);

struct PipelineConfig {
    TrainConfig train;
    ParametricFitConfig init;
    /// 0 for a joint fit; otherwise the process placed last in the ordering.
    int target_process = 0;
    /// Bypasses stage 1 when set (P x k latent positions).
    std::optional<Eigen::MatrixXd> latent_positions;
    std::optional<HyperParams> theta0;
};

struct PipelineResult {
    std::optional<Stage1Result> stage1;
    LatentEncoding encoding;
    HyperParams theta0;
    FitResult fit;
    FittedMap map;
};

PipelineResult fit_pipeline(std::vector<SpatialSite> sites, int num_processes, const Eigen::MatrixXd& train,
                            const Eigen::MatrixXd& validation, const PipelineConfig& config);

std::vector<int> process_locations(std::span<const SpatialSite> sites, int process_id);

}  // namespace mvtm

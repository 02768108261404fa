#pragma once

#include "mvtm/geometry.hpp"
#include "mvtm/likelihood.hpp"
#include "mvtm/prior.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace mvtm {

enum class Strategy {
    Cpp,  ///< constant process positions
    Fo,   ///< latent positions updated, ordering frozen
    Or,   ///< latent positions updated, occasional re-ordering
};

Strategy parse_strategy(const std::string& name);
std::string to_string(Strategy s);

struct TrainConfig {
    int batch_size = 256;
    double initial_lr = 0.01;
    int max_epochs = 500;
    int patience = 25;
    Strategy strategy = Strategy::Cpp;
    /// Completed-epoch counts after which OR rebuilds the ordering. Empty
    /// means 4, 8, 16, ... up to max_epochs.
    std::vector<int> reorder_epochs;
    double epsilon = 0.01;
    double g = kDefaultG;
    int m_max = kMaxConditioning;
    std::uint64_t seed = 1;

    void validate() const;
    bool reorders_after(int completed_epochs) const;
};

struct AdamState {
    Eigen::VectorXd first;
    Eigen::VectorXd second;
    int steps = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One ascent step: theta += lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(Eigen::VectorXd& theta, AdamState& state, const Eigen::VectorXd& gradient, double lr);

double cosine_lr(int epoch, const TrainConfig& config);

/// Locations, data and the fixed latent basis of one training problem.
struct TrainingProblem {
    std::vector<SpatialSite> sites;
    int num_processes = 1;
    Eigen::MatrixXd train;       ///< R x N
    Eigen::MatrixXd validation;  ///< R_val x N
    Eigen::MatrixXd latent_basis;
    /// Location indices to place last (conditional fits); empty otherwise.
    std::vector<int> block_last;
    bool constrained = false;
};

struct OrderedProblem {
    OrderingPlan plan;
    std::vector<ComponentData> train;
    std::vector<ComponentData> validation;
};

OrderedProblem rebuild_ordering(const TrainingProblem& problem, const HyperParams& theta, double epsilon,
                                int m_max = kMaxConditioning);

struct TraceRow {
    int epoch = 0;
    double train_obj = 0.0;
    double val_obj = 0.0;
    double lr = 0.0;
    bool reordered = false;
    int patience_counter = 0;
};

struct FitResult {
    HyperParams best;
    double best_loglik = 0.0;
    OrderingPlan plan;  ///< ordering current when `best` was stored
    std::vector<TraceRow> trace;
};

FitResult fit(const TrainingProblem& problem, const HyperParams& theta0, const TrainConfig& config);

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

}  // namespace mvtm

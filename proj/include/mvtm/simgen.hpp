#pragma once

#include "mvtm/geometry.hpp"
#include "mvtm/parametric.hpp"
#include "mvtm/trainer.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace mvtm {

enum class WeightMode {
    Kriging,  ///< exponential-covariance kriging weights and conditional SDs
    Kernel,   ///< raw exponential-kernel values, d_i = min(1, sqrt(l_i))
};

WeightMode parse_weight_mode(const std::string& name);
std::string to_string(WeightMode mode);

/// Latent process positions used by the simulation study (rows 1..5; 3-d).
Eigen::MatrixXd default_latent_positions(int num_processes);

struct DgpConfig {
    int num_processes = 2;
    int grid_side = 32;
    int r_train = 20;
    int r_val = 20;
    int r_test = 20;
    Eigen::MatrixXd latent_positions;  ///< empty: default_latent_positions(P)
    double weight_range = 0.3;
    WeightMode weight_mode = WeightMode::Kriging;
    double nonlinearity = 2.0;  ///< amplitude of the sine term; 0 gives a Gaussian field
    int m = 10;
    std::uint64_t seed = 1;

    void validate() const;
    Eigen::MatrixXd resolved_latent() const;
};

/// Regular side x side grid on the unit square, repeated for every process;
/// location index = (p - 1) * side^2 + row * side + col.
std::vector<SpatialSite> grid_sites(int side, int num_processes);

struct DgpWeights {
    std::vector<Eigen::VectorXd> weights;  ///< per ordered position, over c(i)
    std::vector<double> sd;                ///< conditional standard deviations d_i
};

DgpWeights dgp_weights(std::span<const AugmentedLocation> points, const OrderingPlan& plan, double range,
                       WeightMode mode = WeightMode::Kriging);

/// Everything needed to regenerate or score the synthetic field exactly.
struct DgpTruth {
    std::vector<SpatialSite> sites;
    Eigen::MatrixXd latent_positions;
    OrderingPlan plan;
    DgpWeights weights;
    double nonlinearity = 2.0;
};

DgpTruth build_truth(const DgpConfig& config);

/// Conditional mean of ordered component n given the field built so far.
double dgp_mean(const DgpTruth& truth, int n, const Eigen::Ref<const Eigen::VectorXd>& field);

/// Runs the recursion on standard-normal innovations `z` (per ordered
/// position); returns the field indexed by location index.
Eigen::VectorXd simulate_field(const DgpTruth& truth, const Eigen::Ref<const Eigen::VectorXd>& z);

/// Exact joint log density of a field under the generating process.
double truth_log_density(const DgpTruth& truth, const Eigen::Ref<const Eigen::VectorXd>& field,
                         int target_process = 0);

struct SimulatedData {
    DgpTruth truth;
    Eigen::MatrixXd train;
    Eigen::MatrixXd validation;
    Eigen::MatrixXd test;
};

SimulatedData simulate(const DgpConfig& config);

enum class Method { Parametric, Cpp, Fo, Or };
Method parse_method(const std::string& name);
std::string to_string(Method m);

struct ComparisonConfig {
    std::vector<int> process_counts{2};
    std::vector<int> replicate_counts{10, 40, 80};
    std::vector<Method> methods{Method::Parametric, Method::Cpp, Method::Fo, Method::Or};
    std::vector<std::uint64_t> seeds{1};
    DgpConfig dgp;
    TrainConfig train;
    ParametricFitConfig init;
    bool conditional = true;
};

struct ComparisonRow {
    int num_processes = 0;
    int replicates = 0;
    std::string method;
    std::string objective;  ///< "joint" or "conditional"
    double mean_log_density = 0.0;
    double sd_log_density = 0.0;
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
    std::string status = "ok";
};

std::vector<ComparisonRow> run_comparison(const ComparisonConfig& config);

void write_results_csv(std::ostream& out, const std::vector<ComparisonRow>& rows);

}  // namespace mvtm

#pragma once

#include "mvtm/io.hpp"
#include "mvtm/parametric.hpp"
#include "mvtm/simgen.hpp"
#include "mvtm/trainer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mvtm::cli {

/// Everything a run needs; every field has a default and unknown keys in
/// the JSON document are rejected.
struct RunConfig {
    std::uint64_t seed = 1;
    DgpConfig dgp;
    TrainConfig train;
    ParametricFitConfig init;
    std::vector<int> compare_processes{2};
    std::vector<int> compare_replicates{10, 40, 80};
    std::vector<std::string> compare_methods{"parametric", "cpp", "fo", "or"};
    std::vector<std::uint64_t> compare_seeds{1};
    bool compare_conditional = true;
    std::string data_dir;
    std::string model_path;
    std::string out_path;
};

RunConfig parse_run_config(const Json& j);
RunConfig load_run_config(const std::string& path);
Json run_config_to_json(const RunConfig& config);
std::uint64_t config_hash(const RunConfig& config);

Json dgp_to_json(const DgpConfig& dgp);
DgpConfig dgp_from_json(const Json& j);

int run(int argc, char** argv);

}  // namespace mvtm::cli

#pragma once

#include "mvtm/geometry.hpp"
#include "mvtm/map.hpp"
#include "mvtm/parametric.hpp"
#include "mvtm/prior.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace mvtm {

using Json = nlohmann::ordered_json;

/// locations.csv: component_id, process_id, s1, s2, ...
void write_locations_csv(std::ostream& out, std::span<const SpatialSite> sites);
std::vector<SpatialSite> read_locations_csv(const std::filesystem::path& path);

/// Replicate files: header of component ids 1..N, one row per replicate.
void write_fields_csv(std::ostream& out, const Eigen::MatrixXd& fields);
Eigen::MatrixXd read_fields_csv(const std::filesystem::path& path, int expected_components);

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, bool has_header);

std::uint64_t fnv1a(std::string_view bytes);

Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j);
Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j);

Json theta_to_json(const HyperParams& theta);
HyperParams theta_from_json(const Json& j);

Json parametric_to_json(const ParametricParams& params);
ParametricParams parametric_from_json(const Json& j);

struct MapProvenance {
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    std::string strategy;
};

struct ModelFile {
    FittedMap map;
    std::optional<ParametricParams> parametric;
    MapProvenance provenance;
};

Json model_to_json(const ModelFile& model);
ModelFile model_from_json(const Json& j);

void write_json_file(const std::filesystem::path& path, const Json& j);
Json read_json_file(const std::filesystem::path& path);

}  // namespace mvtm

#include "mvtm/io.hpp"

#include "mvtm/errors.hpp"
#include "mvtm/format.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mvtm {

namespace {

constexpr int kModelFormatVersion = 1;

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        std::size_t start = 0;
        while (start < cell.size() && cell[start] == ' ') ++start;
        out.push_back(cell.substr(start));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& text, const std::filesystem::path& path, int line) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    if (!text.empty() && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) {
        if (text == "nan" || text == "NaN") return std::numeric_limits<double>::quiet_NaN();
        throw SchemaError(path.string() + ":" + std::to_string(line) + ": not a number: '" + text + "'");
    }
    return v;
}

int parse_int(const std::string& text, const std::filesystem::path& path, int line) {
    int v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw SchemaError(path.string() + ":" + std::to_string(line) + ": not an integer: '" + text + "'");
    return v;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    return in;
}

template <class T>
T get_field(const Json& j, const char* key) {
    if (!j.contains(key)) throw SchemaError(std::string("model file is missing '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("model field '") + key + "': " + e.what());
    }
}

Json plan_to_json(const OrderingPlan& plan) {
    Json j;
    std::vector<int> ids;
    for (int idx : plan.permutation) ids.push_back(idx + 1);
    j["permutation"] = ids;
    j["conditioning_sets"] = plan.conditioning;
    j["nearest_prev_distance"] = plan.nearest_prev_distance;
    j["block_start"] = plan.block_start;
    j["max_conditioning"] = plan.max_conditioning;
    return j;
}

OrderingPlan plan_from_json(const Json& j) {
    OrderingPlan plan;
    for (int id : get_field<std::vector<int>>(j, "permutation")) plan.permutation.push_back(id - 1);
    plan.conditioning = get_field<std::vector<std::vector<int>>>(j, "conditioning_sets");
    plan.nearest_prev_distance = get_field<std::vector<double>>(j, "nearest_prev_distance");
    plan.block_start = get_field<int>(j, "block_start");
    plan.max_conditioning = get_field<int>(j, "max_conditioning");
    const auto n = plan.permutation.size();
    if (plan.conditioning.size() != n || plan.nearest_prev_distance.size() != n)
        throw SchemaError("ordering arrays have inconsistent lengths");
    std::vector<char> seen(n, 0);
    for (int idx : plan.permutation) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= n || seen[idx]) throw SchemaError("permutation is not a bijection");
        seen[idx] = 1;
    }
    for (std::size_t k = 0; k < n; ++k)
        for (int c : plan.conditioning[k])
            if (c < 0 || static_cast<std::size_t>(c) >= k) throw SchemaError("conditioning set refers to a later position");
    return plan;
}

Json lower_triangle(const Eigen::MatrixXd& l) {
    std::vector<double> packed;
    for (Eigen::Index i = 0; i < l.rows(); ++i)
        for (Eigen::Index k = 0; k <= i; ++k) packed.push_back(l(i, k));
    return packed;
}

Eigen::MatrixXd from_lower_triangle(const Json& j, Eigen::Index rows) {
    const auto packed = j.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(packed.size()) != rows * (rows + 1) / 2)
        throw SchemaError("gram factor has the wrong number of entries");
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(rows, rows);
    std::size_t t = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index k = 0; k <= i; ++k) l(i, k) = packed[t++];
    return l;
}

Json component_to_json(const MapComponent& c) {
    Json j;
    if (c.kind == ComponentKind::Pinned) {
        j["kind"] = "pinned";
        j["weights"] = vector_to_json(c.pinned_weights);
        j["variance"] = c.pinned_variance;
        return j;
    }
    j["kind"] = "gp";
    j["alpha"] = c.prior.alpha;
    j["beta"] = c.prior.beta;
    j["sigma2"] = c.prior.sigma2;
    j["expected_d2"] = c.prior.expected_d2;
    j["gamma"] = c.prior.gamma;
    j["q_diag"] = vector_to_json(c.prior.q_diag);
    j["alpha_tilde"] = c.alpha_tilde;
    j["beta_tilde"] = c.beta_tilde;
    j["weights"] = vector_to_json(c.weights);
    j["gram_lower"] = lower_triangle(c.gram_factor);
    j["train_neighbors"] = matrix_to_json(c.train_neighbors);
    return j;
}

MapComponent component_from_json(const Json& j) {
    MapComponent c;
    const auto kind = get_field<std::string>(j, "kind");
    if (kind == "pinned") {
        c.kind = ComponentKind::Pinned;
        c.pinned_weights = vector_from_json(j.at("weights"));
        c.pinned_variance = get_field<double>(j, "variance");
        return c;
    }
    if (kind != "gp") throw SchemaError("unknown component kind '" + kind + "'");
    c.prior.alpha = get_field<double>(j, "alpha");
    c.prior.beta = get_field<double>(j, "beta");
    c.prior.sigma2 = get_field<double>(j, "sigma2");
    c.prior.expected_d2 = get_field<double>(j, "expected_d2");
    c.prior.gamma = get_field<double>(j, "gamma");
    c.prior.q_diag = vector_from_json(j.at("q_diag"));
    c.alpha_tilde = get_field<double>(j, "alpha_tilde");
    c.beta_tilde = get_field<double>(j, "beta_tilde");
    c.weights = vector_from_json(j.at("weights"));
    c.train_neighbors = matrix_from_json(j.at("train_neighbors"));
    c.gram_factor = from_lower_triangle(j.at("gram_lower"), c.weights.size());
    if (c.train_neighbors.rows() != c.weights.size() && c.train_neighbors.cols() > 0)
        throw SchemaError("component training rows do not match its weights");
    return c;
}

Json sites_to_json(std::span<const SpatialSite> sites) {
    Json arr = Json::array();
    for (const auto& s : sites) {
        Json e;
        e["process_id"] = s.process_id;
        e["coords"] = vector_to_json(s.coords);
        arr.push_back(e);
    }
    return arr;
}

std::vector<SpatialSite> sites_from_json(const Json& j) {
    std::vector<SpatialSite> out;
    for (const auto& e : j) {
        SpatialSite s;
        s.process_id = get_field<int>(e, "process_id");
        s.coords = vector_from_json(e.at("coords"));
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

void write_locations_csv(std::ostream& out, std::span<const SpatialSite> sites) {
    const Eigen::Index dim = sites.empty() ? 2 : sites[0].coords.size();
    out << "component_id,process_id";
    for (Eigen::Index d = 0; d < dim; ++d) out << ",s" << (d + 1);
    out << '\n';
    for (std::size_t k = 0; k < sites.size(); ++k) {
        out << (k + 1) << ',' << sites[k].process_id;
        for (Eigen::Index d = 0; d < dim; ++d) out << ',' << format_double(sites[k].coords[d]);
        out << '\n';
    }
}

std::vector<SpatialSite> read_locations_csv(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path.string() + ": empty file");
    const auto header = split(line);
    if (header.size() < 3 || header[0] != "component_id" || header[1] != "process_id")
        throw SchemaError(path.string() + ": header must start with component_id,process_id and list coordinates");
    const std::size_t dim = header.size() - 2;
    std::vector<SpatialSite> sites;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(header.size()) + " columns");
        const int id = parse_int(cells[0], path, lineno);
        if (id != static_cast<int>(sites.size()) + 1)
            throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": component ids must run 1..N in order");
        SpatialSite s;
        s.process_id = parse_int(cells[1], path, lineno);
        if (s.process_id < 1) throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": process ids start at 1");
        s.coords.resize(static_cast<Eigen::Index>(dim));
        for (std::size_t d = 0; d < dim; ++d) s.coords[static_cast<Eigen::Index>(d)] = parse_double(cells[d + 2], path, lineno);
        if (!s.coords.allFinite()) throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": non-finite coordinate");
        sites.push_back(std::move(s));
    }
    if (sites.empty()) throw SchemaError(path.string() + ": no locations");
    return sites;
}

void write_fields_csv(std::ostream& out, const Eigen::MatrixXd& fields) {
    for (Eigen::Index c = 0; c < fields.cols(); ++c) out << (c ? "," : "") << (c + 1);
    out << '\n';
    for (Eigen::Index r = 0; r < fields.rows(); ++r) {
        for (Eigen::Index c = 0; c < fields.cols(); ++c) out << (c ? "," : "") << format_double(fields(r, c));
        out << '\n';
    }
}

Eigen::MatrixXd read_fields_csv(const std::filesystem::path& path, int expected_components) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path.string() + ": empty file");
    const auto header = split(line);
    if (static_cast<int>(header.size()) != expected_components)
        throw SchemaError(path.string() + ": " + std::to_string(header.size()) + " columns but " +
                          std::to_string(expected_components) + " components");
    for (std::size_t c = 0; c < header.size(); ++c)
        if (parse_int(header[c], path, 1) != static_cast<int>(c) + 1)
            throw SchemaError(path.string() + ": header must list component ids 1..N in order");
    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(header.size()) + " values");
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& cell : cells) row.push_back(parse_double(cell, path, lineno));
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), expected_components);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (int c = 0; c < expected_components; ++c) out(static_cast<Eigen::Index>(r), c) = rows[r][c];
    return out;
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, bool has_header) {
    auto in = open_input(path);
    std::string line;
    int lineno = 0;
    if (has_header && std::getline(in, line)) ++lineno;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::vector<double> row;
        for (const auto& cell : split(line)) row.push_back(parse_double(cell, path, lineno));
        if (!rows.empty() && row.size() != rows[0].size())
            throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) return {};
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    return h;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    Json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = std::move(rows);
    return j;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
    const auto rows = get_field<Eigen::Index>(j, "rows");
    const auto cols = get_field<Eigen::Index>(j, "cols");
    const auto data = get_field<std::vector<std::vector<double>>>(j, "data");
    if (static_cast<Eigen::Index>(data.size()) != rows) throw SchemaError("matrix row count mismatch");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(data[r].size()) != cols) throw SchemaError("matrix column count mismatch");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[r][c];
    }
    return m;
}

Json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const Json& j) {
    std::vector<double> v;
    try {
        v = j.get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("expected a numeric array: ") + e.what());
    }
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json theta_to_json(const HyperParams& theta) {
    Json j;
    j["theta_q"] = theta.theta_q;
    j["theta_gamma"] = theta.theta_gamma;
    j["theta_d1"] = theta.theta_d1;
    j["theta_d2"] = theta.theta_d2;
    j["theta_sigma1"] = theta.theta_sigma1;
    j["theta_sigma2"] = theta.theta_sigma2;
    j["latent_triangle"] = vector_to_json(theta.latent_triangle);
    return j;
}

HyperParams theta_from_json(const Json& j) {
    HyperParams t;
    t.theta_q = get_field<double>(j, "theta_q");
    t.theta_gamma = get_field<double>(j, "theta_gamma");
    t.theta_d1 = get_field<double>(j, "theta_d1");
    t.theta_d2 = get_field<double>(j, "theta_d2");
    t.theta_sigma1 = get_field<double>(j, "theta_sigma1");
    t.theta_sigma2 = get_field<double>(j, "theta_sigma2");
    t.latent_triangle = vector_from_json(j.at("latent_triangle"));
    return t;
}

Json parametric_to_json(const ParametricParams& params) {
    Json j;
    j["tau2"] = params.tau2;
    j["sigma2"] = params.sigma2;
    j["range"] = params.range;
    j["corr_unconstrained"] = vector_to_json(params.corr_unconstrained);
    return j;
}

ParametricParams parametric_from_json(const Json& j) {
    ParametricParams p;
    p.tau2 = get_field<double>(j, "tau2");
    p.sigma2 = get_field<double>(j, "sigma2");
    p.range = get_field<double>(j, "range");
    p.corr_unconstrained = vector_from_json(j.at("corr_unconstrained"));
    return p;
}

Json model_to_json(const ModelFile& model) {
    const auto& map = model.map;
    Json j;
    j["format_version"] = kModelFormatVersion;
    j["num_processes"] = map.num_processes;
    j["g"] = map.g;
    j["theta"] = theta_to_json(map.theta);
    j["latent_positions"] = matrix_to_json(map.latent_positions);
    j["latent_basis"] = matrix_to_json(map.latent_basis);
    j["conditional"] = map.conditional;
    j["target_process"] = map.target_process;
    j["sites"] = sites_to_json(map.sites);
    j["ordering"] = plan_to_json(map.plan);
    Json comps = Json::array();
    for (const auto& c : map.components) comps.push_back(component_to_json(c));
    j["components"] = std::move(comps);
    if (model.parametric) j["parametric"] = parametric_to_json(*model.parametric);
    Json prov;
    prov["seed"] = model.provenance.seed;
    prov["config_hash"] = model.provenance.config_hash;
    prov["strategy"] = model.provenance.strategy;
    prov["scoring"] = "posterior-predictive";
    prov["mds_convention"] = "E_ij = (d_1j^2 + d_i1^2 - d_ij^2) / 2";
    j["provenance"] = std::move(prov);
    return j;
}

ModelFile model_from_json(const Json& j) {
    if (!j.is_object()) throw SchemaError("model file must be a JSON object");
    if (get_field<int>(j, "format_version") != kModelFormatVersion) throw SchemaError("unsupported model format version");
    ModelFile model;
    auto& map = model.map;
    map.num_processes = get_field<int>(j, "num_processes");
    map.g = get_field<double>(j, "g");
    map.theta = theta_from_json(j.at("theta"));
    map.latent_positions = matrix_from_json(j.at("latent_positions"));
    map.latent_basis = matrix_from_json(j.at("latent_basis"));
    map.conditional = get_field<bool>(j, "conditional");
    map.target_process = get_field<int>(j, "target_process");
    map.sites = sites_from_json(j.at("sites"));
    map.plan = plan_from_json(j.at("ordering"));
    for (const auto& c : j.at("components")) map.components.push_back(component_from_json(c));
    if (map.components.size() != map.plan.permutation.size() || map.sites.size() != map.components.size())
        throw SchemaError("model has inconsistent component counts");
    for (std::size_t n = 0; n < map.components.size(); ++n) {
        const auto& c = map.components[n];
        const auto m = static_cast<Eigen::Index>(map.plan.conditioning[n].size());
        const Eigen::Index width = c.kind == ComponentKind::Pinned ? c.pinned_weights.size() : c.train_neighbors.cols();
        if (width != m) throw SchemaError("component " + std::to_string(n) + " does not match its conditioning set");
    }
    if (j.contains("parametric")) model.parametric = parametric_from_json(j.at("parametric"));
    if (j.contains("provenance")) {
        const auto& p = j.at("provenance");
        model.provenance.seed = p.value("seed", std::uint64_t{0});
        model.provenance.config_hash = p.value("config_hash", std::uint64_t{0});
        model.provenance.strategy = p.value("strategy", std::string());
    }
    return model;
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(1) << '\n';
    if (!out) throw InputError("failed writing " + path.string());
}

Json read_json_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

}  // namespace mvtm

#include "commands.hpp"

#include "mvtm/errors.hpp"
#include "mvtm/format.hpp"
#include "mvtm/map.hpp"
#include "mvtm/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

namespace mvtm::cli {

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw SchemaError(where + " must be a JSON object");
    const std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw SchemaError("unknown key '" + key + "' in " + where);
}

template <class T>
void read_opt(const Json& j, const char* key, T& target, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        target = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(where + "." + key + ": " + e.what());
    }
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    return out;
}

int count_processes(std::span<const SpatialSite> sites) {
    int p = 0;
    for (const auto& s : sites) p = std::max(p, s.process_id);
    for (int k = 1; k <= p; ++k)
        if (process_locations(sites, k).empty()) throw SchemaError("process " + std::to_string(k) + " has no locations");
    return p;
}

Eigen::MatrixXd read_latent_positions(const fs::path& path) {
    if (path.extension() == ".json") {
        const auto j = read_json_file(path);
        if (!j.contains("latent_positions")) throw SchemaError(path.string() + ": no latent_positions entry");
        return matrix_from_json(j.at("latent_positions"));
    }
    return read_matrix_csv(path, false);
}

void write_scores(const fs::path& path, const std::vector<double>& scores) {
    auto out = open_output(path);
    out << "replicate,log_density\n";
    double mean = 0.0;
    for (std::size_t r = 0; r < scores.size(); ++r) {
        out << (r + 1) << ',' << format_double(scores[r]) << '\n';
        mean += scores[r];
    }
    if (!scores.empty()) mean /= static_cast<double>(scores.size());
    out << "mean," << format_double(mean) << '\n';
    std::cout << format_double(mean) << '\n';
}

void apply_seed(RunConfig& config, std::uint64_t seed) {
    config.seed = seed;
    config.dgp.seed = seed;
    config.train.seed = seed;
    config.init.seed = seed;
}

// ---- subcommands --------------------------------------------------------

void command_simulate(const RunConfig& config, const fs::path& out_dir) {
    const auto data = simulate(config.dgp);
    fs::create_directories(out_dir);
    {
        auto out = open_output(out_dir / "locations.csv");
        write_locations_csv(out, data.truth.sites);
    }
    const std::pair<const char*, const Eigen::MatrixXd*> sets[] = {
        {"train.csv", &data.train}, {"val.csv", &data.validation}, {"test.csv", &data.test}};
    for (const auto& [name, m] : sets) {
        auto out = open_output(out_dir / name);
        write_fields_csv(out, *m);
    }
    Json meta;
    meta["seed"] = config.dgp.seed;
    meta["dgp"] = dgp_to_json(config.dgp);
    meta["true_latent_positions"] = matrix_to_json(data.truth.latent_positions);
    meta["decisions"] = {
        {"weights", config.dgp.weight_mode == WeightMode::Kriging
                        ? "exponential-covariance kriging weights over c(i); d_i^2 = kriging conditional variance"
                        : "direct exponential-kernel values exp(-dist/range); d_i = min(1, sqrt(l_i))"},
        {"conditioning", "m_dgp nearest previously ordered points in the augmented space, maxmin ordering"},
        {"nonlinearity", "f_i = b^T y_c + a sin(4 (b_1 y_c1 + b_2 y_c2)); missing terms are zero"},
        {"d_1", "1"}};
    write_json_file(out_dir / "meta.json", meta);
}

struct FitFlags {
    std::string data_dir;
    std::string out;
    std::string trace;
    int conditional = 0;
    bool skip_stage1 = false;
    bool stage1_only = false;
    std::string latent_positions;
};

void command_fit(const RunConfig& config, const FitFlags& flags) {
    const fs::path dir = flags.data_dir;
    auto sites = read_locations_csv(dir / "locations.csv");
    const int num_processes = count_processes(sites);
    const int n = static_cast<int>(sites.size());
    const Eigen::MatrixXd train = read_fields_csv(dir / "train.csv", n);
    if (train.rows() < 1) throw SchemaError((dir / "train.csv").string() + ": no replicates");

    if (flags.stage1_only) {
        const auto s1 = run_stage1(train, sites, num_processes, config.init);
        Json j;
        j["parametric"] = parametric_to_json(s1.parametric.params);
        j["parametric_loglik"] = s1.parametric.loglik;
        j["converged"] = s1.parametric.converged;
        j["iterations"] = s1.parametric.iterations;
        j["correlation"] = matrix_to_json(corr_decode(s1.parametric.params.corr_unconstrained, num_processes));
        j["distances"] = matrix_to_json(s1.positions.distances);
        j["latent_positions"] = matrix_to_json(s1.positions.latent_positions);
        std::vector<std::string> warnings = s1.parametric.warnings;
        warnings.insert(warnings.end(), s1.positions.warnings.begin(), s1.positions.warnings.end());
        j["warnings"] = warnings;
        write_json_file(flags.out, j);
        return;
    }

    const Eigen::MatrixXd validation = read_fields_csv(dir / "val.csv", n);
    if (validation.rows() < 1) throw SchemaError((dir / "val.csv").string() + ": no replicates");
    PipelineConfig pc;
    pc.train = config.train;
    pc.init = config.init;
    pc.target_process = flags.conditional;
    if (flags.skip_stage1) pc.latent_positions = read_latent_positions(flags.latent_positions);

    const auto result = fit_pipeline(std::move(sites), num_processes, train, validation, pc);
    ModelFile model;
    model.map = result.map;
    if (result.stage1) model.parametric = result.stage1->parametric.params;
    model.provenance.seed = config.seed;
    model.provenance.config_hash = config_hash(config);
    model.provenance.strategy = to_string(config.train.strategy);
    write_json_file(flags.out, model_to_json(model));

    fs::path trace = flags.trace;
    if (trace.empty()) trace = fs::path(flags.out).replace_extension(".trace.csv");
    auto out = open_output(trace);
    write_trace_csv(out, result.fit.trace);
}

ModelFile load_model(const fs::path& path) { return model_from_json(read_json_file(path)); }

void command_sample(const fs::path& model_path, int count, std::uint64_t seed, const std::string& observed,
                    int observed_row, const fs::path& out_path) {
    if (count < 0) throw UsageError("sample count must be non-negative");
    const auto model = load_model(model_path);
    const auto& map = model.map;
    auto out = open_output(out_path);
    if (observed.empty()) {
        write_fields_csv(out, sample(map, count, seed));
        return;
    }
    if (!map.conditional) throw UsageError("--observed needs a model fitted with --conditional");
    const Eigen::MatrixXd obs = read_fields_csv(observed, map.size());
    if (observed_row < 1 || observed_row > obs.rows())
        throw UsageError("--observed-row " + std::to_string(observed_row) + " is outside the observed file");
    const Eigen::VectorXd field = obs.row(observed_row - 1).transpose();
    const auto block = map.target_locations();
    const Eigen::MatrixXd draws = conditional_sample(map, field, count, seed);
    for (std::size_t c = 0; c < block.size(); ++c) out << (c ? "," : "") << (block[c] + 1);
    out << '\n';
    for (Eigen::Index r = 0; r < draws.rows(); ++r) {
        for (Eigen::Index c = 0; c < draws.cols(); ++c) out << (c ? "," : "") << format_double(draws(r, c));
        out << '\n';
    }
}

void command_score(const std::string& kind, const fs::path& model_path, const fs::path& data_path, int conditional,
                   const fs::path& out_path) {
    std::vector<double> scores;
    if (kind == "truth") {
        const auto meta = read_json_file(model_path);
        if (!meta.contains("dgp")) throw SchemaError(model_path.string() + ": not a simulation meta file");
        if (conditional > 0) throw UsageError("truth scoring supports joint densities only");
        const auto truth = build_truth(dgp_from_json(meta.at("dgp")));
        const Eigen::MatrixXd data = read_fields_csv(data_path, truth.plan.size());
        for (Eigen::Index r = 0; r < data.rows(); ++r)
            scores.push_back(truth_log_density(truth, data.row(r).transpose()));
    } else {
        const auto model = load_model(model_path);
        const auto& map = model.map;
        const Eigen::MatrixXd data = read_fields_csv(data_path, map.size());
        if (kind == "map") {
            if (conditional > 0) {
                if (!map.conditional || map.target_process != conditional)
                    throw UsageError("model was not fitted for conditional target " + std::to_string(conditional));
                for (Eigen::Index r = 0; r < data.rows(); ++r)
                    scores.push_back(conditional_log_density(map, data.row(r).transpose()));
            } else {
                for (Eigen::Index r = 0; r < data.rows(); ++r) scores.push_back(log_density(map, data.row(r).transpose()));
            }
        } else if (kind == "parametric") {
            if (!model.parametric) throw SchemaError(model_path.string() + ": model has no parametric baseline");
            const GaussianScorer scorer(*model.parametric, map.sites, conditional);
            for (Eigen::Index r = 0; r < data.rows(); ++r)
                scores.push_back(conditional > 0 ? scorer.conditional_log_density(data.row(r).transpose())
                                                 : scorer.log_density(data.row(r).transpose()));
        } else {
            throw UsageError("unknown model kind '" + kind + "'");
        }
    }
    write_scores(out_path, scores);
}

void command_preprocess(const fs::path& in_path, const std::string& reference, const fs::path& out_path,
                        const std::string& stats_path) {
    const Eigen::MatrixXd header_probe = read_matrix_csv(in_path, true);
    const int n = static_cast<int>(header_probe.cols());
    const Eigen::MatrixXd data = read_fields_csv(in_path, n);
    const Eigen::MatrixXd ref = reference.empty() ? data : read_fields_csv(reference, n);
    if (ref.rows() < 2) throw SchemaError("pixel-wise standardization needs at least two replicates");
    const Eigen::RowVectorXd mean = ref.colwise().mean();
    const Eigen::RowVectorXd sd =
        ((ref.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(ref.rows() - 1)).sqrt();
    for (int c = 0; c < n; ++c)
        if (!(sd[c] > 0.0)) throw NumericalError("component " + std::to_string(c + 1) + " has zero variance");
    const Eigen::MatrixXd z = (data.rowwise() - mean).array().rowwise() / sd.array();
    {
        auto out = open_output(out_path);
        write_fields_csv(out, z);
    }
    if (!stats_path.empty()) {
        Eigen::MatrixXd stats(2, n);
        stats.row(0) = mean;
        stats.row(1) = sd;
        auto out = open_output(stats_path);
        write_fields_csv(out, stats);
    }
}

void command_compare(const RunConfig& config, const fs::path& out_path) {
    ComparisonConfig cc;
    cc.process_counts = config.compare_processes;
    cc.replicate_counts = config.compare_replicates;
    cc.methods.clear();
    for (const auto& m : config.compare_methods) cc.methods.push_back(parse_method(m));
    cc.seeds = config.compare_seeds;
    cc.dgp = config.dgp;
    cc.train = config.train;
    cc.init = config.init;
    cc.conditional = config.compare_conditional;
    const auto rows = run_comparison(cc);
    auto out = open_output(out_path);
    write_results_csv(out, rows);
}

}  // namespace

Json dgp_to_json(const DgpConfig& dgp) {
    Json j;
    j["num_processes"] = dgp.num_processes;
    j["grid_side"] = dgp.grid_side;
    j["r_train"] = dgp.r_train;
    j["r_val"] = dgp.r_val;
    j["r_test"] = dgp.r_test;
    const Eigen::MatrixXd latent = dgp.resolved_latent();
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(latent.rows()));
    for (Eigen::Index r = 0; r < latent.rows(); ++r)
        for (Eigen::Index c = 0; c < latent.cols(); ++c) rows[r].push_back(latent(r, c));
    j["latent_positions"] = rows;
    j["weight_range"] = dgp.weight_range;
    j["weight_mode"] = to_string(dgp.weight_mode);
    j["nonlinearity"] = dgp.nonlinearity;
    j["m"] = dgp.m;
    j["seed"] = dgp.seed;
    return j;
}

DgpConfig dgp_from_json(const Json& j) {
    const std::string where = "dgp";
    reject_unknown(j, {"num_processes", "grid_side", "r_train", "r_val", "r_test", "latent_positions", "weight_range",
                       "weight_mode", "nonlinearity", "m", "seed"},
                   where);
    DgpConfig d;
    read_opt(j, "num_processes", d.num_processes, where);
    read_opt(j, "grid_side", d.grid_side, where);
    read_opt(j, "r_train", d.r_train, where);
    read_opt(j, "r_val", d.r_val, where);
    read_opt(j, "r_test", d.r_test, where);
    if (j.contains("latent_positions") && !j.at("latent_positions").is_null()) {
        std::vector<std::vector<double>> rows;
        read_opt(j, "latent_positions", rows, where);
        if (!rows.empty()) {
            const std::size_t k = rows[0].size();
            d.latent_positions.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(k));
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (rows[r].size() != k) throw SchemaError("dgp.latent_positions rows differ in length");
                for (std::size_t c = 0; c < k; ++c)
                    d.latent_positions(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
            }
        }
    }
    read_opt(j, "weight_range", d.weight_range, where);
    std::string mode = to_string(d.weight_mode);
    read_opt(j, "weight_mode", mode, where);
    d.weight_mode = parse_weight_mode(mode);
    read_opt(j, "nonlinearity", d.nonlinearity, where);
    read_opt(j, "m", d.m, where);
    read_opt(j, "seed", d.seed, where);
    d.validate();
    return d;
}

RunConfig parse_run_config(const Json& j) {
    RunConfig c;
    reject_unknown(j, {"seed", "dgp", "train", "init", "compare", "paths"}, "config");
    read_opt(j, "seed", c.seed, "config");
    if (j.contains("dgp")) c.dgp = dgp_from_json(j.at("dgp"));
    if (j.contains("train")) {
        const auto& t = j.at("train");
        const std::string w = "train";
        reject_unknown(t, {"batch_size", "initial_lr", "max_epochs", "patience", "strategy", "reorder_epochs", "epsilon",
                           "g", "m_max"},
                       w);
        read_opt(t, "batch_size", c.train.batch_size, w);
        read_opt(t, "initial_lr", c.train.initial_lr, w);
        read_opt(t, "max_epochs", c.train.max_epochs, w);
        read_opt(t, "patience", c.train.patience, w);
        std::string strategy = to_string(c.train.strategy);
        read_opt(t, "strategy", strategy, w);
        c.train.strategy = parse_strategy(strategy);
        read_opt(t, "reorder_epochs", c.train.reorder_epochs, w);
        read_opt(t, "epsilon", c.train.epsilon, w);
        read_opt(t, "g", c.train.g, w);
        read_opt(t, "m_max", c.train.m_max, w);
    }
    if (j.contains("init")) {
        const auto& i = j.at("init");
        reject_unknown(i, {"subsample_size", "max_iterations"}, "init");
        read_opt(i, "subsample_size", c.init.subsample_size, "init");
        read_opt(i, "max_iterations", c.init.max_iterations, "init");
    }
    if (j.contains("compare")) {
        const auto& k = j.at("compare");
        const std::string w = "compare";
        reject_unknown(k, {"process_counts", "replicate_counts", "methods", "seeds", "conditional"}, w);
        read_opt(k, "process_counts", c.compare_processes, w);
        read_opt(k, "replicate_counts", c.compare_replicates, w);
        read_opt(k, "methods", c.compare_methods, w);
        read_opt(k, "seeds", c.compare_seeds, w);
        read_opt(k, "conditional", c.compare_conditional, w);
        for (const auto& m : c.compare_methods) parse_method(m);
    }
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        reject_unknown(p, {"data_dir", "model", "out"}, "paths");
        read_opt(p, "data_dir", c.data_dir, "paths");
        read_opt(p, "model", c.model_path, "paths");
        read_opt(p, "out", c.out_path, "paths");
    }
    const bool dgp_seed_given = j.contains("dgp") && j.at("dgp").contains("seed");
    const std::uint64_t dgp_seed = c.dgp.seed;
    apply_seed(c, c.seed);
    if (dgp_seed_given) c.dgp.seed = dgp_seed;
    c.train.validate();
    return c;
}

RunConfig load_run_config(const std::string& path) {
    if (path.empty()) {
        RunConfig c;
        apply_seed(c, c.seed);
        return c;
    }
    return parse_run_config(read_json_file(path));
}

Json run_config_to_json(const RunConfig& c) {
    Json j;
    j["seed"] = c.seed;
    j["dgp"] = dgp_to_json(c.dgp);
    j["train"] = {{"batch_size", c.train.batch_size},   {"initial_lr", c.train.initial_lr},
                  {"max_epochs", c.train.max_epochs},   {"patience", c.train.patience},
                  {"strategy", to_string(c.train.strategy)}, {"reorder_epochs", c.train.reorder_epochs},
                  {"epsilon", c.train.epsilon},         {"g", c.train.g},
                  {"m_max", c.train.m_max}};
    j["init"] = {{"subsample_size", c.init.subsample_size}, {"max_iterations", c.init.max_iterations}};
    j["compare"] = {{"process_counts", c.compare_processes}, {"replicate_counts", c.compare_replicates},
                    {"methods", c.compare_methods},          {"seeds", c.compare_seeds},
                    {"conditional", c.compare_conditional}};
    j["paths"] = {{"data_dir", c.data_dir}, {"model", c.model_path}, {"out", c.out_path}};
    return j;
}

std::uint64_t config_hash(const RunConfig& config) {
    Json j = run_config_to_json(config);
    j.erase("paths");
    return fnv1a(j.dump());
}

int run(int argc, char** argv) {
    CLI::App app{"Multivariate Bayesian transport maps for spatial fields"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;

    auto* sim = app.add_subcommand("simulate", "Simulate train/val/test fields from the nonlinear DGP");
    sim->add_option("--config", config_path, "Run configuration JSON");
    sim->add_option("--seed", seed, "Random seed (overrides the configuration)");
    sim->add_option("--out", out, "Output directory")->required();

    FitFlags fit_flags;
    std::string strategy;
    auto* fit_cmd = app.add_subcommand("fit", "Two-stage fit: parametric initialization, then empirical Bayes");
    fit_cmd->add_option("--config", config_path, "Run configuration JSON");
    fit_cmd->add_option("--seed", seed, "Random seed (overrides the configuration)");
    fit_cmd->add_option("--data", fit_flags.data_dir, "Directory holding locations.csv, train.csv and val.csv");
    fit_cmd->add_option("--out", out, "Output model JSON (stage-1 JSON with --stage1-only)");
    fit_cmd->add_option("--strategy", strategy, "cpp, fo or or")->check(CLI::IsMember({"cpp", "fo", "or"}));
    fit_cmd->add_option("--conditional", fit_flags.conditional, "Target process ordered last")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--trace", fit_flags.trace, "Training trace CSV (default: <out>.trace.csv)");
    auto* skip = fit_cmd->add_flag("--skip-stage1", fit_flags.skip_stage1, "Use --latent-positions instead of stage 1");
    auto* latent = fit_cmd->add_option("--latent-positions", fit_flags.latent_positions,
                                       "P x k CSV (no header) or stage-1 JSON");
    skip->needs(latent);
    latent->needs(skip);
    fit_cmd->add_flag("--stage1-only", fit_flags.stage1_only, "Run the parametric stage only")->excludes(skip);

    std::string model_file;
    int count = 0;
    std::string observed;
    int observed_row = 1;
    auto* sample_cmd = app.add_subcommand("sample", "Draw fields from a fitted map");
    sample_cmd->add_option("--model-file", model_file, "Model JSON")->required();
    sample_cmd->add_option("--count", count, "Number of samples")->required();
    sample_cmd->add_option("--seed", seed, "Random seed");
    sample_cmd->add_option("--observed", observed, "Replicate CSV supplying the conditioning values");
    sample_cmd->add_option("--observed-row", observed_row, "1-based row of --observed to condition on");
    sample_cmd->add_option("--out", out, "Output CSV")->required();

    std::string model_kind = "map";
    std::string data_path;
    int score_conditional = 0;
    auto* score_cmd = app.add_subcommand("score", "Per-replicate log densities and their mean");
    score_cmd->add_option("--model", model_kind, "map, parametric or truth")
        ->check(CLI::IsMember({"map", "parametric", "truth"}));
    score_cmd->add_option("--model-file", model_file, "Model JSON (meta.json for --model truth)")->required();
    score_cmd->add_option("--data", data_path, "Replicate CSV to score")->required();
    score_cmd->add_option("--conditional", score_conditional, "Score the target process given the rest")
        ->check(CLI::PositiveNumber);
    score_cmd->add_option("--out", out, "Output CSV")->required();

    std::string reference;
    std::string stats;
    auto* pre = app.add_subcommand("preprocess", "Pixel-wise standardization of a replicate CSV");
    pre->add_option("--data", data_path, "Replicate CSV")->required();
    pre->add_option("--reference", reference, "Replicate CSV supplying mean and SD (default: --data)");
    pre->add_option("--stats", stats, "Write the per-component mean and SD here");
    pre->add_option("--out", out, "Output CSV")->required();

    auto* cmp = app.add_subcommand("compare", "Simulation comparison over P, R, methods and seeds");
    cmp->add_option("--config", config_path, "Run configuration JSON");
    cmp->add_option("--seed", seed, "Single seed (overrides compare.seeds)");
    cmp->add_option("--out", out, "Results CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        RunConfig config = load_run_config(config_path);
        if (seed) apply_seed(config, *seed);
        if (out.empty()) out = config.out_path;

        if (sim->parsed()) {
            command_simulate(config, out);
        } else if (fit_cmd->parsed()) {
            if (!strategy.empty()) config.train.strategy = parse_strategy(strategy);
            if (fit_flags.data_dir.empty()) fit_flags.data_dir = config.data_dir;
            if (fit_flags.data_dir.empty()) throw UsageError("fit needs --data");
            if (out.empty()) throw UsageError("fit needs --out");
            fit_flags.out = out;
            command_fit(config, fit_flags);
        } else if (sample_cmd->parsed()) {
            command_sample(model_file, count, seed.value_or(1), observed, observed_row, out);
        } else if (score_cmd->parsed()) {
            command_score(model_kind, model_file, data_path, score_conditional, out);
        } else if (pre->parsed()) {
            command_preprocess(data_path, reference, out, stats);
        } else if (cmp->parsed()) {
            if (seed) config.compare_seeds = {*seed};
            command_compare(config, out);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ContractError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const InputError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitOk;
}

}  // namespace mvtm::cli

#include "mvtm/errors.hpp"
#include "mvtm/geometry.hpp"
#include "mvtm/io.hpp"
#include "mvtm/likelihood.hpp"
#include "mvtm/map.hpp"
#include "mvtm/parametric.hpp"
#include "mvtm/pipeline.hpp"
#include "mvtm/prior.hpp"
#include "mvtm/simgen.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace mvtm;

namespace {

std::vector<SpatialSite> to_sites(const Eigen::MatrixXd& coords, const std::vector<int>& process_ids) {
    if (static_cast<std::size_t>(coords.rows()) != process_ids.size())
        throw InputError("coords and process_ids have different lengths");
    std::vector<SpatialSite> out;
    out.reserve(process_ids.size());
    for (Eigen::Index k = 0; k < coords.rows(); ++k) out.push_back({coords.row(k).transpose(), process_ids[k]});
    return out;
}

py::tuple from_sites(const std::vector<SpatialSite>& sites) {
    const Eigen::Index dim = sites.empty() ? 0 : sites[0].coords.size();
    Eigen::MatrixXd coords(static_cast<Eigen::Index>(sites.size()), dim);
    std::vector<int> ids;
    for (std::size_t k = 0; k < sites.size(); ++k) {
        coords.row(static_cast<Eigen::Index>(k)) = sites[k].coords.transpose();
        ids.push_back(sites[k].process_id);
    }
    return py::make_tuple(coords, ids);
}

std::vector<AugmentedLocation> points_of(const Eigen::MatrixXd& coords, const std::vector<int>& process_ids,
                                         const Eigen::MatrixXd& latent) {
    return augment_locations(to_sites(coords, process_ids), latent);
}

}  // namespace

PYBIND11_MODULE(_mvtm, m) {
    m.doc() = "Multivariate Bayesian transport maps";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    py::class_<OrderingPlan>(m, "OrderingPlan")
        .def_readonly("permutation", &OrderingPlan::permutation)
        .def_readonly("conditioning", &OrderingPlan::conditioning)
        .def_readonly("nearest_prev_distance", &OrderingPlan::nearest_prev_distance)
        .def_readonly("block_start", &OrderingPlan::block_start);

    m.def(
        "maxmin_order",
        [](const Eigen::MatrixXd& coords, const std::vector<int>& process_ids, const Eigen::MatrixXd& latent,
           const std::vector<int>& block_last) { return maxmin_order(points_of(coords, process_ids, latent), block_last); },
        py::arg("coords"), py::arg("process_ids"), py::arg("latent_positions"), py::arg("block_last") = std::vector<int>{});
    m.def(
        "build_plan",
        [](const Eigen::MatrixXd& coords, const std::vector<int>& process_ids, const Eigen::MatrixXd& latent, int size,
           const std::vector<int>& block_last) { return build_plan(points_of(coords, process_ids, latent), size, block_last); },
        py::arg("coords"), py::arg("process_ids"), py::arg("latent_positions"), py::arg("m"),
        py::arg("block_last") = std::vector<int>{});

    m.def("conditioning_size", &conditioning_size, py::arg("theta_q"), py::arg("epsilon"),
          py::arg("m_max") = kMaxConditioning);
    m.def(
        "prior_params",
        [](double theta_d1, double theta_d2, double theta_sigma1, double theta_sigma2, double ell, double g) {
            HyperParams t;
            t.theta_d1 = theta_d1;
            t.theta_d2 = theta_d2;
            t.theta_sigma1 = theta_sigma1;
            t.theta_sigma2 = theta_sigma2;
            const auto p = prior_params(t, ell, g);
            return py::dict(py::arg("alpha") = p.alpha, py::arg("beta") = p.beta, py::arg("sigma2") = p.sigma2,
                            py::arg("expected_d2") = p.expected_d2);
        },
        py::arg("theta_d1"), py::arg("theta_d2"), py::arg("theta_sigma1"), py::arg("theta_sigma2"), py::arg("ell"),
        py::arg("g") = kDefaultG);
    m.def(
        "component_loglik",
        [](const Eigen::VectorXd& y, const Eigen::MatrixXd& neighbors, double alpha, double beta, double sigma2,
           double expected_d2, const Eigen::VectorXd& q_diag, double gamma) {
            ComponentData d;
            d.responses = y;
            d.neighbors = neighbors;
            ComponentPrior p{alpha, beta, sigma2, expected_d2, q_diag, gamma};
            return component_loglik(d, p);
        },
        py::arg("y"), py::arg("neighbors"), py::arg("alpha"), py::arg("beta"), py::arg("sigma2"),
        py::arg("expected_d2"), py::arg("q_diag"), py::arg("gamma"));

    m.def(
        "recover_positions",
        [](const Eigen::MatrixXd& distances) {
            const auto r = positions_from_distances(distances);
            return py::make_tuple(r.latent_positions, r.warnings);
        },
        py::arg("distances"));

    m.def(
        "simulate",
        [](int num_processes, int grid_side, int r_train, int r_val, int r_test, std::uint64_t seed,
           double nonlinearity, const std::string& weight_mode) {
            DgpConfig c;
            c.num_processes = num_processes;
            c.grid_side = grid_side;
            c.r_train = r_train;
            c.r_val = r_val;
            c.r_test = r_test;
            c.seed = seed;
            c.nonlinearity = nonlinearity;
            c.weight_mode = parse_weight_mode(weight_mode);
            const auto data = simulate(c);
            const auto s = from_sites(data.truth.sites);
            return py::dict(py::arg("coords") = s[0], py::arg("process_ids") = s[1], py::arg("train") = data.train,
                            py::arg("validation") = data.validation, py::arg("test") = data.test,
                            py::arg("latent_positions") = data.truth.latent_positions);
        },
        py::arg("num_processes") = 2, py::arg("grid_side") = 32, py::arg("r_train") = 20, py::arg("r_val") = 20,
        py::arg("r_test") = 20, py::arg("seed") = 1, py::arg("nonlinearity") = 2.0, py::arg("weight_mode") = "kriging");

    py::class_<FittedMap>(m, "FittedMap")
        .def_readonly("num_processes", &FittedMap::num_processes)
        .def_readonly("latent_positions", &FittedMap::latent_positions)
        .def_readonly("plan", &FittedMap::plan)
        .def_readonly("conditional", &FittedMap::conditional)
        .def_readonly("target_process", &FittedMap::target_process)
        .def_property_readonly("theta", [](const FittedMap& f) { return f.theta.to_vector(); })
        .def("__len__", &FittedMap::size)
        .def("log_density", [](const FittedMap& f, const Eigen::VectorXd& y) { return log_density(f, y); }, py::arg("field"))
        .def("conditional_log_density",
             [](const FittedMap& f, const Eigen::VectorXd& y) { return conditional_log_density(f, y); }, py::arg("field"))
        .def("sample", [](const FittedMap& f, int count, std::uint64_t seed) { return sample(f, count, seed); },
             py::arg("count"), py::arg("seed") = 1)
        .def("conditional_sample",
             [](const FittedMap& f, const Eigen::VectorXd& observed, int count, std::uint64_t seed) {
                 return conditional_sample(f, observed, count, seed);
             },
             py::arg("observed"), py::arg("count"), py::arg("seed") = 1)
        .def("forward_transform",
             [](const FittedMap& f, const Eigen::VectorXd& y) { return forward_transform(f, y); }, py::arg("field"))
        .def("save",
             [](const FittedMap& f, const std::string& path) {
                 ModelFile model;
                 model.map = f;
                 write_json_file(path, model_to_json(model));
             },
             py::arg("path"))
        .def_static("load", [](const std::string& path) { return model_from_json(read_json_file(path)).map; },
                    py::arg("path"));

    m.def(
        "fit",
        [](const Eigen::MatrixXd& coords, const std::vector<int>& process_ids, int num_processes,
           const Eigen::MatrixXd& train, const Eigen::MatrixXd& validation, const std::string& strategy,
           int target_process, int batch_size, int max_epochs, int patience, double initial_lr, std::uint64_t seed) {
            PipelineConfig pc;
            pc.train.strategy = parse_strategy(strategy);
            pc.train.batch_size = batch_size;
            pc.train.max_epochs = max_epochs;
            pc.train.patience = patience;
            pc.train.initial_lr = initial_lr;
            pc.train.seed = seed;
            pc.init.seed = seed;
            pc.target_process = target_process;
            py::gil_scoped_release release;
            return fit_pipeline(to_sites(coords, process_ids), num_processes, train, validation, pc).map;
        },
        py::arg("coords"), py::arg("process_ids"), py::arg("num_processes"), py::arg("train"), py::arg("validation"),
        py::arg("strategy") = "cpp", py::arg("target_process") = 0, py::arg("batch_size") = 256,
        py::arg("max_epochs") = 500, py::arg("patience") = 25, py::arg("initial_lr") = 0.01, py::arg("seed") = 1);
}

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "chl/cli.hpp"
#include "chl/eval.hpp"
#include "chl/features.hpp"
#include "chl/models.hpp"

namespace py = pybind11;

PYBIND11_MODULE(chlpy, m) {
    m.doc() = "Mar Menor chlorophyll-a retrieval pipeline bindings";

    m.def("r2", &chl::r2, py::arg("y"), py::arg("yhat"));
    m.def("rmse", &chl::rmse, py::arg("y"), py::arg("yhat"));
    m.def("label_high_chl", &chl::label_high_chl, py::arg("y"),
          py::arg("threshold") = chl::kHighChlThreshold);

    m.def(
        "index_names",
        [](const std::string& set_label) {
            const auto set =
                chl::reflectance_set(chl::reflectance_kind_from_label(set_label));
            std::vector<std::string> names;
            for (const auto& ix : chl::enumerate_all_indices(set))
                names.push_back(ix.canonical_name);
            return names;
        },
        py::arg("set_label"));

    m.def(
        "fit_predict",
        [](const std::string& kind, const chl::Matrix& X, const std::vector<double>& y,
           const chl::Matrix& Xq, std::uint64_t seed) {
            chl::ModelSpec spec;
            spec.kind = chl::model_kind_from_name(kind);
            spec.seed = seed;
            std::vector<std::string> names;
            for (std::size_t j = 0; j < (X.empty() ? 0 : X[0].size()); ++j)
                names.push_back("f" + std::to_string(j));
            return chl::fit_model(spec, X, y, names).predict(Xq);
        },
        py::arg("kind"), py::arg("X"), py::arg("y"), py::arg("Xq"), py::arg("seed") = 0);

    m.def("run_cli", &chl::run_cli, py::arg("args"),
          "Run a pipeline subcommand; returns the process exit code.");
}

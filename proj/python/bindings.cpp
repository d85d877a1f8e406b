#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "spikecal/data.hpp"
#include "spikecal/pipeline.hpp"
#include "spikecal/prob.hpp"
#include "spikecal/snn.hpp"

namespace py = pybind11;
using namespace spikecal;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a)
{
    Shape s(a.shape(), a.shape() + a.ndim());
    return Tensor(s, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t)
{
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Dataset to_dataset(const Array& x, const std::vector<std::size_t>& labels)
{
    const Tensor batch = to_tensor(x);
    if (batch.rank() < 2) throw ParameterError("inputs must have a leading sample axis");
    Dataset d;
    for (std::size_t i = 0; i < batch.shape()[0]; ++i) d.inputs.push_back(batch.row(i));
    d.labels = labels;
    if (d.labels.empty()) d.labels.assign(d.inputs.size(), 0);
    if (d.labels.size() != d.inputs.size()) throw DataError("inputs and labels differ in length");
    return d;
}

py::tuple from_dataset(const Dataset& d)
{
    return py::make_tuple(to_array(d.batch()), d.labels);
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "spikecal core bindings";
    m.attr("__version__") = SPIKECAL_VERSION;

    static py::exception<Error> base(m, "Error");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(base.ptr(), e.what());
        }
    });

    py::class_<NeuronConfig>(m, "NeuronConfig")
        .def(py::init([](double v_th, double rho, int phi) { return NeuronConfig{v_th, rho, phi}; }),
             py::arg("v_th") = 1.0, py::arg("rho") = 1.0, py::arg("phi") = 1)
        .def_readwrite("v_th", &NeuronConfig::v_th)
        .def_readwrite("rho", &NeuronConfig::rho)
        .def_readwrite("phi", &NeuronConfig::phi)
        .def_property_readonly("threshold", &NeuronConfig::threshold)
        .def("__repr__", [](const NeuronConfig& c) {
            return "NeuronConfig(v_th=" + std::to_string(c.v_th) + ", rho=" + std::to_string(c.rho) +
                   ", phi=" + std::to_string(c.phi) + ")";
        });

    py::class_<NetworkDef>(m, "Network")
        .def_property_readonly("num_classes", [](const NetworkDef& n) { return n.num_classes; })
        .def_property_readonly("spiking_layers", &NetworkDef::spiking_layers)
        .def("to_json", [](const NetworkDef& n) { return serialize_model(n); });

    py::class_<ConvertedSNN>(m, "ConvertedSNN")
        .def_readonly("configs", &ConvertedSNN::configs)
        .def_readonly("net", &ConvertedSNN::net)
        .def("to_json", [](const ConvertedSNN& s) { return serialize_snn(s); })
        .def_static("from_json", &parse_snn);

    py::class_<SensitivityTable>(m, "SensitivityTable")
        .def(py::init([](std::vector<double> legend, std::vector<std::vector<double>> S,
                         std::vector<std::vector<double>> E) {
                 SensitivityTable t{std::move(legend), std::move(S), std::move(E)};
                 t.check();
                 return t;
             }),
             py::arg("legend"), py::arg("S"), py::arg("E"))
        .def_readonly("legend", &SensitivityTable::legend)
        .def_readonly("S", &SensitivityTable::S)
        .def_readonly("E", &SensitivityTable::E);

    py::class_<ParetoAssignment>(m, "ParetoAssignment")
        .def_readonly("choice", &ParetoAssignment::choice)
        .def_readonly("S_sum", &ParetoAssignment::S_sum)
        .def_readonly("E_sum", &ParetoAssignment::E_sum)
        .def_property_readonly("frontier", [](const ParetoAssignment& a) {
            py::list out;
            for (const auto& p : a.frontier) out.append(py::make_tuple(p.E, p.S, p.choice));
            return out;
        });

    m.def("load_model", &load_model, py::arg("path"));
    m.def("synth_blobs", [](std::size_t K, std::size_t d, std::size_t n, double spread, std::uint64_t seed) {
        return from_dataset(synth_blobs(K, d, n, spread, seed));
    }, py::arg("classes"), py::arg("dim"), py::arg("per_class"), py::arg("spread"), py::arg("seed"));

    m.def("train", [](const Array& x, const std::vector<std::size_t>& y, std::vector<std::size_t> hidden,
                      std::size_t classes, std::size_t epochs, double lr, std::uint64_t seed) {
        const Dataset d = to_dataset(x, y);
        NetworkDef net = make_mlp(d.inputs.front().size(), hidden, classes);
        initialize_weights(net, seed);
        return train_tiny(net, d, {epochs, lr, 32, seed}).net;
    }, py::arg("x"), py::arg("y"), py::arg("hidden"), py::arg("classes"), py::arg("epochs") = 30,
       py::arg("learning_rate") = 0.05, py::arg("seed") = 0);

    m.def("forward", [](const NetworkDef& net, const Array& x) { return to_array(forward(net, to_tensor(x)).logits); },
          py::arg("net"), py::arg("x"));
    m.def("clipfloor", py::overload_cast<double, std::size_t, double, int>(&clipfloor), py::arg("x"), py::arg("T"),
          py::arg("v_th"), py::arg("phi") = 1);
    m.def("optimize_threshold", [](std::vector<double> a, std::size_t T, int phi, std::size_t grid) {
        const auto r = optimize_threshold(a, T, phi, grid);
        return py::make_tuple(r.v_th, r.objective);
    }, py::arg("activations"), py::arg("T"), py::arg("phi") = 1, py::arg("grid_points") = kDefaultGridPoints);

    m.def("convert", [](const NetworkDef& net, const Array& calib, std::size_t T, std::vector<int> phi,
                        std::vector<double> rho, std::size_t workers) {
        const std::size_t L = net.spiking_layers().size();
        CalibrationPlan plan = CalibrationPlan::uniform(T, L, 1);
        if (phi.size() == 1) phi.assign(L, phi[0]);
        if (rho.size() == 1) rho.assign(L, rho[0]);
        plan.phi = phi;
        plan.rho = rho;
        return convert(net, plan, to_dataset(calib, {}), workers).snn;
    }, py::arg("net"), py::arg("calib"), py::arg("T") = 8, py::arg("phi") = std::vector<int>{1},
       py::arg("rho") = std::vector<double>{1.0}, py::arg("workers") = 1);

    m.def("simulate", [](const ConvertedSNN& snn, const Array& x, std::size_t T, std::size_t workers) {
        const RunResult r = run(snn.net, snn.configs, to_tensor(x), T, workers);
        return py::make_tuple(to_array(r.logits), r.report.spikes);
    }, py::arg("snn"), py::arg("x"), py::arg("T"), py::arg("workers") = 1);

    m.def("pareto_phi_search", &pareto_phi_search, py::arg("table"), py::arg("E_target"),
          py::arg("bins") = kDefaultBins);
    m.def("pareto_rho_search", &pareto_rho_search, py::arg("table"), py::arg("S_target"),
          py::arg("bins") = kDefaultBins);
    m.def("brute_force_search", [](const SensitivityTable& t, double budget, const std::string& mode) {
        if (mode != "phi" && mode != "rho") throw ParameterError("mode must be 'phi' or 'rho'");
        return brute_force_search(t, budget, mode == "phi" ? SearchMode::Phi : SearchMode::Rho);
    }, py::arg("table"), py::arg("budget"), py::arg("mode"));

    m.def("entropy", [](std::vector<double> p) { return entropy(p); }, py::arg("p"));
    m.def("confidence", [](std::vector<double> p) { return confidence(p); }, py::arg("p"));
    m.def("kl_divergence", [](std::vector<double> p, std::vector<double> q) { return kl_divergence(p, q); },
          py::arg("p"), py::arg("q"));

    m.def("run_task", [](const std::string& task, const std::string& config_text, std::vector<std::string> overrides) {
        const RunOutcome o = run(parse_config(config_text, overrides, task));
        return py::make_tuple(o.exit_code, o.report.dump());
    }, py::arg("task"), py::arg("config_text"), py::arg("overrides") = std::vector<std::string>{});
}

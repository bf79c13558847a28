// Copyright (c) 2026, The soupkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for checkpoints, data, training, soups, ensembles and analysis.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "soupkit/analysis.hpp"
#include "soupkit/checkpoint_io.hpp"
#include "soupkit/datagen.hpp"
#include "soupkit/ensembles.hpp"
#include "soupkit/error.hpp"
#include "soupkit/soups.hpp"
#include "soupkit/tinynet.hpp"
#include "soupkit/trainer.hpp"

namespace py = pybind11;
using namespace soupkit;
using nlohmann::json;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

// Dicts cross the boundary as JSON text so the C++ parsers do the validation.
json to_cpp(const py::object& obj) {
    if (obj.is_none()) return json::object();
    const auto dumps = py::module_::import("json").attr("dumps");
    return json::parse(py::cast<std::string>(dumps(obj)));
}

py::object to_py(const json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

py::array_t<float> tensor_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<float> out(shape);
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

template <class T>
py::array_t<T> matrix_array(const Matrix<T>& m) {
    py::array_t<T> out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

template <class T, class A>
Matrix<T> array_matrix(const A& a) {
    if (a.ndim() != 2) throw Error(ErrorKind::ShapeMismatch, "expected a 2-d array");
    Matrix<T> m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.data().begin());
    return m;
}

std::vector<int> array_labels(const IntArray& a) { return {a.data(), a.data() + a.size()}; }

Split make_split(const FloatArray& x, const IntArray& y) {
    Split s;
    s.features = array_matrix<float>(x);
    s.labels = array_labels(y);
    if (s.labels.size() != s.features.rows()) throw Error(ErrorKind::ShapeMismatch, "features and labels disagree");
    s.ids.resize(s.labels.size());
    for (std::size_t i = 0; i < s.ids.size(); ++i) s.ids[i] = i;
    return s;
}

py::dict soup_dict(const SoupResult& r) {
    py::dict d;
    d["model"] = r.merged;
    d["report"] = to_py(r.report());
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Weight soups, logit ensembles and loss-landscape analysis for small MLPs";

    static py::handle error_type =
        PyErr_NewException("soupkit._core.SoupkitError", PyExc_RuntimeError, nullptr);
    m.attr("SoupkitError") = error_type;
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object inst = py::reinterpret_borrow<py::object>(error_type)(e.what());
            inst.attr("kind") = std::string(to_string(e.kind()));
            PyErr_SetObject(error_type.ptr(), inst.ptr());
        }
    });

    // ---- checkpoints ----

    py::class_<Checkpoint>(m, "Checkpoint")
        .def(py::init<>())
        .def("names",
             [](const Checkpoint& c) {
                 std::vector<std::string> names;
                 for (const auto& t : c.tensors()) names.push_back(t.name);
                 return names;
             })
        .def("__getitem__", [](const Checkpoint& c, const std::string& name) { return tensor_array(c.at(name)); })
        .def("__contains__", [](const Checkpoint& c, const std::string& name) { return c.find(name) != nullptr; })
        .def("__len__", &Checkpoint::num_tensors)
        .def("add",
             [](Checkpoint& c, const std::string& name, const FloatArray& a) {
                 Shape shape(a.shape(), a.shape() + a.ndim());
                 c.add(Tensor(name, shape, std::vector<float>(a.data(), a.data() + a.size())));
             })
        .def_property_readonly("num_elements", &Checkpoint::num_elements)
        .def_readwrite("meta", &Checkpoint::meta)
        .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(c, p); })
        .def_static("load", &load_checkpoint)
        .def("to_bytes",
             [](const Checkpoint& c) {
                 const auto b = encode_checkpoint(c);
                 return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
             })
        .def_static("from_bytes",
                    [](const py::bytes& b) {
                        const std::string s = b;
                        return decode_checkpoint(
                            std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
                    })
        .def("__eq__", [](const Checkpoint& a, const Checkpoint& b) { return a == b; });

    m.def(
        "combine",
        [](const std::vector<double>& coeffs, const std::vector<Checkpoint>& ckpts) { return combine(coeffs, ckpts); },
        py::arg("coeffs"), py::arg("checkpoints"));

    // ---- data ----

    py::class_<Split>(m, "Split")
        .def(py::init(&make_split), py::arg("features"), py::arg("labels"))
        .def_property_readonly("features", [](const Split& s) { return matrix_array(s.features); })
        .def_property_readonly("labels",
                               [](const Split& s) { return py::array_t<int>(s.labels.size(), s.labels.data()); })
        .def("__len__", &Split::size);

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("input_dim", &Dataset::input_dim)
        .def_readonly("num_classes", &Dataset::num_classes)
        .def("split", [](const Dataset& d, const std::string& name) { return d.split(parse_split_name(name)); },
             py::return_value_policy::copy)
        .def("save_csv", [](const Dataset& d, const std::filesystem::path& dir) { save_csv(d, dir); })
        .def_static("load_csv", &load_csv);

    m.def(
        "generate", [](const py::object& cfg) { return generate(dataset_config_from_json(to_cpp(cfg))); },
        py::arg("config") = py::none(), "Synthetic Gaussian-cluster dataset from a config dict.");
    m.def(
        "dataset_config", [](const py::object& cfg) { return to_py(to_json(dataset_config_from_json(to_cpp(cfg)))); },
        py::arg("config") = py::none(), "Config dict with defaults filled in.");

    // ---- models ----

    py::class_<LogitModel>(m, "LogitModel")
        .def_property_readonly("input_dim", &LogitModel::input_dim)
        .def_property_readonly("num_classes", &LogitModel::num_classes)
        .def("forward",
             [](const LogitModel& model, const Checkpoint& theta, const FloatArray& x) {
                 return matrix_array(model.forward(theta, array_matrix<float>(x)));
             })
        .def(
            "evaluate",
            [](const LogitModel& model, const Checkpoint& theta, const Split& split, std::optional<double> beta) {
                return to_py(to_json(evaluate(model, theta, split, beta)));
            },
            py::arg("theta"), py::arg("split"), py::arg("beta") = py::none());

    py::class_<Mlp, LogitModel>(m, "Mlp")
        .def(py::init([](const std::vector<int>& widths) { return Mlp(ArchSpec{widths}); }), py::arg("layer_widths"))
        .def_property_readonly("layer_widths", [](const Mlp& mlp) { return mlp.arch().layer_widths; })
        .def("initialize", &Mlp::initialize, py::arg("seed"));

    py::class_<LinearModel, LogitModel>(m, "LinearModel").def(py::init<int, int>(), py::arg("input_dim"), py::arg("num_classes"));

    // ---- training ----

    m.def(
        "hyper_config", [](const py::object& cfg) { return to_py(to_json(hyper_config_from_json(to_cpp(cfg)))); },
        py::arg("config") = py::none(), "Hyperparameter dict with defaults filled in.");
    m.def(
        "pretrain",
        [](const Mlp& model, const Dataset& data, const py::object& cfg) {
            HyperConfig h = cfg.is_none() ? default_pretrain_config() : hyper_config_from_json(to_cpp(cfg));
            py::gil_scoped_release release;
            return pretrain(model, data, h).model;
        },
        py::arg("model"), py::arg("dataset"), py::arg("config") = py::none());
    m.def(
        "finetune",
        [](const LogitModel& model, const Checkpoint& theta0, const Dataset& data, const py::object& cfg) {
            const HyperConfig h = hyper_config_from_json(to_cpp(cfg));
            FinetuneResult r;
            {
                py::gil_scoped_release release;
                r = finetune(model, theta0, h, data);
            }
            return py::make_tuple(r.model, r.val_accuracy);
        },
        py::arg("model"), py::arg("theta0"), py::arg("dataset"), py::arg("config") = py::none(),
        "Returns (checkpoint, val_accuracy).");

    // ---- soups ----

    m.def(
        "uniform_soup", [](const std::vector<Checkpoint>& ms) { return soup_dict(uniform_soup(ms)); },
        py::arg("models"));
    m.def(
        "greedy_soup",
        [](const LogitModel& model, const std::vector<Checkpoint>& ms, const Split& val) {
            return soup_dict(greedy_soup(ms, [&](const Checkpoint& c) { return evaluate(model, c, val).accuracy; }));
        },
        py::arg("model"), py::arg("models"), py::arg("val"));
    m.def(
        "learned_soup",
        [](const LogitModel& model, const std::vector<Checkpoint>& ms, const Split& val, bool by_layer, int epochs,
           double lr) {
            LearnedSoupOptions o;
            o.by_layer = by_layer;
            o.epochs = epochs;
            o.learning_rate = lr;
            return soup_dict(learned_soup(model, ms, val, o));
        },
        py::arg("model"), py::arg("models"), py::arg("val"), py::arg("by_layer") = false, py::arg("epochs") = 3,
        py::arg("learning_rate") = 0.1);

    // ---- ensembles and calibration ----

    m.def(
        "logit_ensemble",
        [](const std::vector<DoubleArray>& members, const std::vector<double>& weights) {
            std::vector<LogitBatch> fs;
            for (const auto& a : members) fs.push_back(array_matrix<double>(a));
            return matrix_array(logit_ensemble(fs, weights));
        },
        py::arg("logits"), py::arg("weights") = std::vector<double>{});
    m.def(
        "fit_temperature",
        [](const DoubleArray& logits, const IntArray& labels) {
            const auto y = array_labels(labels);
            const TemperatureFit f = fit_temperature(array_matrix<double>(logits), y);
            return py::make_tuple(f.beta, f.nll);
        },
        py::arg("logits"), py::arg("labels"), "Returns (beta, nll).");
    m.def(
        "ece",
        [](const std::vector<double>& conf, const std::vector<int>& correct, int bins) {
            return ece_equal_mass(conf, correct, bins);
        },
        py::arg("confidences"), py::arg("correct"), py::arg("num_bins") = kDefaultEceBins);
    m.def(
        "evaluate_logits",
        [](const DoubleArray& logits, const IntArray& labels, std::optional<double> beta) {
            const auto y = array_labels(labels);
            return to_py(to_json(evaluate_logits(array_matrix<double>(logits), y, beta)));
        },
        py::arg("logits"), py::arg("labels"), py::arg("beta") = py::none());

    // ---- analysis ----

    m.def(
        "interpolation_curve",
        [](const LogitModel& model, const Checkpoint& t0, const Checkpoint& t1, const std::vector<double>& alphas,
           const Split& split) {
            py::list out;
            for (const auto& p : interpolation_curve(model, t0, t1, alphas, split)) {
                py::dict d = to_py(to_json(p.report));
                d["alpha"] = p.alpha;
                out.append(d);
            }
            return out;
        },
        py::arg("model"), py::arg("theta0"), py::arg("theta1"), py::arg("alphas"), py::arg("split"));
    m.def(
        "soup_vs_ensemble_approx",
        [](const LogitModel& model, const Checkpoint& t0, const Checkpoint& t1, double alpha, const Split& split,
           const std::string& beta_mode, double h_alpha) {
            const ApproxRecord r =
                soup_vs_ensemble_approx(model, t0, t1, alpha, split, parse_beta_mode(beta_mode), h_alpha);
            py::dict d;
            d["alpha"] = r.alpha;
            d["beta"] = r.beta;
            d["approx_value"] = r.approx_value;
            d["true_loss_diff"] = r.true_loss_diff;
            d["true_err_diff"] = r.true_err_diff;
            d["second_derivative_term"] = r.second_derivative_term;
            d["variance_term"] = r.variance_term;
            return d;
        },
        py::arg("model"), py::arg("theta0"), py::arg("theta1"), py::arg("alpha"), py::arg("split"),
        py::arg("beta_mode") = "calibrate", py::arg("h_alpha") = 0.05);
}

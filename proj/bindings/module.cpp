// pybind11 surface over the core: model presets, forward/eval, pruning
// operations, accounting, checkpoints, datasets and the run flows.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "iplt/checkpoint.hpp"
#include "iplt/config.hpp"
#include "iplt/dataset.hpp"
#include "iplt/metrics.hpp"
#include "iplt/model.hpp"
#include "iplt/pruner.hpp"
#include "iplt/runner.hpp"

namespace py = pybind11;
using namespace iplt;

namespace {

Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    std::vector<std::int64_t> shape(static_cast<std::size_t>(arr.ndim()));
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) {
        shape[static_cast<std::size_t>(i)] = arr.shape(i);
    }
    std::vector<scalar> data(arr.data(), arr.data() + arr.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> to_numpy(const Tensor& t) {
    py::array_t<double> out(t.shape());
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

Selection selection_from_pairs(const std::vector<std::tuple<int, int, double>>& picks) {
    Selection s;
    for (const auto& [layer, filter, norm] : picks) {
        s.picks.push_back({layer, filter, norm});
    }
    return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Incremental filter pruning (IPLT) core";

    py::register_exception<LayerCollapseError>(m, "LayerCollapseError");

    py::class_<ModelGraph>(m, "Model")
        .def_property_readonly("name", [](const ModelGraph& g) { return g.name; })
        .def_property_readonly("epoch", [](const ModelGraph& g) { return g.epoch; })
        .def_property_readonly("creation_seed",
                               [](const ModelGraph& g) { return g.creation_seed; })
        .def("describe", &describe)
        .def("conv_layers", &ModelGraph::conv_layer_indices)
        .def("total_filters", &ModelGraph::total_filters)
        .def("alive_filters", &ModelGraph::alive_filters)
        .def("alive_mask",
             [](const ModelGraph& g, int layer) {
                 const ConvLayer& conv = g.conv_at(layer);
                 return std::vector<int>(conv.alive.begin(), conv.alive.end());
             })
        .def("filter_norms",
             [](const ModelGraph& g, int layer, double p) {
                 return layer_filter_norms(g.conv_at(layer), p);
             },
             py::arg("layer"), py::arg("p") = 2.0)
        .def("count_parameters", [](const ModelGraph& g) { return count_parameters(g).total; })
        .def("forward",
             [](ModelGraph& g, const py::array_t<double>& batch, bool train) {
                 Tensor x = to_tensor(batch);
                 return to_numpy(forward(g, x, train ? Mode::Train : Mode::Eval));
             },
             py::arg("batch"), py::arg("train") = false)
        .def("evaluate",
             [](ModelGraph& g, const py::array_t<double>& images,
                const std::vector<int>& labels) {
                 return evaluate_accuracy(g, to_tensor(images), labels);
             })
        .def("__repr__", [](const ModelGraph& g) {
            return "<iplt.Model " + g.name + " filters=" + std::to_string(g.alive_filters()) +
                   "/" + std::to_string(g.total_filters()) + ">";
        });

    m.def("make_mnist_cnn", &make_mnist_cnn, py::arg("seed") = 1);
    m.def("make_toy_cnn", &make_toy_cnn, py::arg("seed") = 1, py::arg("in_channels") = 1,
          py::arg("height") = 12, py::arg("width") = 12, py::arg("num_classes") = 2);

    m.def("filter_norm",
          [](const py::array_t<double>& filter, double p) {
              return filter_norm(to_tensor(filter), p);
          },
          py::arg("filter"), py::arg("p") = 2.0);

    m.def("select_filters",
          [](const ModelGraph& g, const std::string& mode, double norm_p, double target_ratio,
             int min_filters) {
              const Selection s =
                  select_filters(g, parse_compare_mode(mode), norm_p, target_ratio, min_filters);
              std::vector<std::tuple<int, int, double>> out;
              for (const auto& pick : s.picks) {
                  out.emplace_back(pick.layer, pick.filter, pick.norm);
              }
              return out;
          },
          py::arg("model"), py::arg("mode") = "global", py::arg("norm_p") = 2.0,
          py::arg("target_ratio") = 0.1, py::arg("min_filters") = 0);

    m.def("apply_mask",
          [](ModelGraph& g, const std::vector<std::tuple<int, int, double>>& picks) {
              apply_mask(g, selection_from_pairs(picks));
          });

    m.def("remove_output_channels",
          [](const ModelGraph& g, int layer, const std::vector<int>& channels) {
              return remove_output_channels(g, layer, std::set<int>(channels.begin(),
                                                                    channels.end()));
          });
    m.def("rebuild_without_masked", &rebuild_without_masked);

    m.def("compute_fpr", [](const ModelGraph& g) {
        const FprResult r = compute_fpr(g);
        return py::make_tuple(r.fpr_all, r.per_layer);
    });
    m.def("compute_ppr", [](const ModelGraph& g) {
        const PprResult r = compute_ppr(g);
        return py::make_tuple(r.ppr_all, r.per_layer);
    });
    m.def("compute_macs",
          [](const ModelGraph& g, bool respect_mask) {
              return compute_flops(g, respect_mask).total_macs;
          },
          py::arg("model"), py::arg("respect_mask") = true);
    m.def("report_text", [](const ModelGraph& g) { return render_report_text(make_report(g)); });
    m.def("report_text_vs",
          [](const ModelGraph& before, const ModelGraph& after) {
              return render_report_text(make_report(before, after));
          });

    m.def("save_checkpoint", [](const ModelGraph& g, const std::string& path) {
        save_checkpoint(g, path);
    });
    m.def("load_checkpoint", [](const std::string& path) { return load_checkpoint(path); });

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("images", [](const Dataset& d) { return to_numpy(d.images); })
        .def_property_readonly("labels", [](const Dataset& d) { return d.labels; })
        .def_property_readonly("num_classes", [](const Dataset& d) { return d.num_classes; })
        .def("__len__", &Dataset::size)
        .def("subset", &Dataset::subset);

    m.def("load_mnist_idx",
          [](const std::string& images, const std::string& labels) {
              return load_mnist_idx(images, labels);
          });
    m.def("make_synthetic",
          [](std::uint64_t seed, int num_classes, std::int64_t samples, int height, int width) {
              return make_synthetic({seed, num_classes, samples, height, width, 0.08});
          },
          py::arg("seed") = 0, py::arg("num_classes") = 2, py::arg("samples") = 200,
          py::arg("height") = 12, py::arg("width") = 12);
    m.def("make_digits",
          [](std::uint64_t seed, std::int64_t samples) {
              return make_digits({seed, samples, 28, 28});
          },
          py::arg("seed") = 0, py::arg("samples") = 1000);

    py::class_<RunConfig>(m, "RunConfig")
        .def(py::init<>())
        .def_readwrite("seed", &RunConfig::seed)
        .def_readwrite("preset", &RunConfig::preset)
        .def_readwrite("epochs", &RunConfig::epochs)
        .def_readwrite("batch_size", &RunConfig::batch_size)
        .def_readwrite("lr", &RunConfig::lr)
        .def_readwrite("momentum", &RunConfig::momentum)
        .def_readwrite("weight_decay", &RunConfig::weight_decay)
        .def_readwrite("eval_every", &RunConfig::eval_every)
        .def_readwrite("k", &RunConfig::k)
        .def_readwrite("ratios", &RunConfig::ratios)
        .def_readwrite("mode", &RunConfig::mode)
        .def_readwrite("norm_p", &RunConfig::norm_p)
        .def_readwrite("min_filters", &RunConfig::min_filters)
        .def_readwrite("pretrain_epochs", &RunConfig::pretrain_epochs)
        .def_readwrite("retrain_epochs", &RunConfig::retrain_epochs)
        .def_readwrite("subset", &RunConfig::subset)
        .def_readwrite("test_subset", &RunConfig::test_subset)
        .def_readwrite("out_dir", &RunConfig::out_dir);

    py::class_<RunResult>(m, "RunResult")
        .def_property_readonly("model", [](const RunResult& r) { return r.model; })
        .def_readonly("final_test_acc", &RunResult::final_test_acc)
        .def_readonly("final_train_loss", &RunResult::final_train_loss)
        .def_readonly("total_train_macs", &RunResult::total_train_macs)
        .def_readonly("prune_event_epochs", &RunResult::prune_event_epochs)
        .def_property_readonly("rebuild_epoch", [](const RunResult& r) {
            return r.rebuild_epoch ? py::cast(*r.rebuild_epoch) : py::none().cast<py::object>();
        });

    m.def("train_run", [](const ModelGraph& model, const Dataset& train, const Dataset& test,
                          const RunConfig& cfg) { return train_run(model, train, test, cfg); });
    m.def("iplt_run", [](const ModelGraph& model, const Dataset& train, const Dataset& test,
                         const RunConfig& cfg) { return iplt_run(model, train, test, cfg); });
    m.def("traditional_run",
          [](const ModelGraph& model, const Dataset& train, const Dataset& test,
             const RunConfig& cfg) { return traditional_run(model, train, test, cfg); });
}

// Python bindings for the toolkit's main operations. Arrays cross the
// boundary as numpy (float32 for signals, float64 for filter coefficients);
// heavy calls release the GIL. Invalid configurations raise ValueError via
// the standard std::invalid_argument translation.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "bbecog/analysis.hpp"
#include "bbecog/checkpoint.hpp"
#include "bbecog/data.hpp"
#include "bbecog/dsp.hpp"
#include "bbecog/harness.hpp"
#include "bbecog/model.hpp"

namespace py = pybind11;
using namespace bbecog;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor tensor_from(const FloatArray& a) {
    Shape shape(static_cast<std::size_t>(a.ndim()));
    for (py::ssize_t d = 0; d < a.ndim(); ++d) {
        shape[static_cast<std::size_t>(d)] = static_cast<std::size_t>(a.shape(d));
    }
    std::vector<float> data(static_cast<std::size_t>(a.size()));
    std::memcpy(data.data(), a.data(), data.size() * sizeof(float));
    return Tensor::from_data(std::move(shape), std::move(data));
}

py::array_t<float> numpy_from(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.rank());
    for (std::size_t d = 0; d < t.rank(); ++d) {
        shape[d] = static_cast<py::ssize_t>(t.extent(d));
    }
    py::array_t<float> out(shape);
    std::memcpy(out.mutable_data(), t.data(), t.numel() * sizeof(float));
    return out;
}

py::array_t<float> window_array(const std::vector<float>& w) {
    py::array_t<float> out({py::ssize_t(kChannels), py::ssize_t(kSamples)});
    std::memcpy(out.mutable_data(), w.data(), w.size() * sizeof(float));
    return out;
}

void set_window(std::vector<float>& w, const FloatArray& a) {
    if (a.size() != py::ssize_t(kChannels * kSamples)) {
        throw ShapeError("trial window must hold " + std::to_string(kChannels) + "x" +
                         std::to_string(kSamples) + " samples");
    }
    w.resize(kChannels * kSamples);
    std::memcpy(w.data(), a.data(), w.size() * sizeof(float));
}

// Batch inputs may come as [B, channels, t] or [B, 1, channels, t].
Tensor batch_from(const FloatArray& a) {
    Tensor t = tensor_from(a);
    if (t.rank() == 4 && t.extent(1) == 1) {
        return reshape(t, {t.extent(0), t.extent(2), t.extent(3)});
    }
    return t;
}

}  // namespace

PYBIND11_MODULE(_bbecog, m) {
    m.doc() = "Bi-band multichannel time-series classification toolkit";
    m.attr("__version__") = "0.1.0";
    m.attr("GRID_ROWS") = kGridRows;
    m.attr("GRID_COLS") = kGridCols;
    m.attr("CHANNELS") = kChannels;
    m.attr("SAMPLES") = kSamples;
    m.attr("CLASSES") = kClasses;
    m.attr("SAMPLE_RATE") = kSampleRate;
    m.attr("TRANSITION_HZ") = kTransitionHz;

    // ----- data ------------------------------------------------------------
    py::class_<CarrierSpec>(m, "CarrierSpec")
        .def(py::init<>())
        .def_readwrite("electrodes", &CarrierSpec::electrodes)
        .def_readwrite("f_lo_hz", &CarrierSpec::f_lo_hz)
        .def_readwrite("f_hi_hz", &CarrierSpec::f_hi_hz)
        .def_readwrite("amplitude", &CarrierSpec::amplitude);

    py::class_<ClassSignature>(m, "ClassSignature")
        .def(py::init<>())
        .def_readwrite("carriers", &ClassSignature::carriers);

    py::class_<SyntheticConfig>(m, "SyntheticConfig")
        .def(py::init<>())
        .def_readwrite("signatures", &SyntheticConfig::signatures,
                       "per-class signatures; container access copies, so assign "
                       "whole lists or use add_carrier")
        .def_readwrite("noise_power", &SyntheticConfig::noise_power)
        .def_readwrite("white_floor", &SyntheticConfig::white_floor)
        .def_readwrite("trials_per_class", &SyntheticConfig::trials_per_class)
        .def_readwrite("seed", &SyntheticConfig::seed)
        .def_readwrite("subject", &SyntheticConfig::subject)
        .def(
            "add_carrier",
            [](SyntheticConfig& cfg, std::size_t class_index,
               std::vector<std::size_t> electrodes, double f_lo_hz, double f_hi_hz,
               double amplitude) {
                if (class_index >= kClasses) {
                    throw ConfigError("class_index must be < " + std::to_string(kClasses));
                }
                CarrierSpec spec;
                spec.electrodes = std::move(electrodes);
                spec.f_lo_hz = f_lo_hz;
                spec.f_hi_hz = f_hi_hz;
                spec.amplitude = amplitude;
                cfg.signatures[class_index].carriers.push_back(std::move(spec));
            },
            py::arg("class_index"), py::arg("electrodes"), py::arg("f_lo_hz"),
            py::arg("f_hi_hz"), py::arg("amplitude") = 1.0,
            "append one carrier to a class signature");

    py::class_<Trial>(m, "Trial")
        .def(py::init<>())
        .def_readwrite("label", &Trial::label)
        .def_readwrite("subject", &Trial::subject)
        .def_readwrite("sample_rate", &Trial::sample_rate)
        .def_property(
            "background", [](const Trial& t) { return window_array(t.background); },
            [](Trial& t, const FloatArray& a) { set_window(t.background, a); },
            "[channels, samples] pre-stimulus window")
        .def_property(
            "active", [](const Trial& t) { return window_array(t.active); },
            [](Trial& t, const FloatArray& a) { set_window(t.active, a); },
            "[channels, samples] task window");

    py::class_<Dataset>(m, "Dataset")
        .def(py::init<>())
        .def("__len__", [](const Dataset& ds) { return ds.trials.size(); })
        .def(
            "trial",
            [](const Dataset& ds, std::size_t i) {
                if (i >= ds.trials.size()) throw py::index_error();
                return ds.trials[i];
            },
            py::arg("index"), "copy of one trial")
        .def("labels",
             [](const Dataset& ds) {
                 std::vector<int> out;
                 out.reserve(ds.trials.size());
                 for (const Trial& t : ds.trials) out.push_back(t.label);
                 return out;
             })
        .def_readwrite("class_names", &Dataset::class_names)
        .def_readwrite("provenance", &Dataset::provenance)
        .def_readonly("ground_truth", &Dataset::ground_truth);

    py::class_<FoldSplit>(m, "FoldSplit")
        .def_readonly("folds", &FoldSplit::folds)
        .def_readonly("seed", &FoldSplit::seed)
        .def_readonly("stratified", &FoldSplit::stratified);

    py::class_<CvPair>(m, "CvPair")
        .def_readonly("train", &CvPair::train)
        .def_readonly("test", &CvPair::test);

    m.def("generate_synthetic", &generate_synthetic, py::arg("config"),
          py::call_guard<py::gil_scoped_release>(),
          "labeled dataset with planted class signatures; bitwise reproducible per config");
    m.def("split_folds", &split_folds, py::arg("dataset"), py::arg("k") = 5,
          py::arg("seed") = 0, "stratified k-fold assignment over trial indices");
    m.def("iterate_cv", &iterate_cv, py::arg("split"), "train/test index pairs of a split");
    m.def(
        "normalize_trial",
        [](const Trial& t) { return numpy_from(normalize_trial(t)); }, py::arg("trial"),
        "active window z-scored by the scalar background statistics, [1, channels, samples]");
    m.def(
        "normalize_batch",
        [](const Dataset& ds, const std::vector<std::size_t>& indices) {
            std::vector<int> labels;
            Tensor x;
            {
                py::gil_scoped_release release;
                x = normalize_batch(ds, indices, &labels);
            }
            return py::make_tuple(numpy_from(x), labels);
        },
        py::arg("dataset"), py::arg("indices"),
        "([B, channels, samples] normalized inputs, labels)");
    m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"),
          py::call_guard<py::gil_scoped_release>());
    m.def("load_dataset", &load_dataset, py::arg("path"),
          py::call_guard<py::gil_scoped_release>());
    m.def("labels_csv", &labels_csv, py::arg("dataset"));

    // ----- model -----------------------------------------------------------
    py::enum_<EncoderKind>(m, "EncoderKind")
        .value("spatial3d", EncoderKind::spatial3d)
        .value("spatial2d", EncoderKind::spatial2d);

    py::class_<KernelGroup>(m, "KernelGroup")
        .def(py::init([](std::size_t length, std::size_t count) {
                 return KernelGroup{length, count};
             }),
             py::arg("length") = 32, py::arg("count") = 1)
        .def_readwrite("length", &KernelGroup::length)
        .def_readwrite("count", &KernelGroup::count);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("n_tcn", &ModelConfig::n_tcn)
        .def_readwrite("kernel_lengths", &ModelConfig::kernel_lengths)
        .def_readwrite("encoder", &ModelConfig::encoder)
        .def_readwrite("grid_rows", &ModelConfig::grid_rows)
        .def_readwrite("grid_cols", &ModelConfig::grid_cols)
        .def_readwrite("t_active", &ModelConfig::t_active)
        .def_readwrite("n_classes", &ModelConfig::n_classes)
        .def_readwrite("fusion_kernel", &ModelConfig::fusion_kernel)
        .def_readwrite("pool1", &ModelConfig::pool1)
        .def_readwrite("pool2", &ModelConfig::pool2)
        .def_readwrite("tcn_bias", &ModelConfig::tcn_bias);

    m.def("validate_model_config", static_cast<void (*)(const ModelConfig&)>(&validate),
          py::arg("config"));
    m.def("serialize_config", &serialize_config, py::arg("config"));
    m.def("parse_config", &parse_config, py::arg("text"));

    py::class_<Model>(m, "Model")
        .def_readonly("config", &Model::config);

    m.def("build_model", &build_model, py::arg("config"), py::arg("seed") = 0,
          "deterministically initialized model");
    m.def("param_count", &param_count, py::arg("model"));
    m.def(
        "logits",
        [](Model& model, const FloatArray& x) {
            Tensor batch = batch_from(x);
            Tensor out;
            {
                py::gil_scoped_release release;
                const std::size_t B = batch.extent(0);
                Tensor shaped =
                    reshape(batch, {B, 1, batch.extent(1), batch.extent(2)});
                out = forward(model, shaped, false);
            }
            return numpy_from(out);
        },
        py::arg("model"), py::arg("inputs"),
        "eval-mode class scores for [B, channels, samples] inputs");
    m.def("save_weights", &save_weights, py::arg("model"), py::arg("path"),
          py::call_guard<py::gil_scoped_release>());
    m.def(
        "load_weights",
        [](Model& model, const std::filesystem::path& path) { load_weights(model, path); },
        py::arg("model"), py::arg("path"), py::call_guard<py::gil_scoped_release>());

    // ----- training --------------------------------------------------------
    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("weight_decay", &TrainConfig::weight_decay)
        .def_readwrite("beta1", &TrainConfig::beta1)
        .def_readwrite("beta2", &TrainConfig::beta2)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("eval_every", &TrainConfig::eval_every)
        .def_readwrite("checkpoint_path", &TrainConfig::checkpoint_path)
        .def_readwrite("metrics_path", &TrainConfig::metrics_path);

    m.def("reference_preset", &reference_preset, "the full-scale training recipe");
    m.def("validate_train_config", static_cast<void (*)(const TrainConfig&)>(&validate),
          py::arg("config"));

    py::class_<EpochRecord>(m, "EpochRecord")
        .def_readonly("epoch", &EpochRecord::epoch)
        .def_readonly("train_loss", &EpochRecord::train_loss)
        .def_readonly("train_accuracy", &EpochRecord::train_accuracy)
        .def_readonly("test_accuracy", &EpochRecord::test_accuracy)
        .def_readonly("seconds", &EpochRecord::seconds);

    py::class_<RunMetrics>(m, "RunMetrics")
        .def_readonly("epochs", &RunMetrics::epochs)
        .def_readonly("final_test_accuracy", &RunMetrics::final_test_accuracy)
        .def_readonly("fold_accuracies", &RunMetrics::fold_accuracies)
        .def_readonly("mean_accuracy", &RunMetrics::mean_accuracy)
        .def_readonly("std_accuracy", &RunMetrics::std_accuracy);

    m.def(
        "train",
        [](Model& model, const FloatArray& train_x, std::vector<int> train_y,
           const FloatArray& test_x, std::vector<int> test_y, const TrainConfig& cfg) {
            Tensor tx = batch_from(train_x), ex = batch_from(test_x);
            py::gil_scoped_release release;
            return train(model, tx, train_y, ex, test_y, cfg);
        },
        py::arg("model"), py::arg("train_inputs"), py::arg("train_labels"),
        py::arg("test_inputs"), py::arg("test_labels"), py::arg("config"),
        "one training run over pre-normalized tensors");
    m.def(
        "evaluate",
        [](Model& model, const FloatArray& x, std::vector<int> labels,
           std::size_t batch_size) {
            Tensor inputs = batch_from(x);
            py::gil_scoped_release release;
            return evaluate(model, inputs, labels, batch_size);
        },
        py::arg("model"), py::arg("inputs"), py::arg("labels"), py::arg("batch_size") = 128);
    m.def("run_cv", &run_cv, py::arg("dataset"), py::arg("model_config"),
          py::arg("train_config"), py::arg("k") = 5,
          py::arg("out_dir") = std::filesystem::path(),
          py::call_guard<py::gil_scoped_release>(),
          "stratified k-fold cross-validation; returns aggregate metrics");
    m.def("benchmark_epoch", &benchmark_epoch, py::arg("model_config"), py::arg("n_trials"),
          py::arg("batch_size") = 128, py::arg("n_epochs") = 3,
          py::call_guard<py::gil_scoped_release>(),
          "median wall-clock seconds per training epoch on random data");

    // ----- dsp -------------------------------------------------------------
    py::class_<FilterSpec>(m, "FilterSpec")
        .def(py::init<>())
        .def_readwrite("f_lo", &FilterSpec::f_lo)
        .def_readwrite("f_hi", &FilterSpec::f_hi)
        .def_readwrite("sample_rate", &FilterSpec::sample_rate)
        .def_readwrite("n_taps", &FilterSpec::n_taps);

    m.def("design_bandpass", &design_bandpass, py::arg("spec"),
          "least-squares linear-phase band-pass coefficients with an exact DC zero");
    m.def("magnitude_response", &magnitude_response, py::arg("coefficients"),
          py::arg("f_hz"), py::arg("sample_rate"));
    m.def("build_filter_bank", &build_filter_bank, py::arg("sample_rate") = kSampleRate,
          py::arg("n_taps") = std::size_t{501},
          "the 100-band sweep schedule: 5 Hz bands stepping 3 Hz from 1 Hz");
    m.def("coefficients_csv", &coefficients_csv, py::arg("spec"), py::arg("coefficients"));

    py::class_<ZeroPhaseFilter>(m, "ZeroPhaseFilter")
        .def(py::init<std::vector<double>>(), py::arg("coefficients"))
        .def(
            "apply",
            [](const ZeroPhaseFilter& f, const FloatArray& rows) {
                if (rows.ndim() != 2) throw ShapeError("rows must be 2-D [n_rows, t]");
                const std::size_t n = rows.shape(0), t = rows.shape(1);
                py::array_t<float> out({py::ssize_t(n), py::ssize_t(t)});
                py::gil_scoped_release release;
                f.apply_fft(rows.data(), n, t, out.mutable_data());
                return out;
            },
            py::arg("rows"),
            "forward-backward filtering (net response |H|^2, zero delay) per row")
        .def_property_readonly("pad", &ZeroPhaseFilter::pad);

    // ----- analysis --------------------------------------------------------
    py::enum_<ReportKind>(m, "ReportKind")
        .value("frequency", ReportKind::frequency)
        .value("channel", ReportKind::channel);

    py::class_<BandAccuracy>(m, "BandAccuracy")
        .def_readonly("f_lo", &BandAccuracy::f_lo)
        .def_readonly("f_hi", &BandAccuracy::f_hi)
        .def_readonly("accuracy", &BandAccuracy::accuracy);

    py::class_<ImportanceReport>(m, "ImportanceReport")
        .def_readonly("kind", &ImportanceReport::kind)
        .def_readonly("bands", &ImportanceReport::bands)
        .def_property_readonly(
            "channel_drops",
            [](const ImportanceReport& rep) {
                if (rep.channel_drops.size() == kChannels) {
                    py::array_t<double> out(
                        {py::ssize_t(kGridRows), py::ssize_t(kGridCols)});
                    std::memcpy(out.mutable_data(), rep.channel_drops.data(),
                                rep.channel_drops.size() * sizeof(double));
                    return out;
                }
                py::array_t<double> out(py::ssize_t(rep.channel_drops.size()));
                std::memcpy(out.mutable_data(), rep.channel_drops.data(),
                            rep.channel_drops.size() * sizeof(double));
                return out;
            },
            "accuracy drop per zeroed channel on the electrode grid")
        .def_readonly("baseline_accuracy", &ImportanceReport::baseline_accuracy)
        .def_readonly("model_id", &ImportanceReport::model_id)
        .def_readonly("dataset_id", &ImportanceReport::dataset_id)
        .def_readonly("timestamp", &ImportanceReport::timestamp)
        .def_readonly("notes", &ImportanceReport::notes);

    py::class_<CrossSubjectMatrix>(m, "CrossSubjectMatrix")
        .def_readonly("sources", &CrossSubjectMatrix::sources)
        .def_readonly("accuracy", &CrossSubjectMatrix::accuracy);

    m.def("frequency_importance", &frequency_importance, py::arg("model"),
          py::arg("dataset"), py::arg("indices"), py::arg("bank"),
          py::arg("batch_size") = 128, py::call_guard<py::gil_scoped_release>(),
          "per-band accuracy after zero-phase filtering and renormalization");
    m.def("channel_importance", &channel_importance, py::arg("model"), py::arg("dataset"),
          py::arg("indices"), py::arg("batch_size") = 128,
          py::call_guard<py::gil_scoped_release>(),
          "accuracy drop from zeroing each channel in turn");
    m.def(
        "cross_subject_eval",
        [](std::vector<Model> models, const std::vector<FloatArray>& test_inputs,
           const std::vector<std::vector<int>>& test_labels,
           const std::vector<std::string>& sources, std::size_t batch_size) {
            std::vector<Tensor> xs;
            xs.reserve(test_inputs.size());
            for (const FloatArray& a : test_inputs) xs.push_back(batch_from(a));
            py::gil_scoped_release release;
            return cross_subject_eval(models, xs, test_labels, sources, batch_size);
        },
        py::arg("models"), py::arg("test_inputs"), py::arg("test_labels"),
        py::arg("sources"), py::arg("batch_size") = 128,
        "every model scored on every source's held-out tensors");

    py::enum_<HeatmapFormat>(m, "HeatmapFormat")
        .value("csv", HeatmapFormat::csv)
        .value("pgm", HeatmapFormat::pgm);

    m.def("export_heatmap", &export_heatmap, py::arg("report"), py::arg("path"),
          py::arg("format"), "render a channel report's drop grid to CSV or PGM");
    m.def("report_json", &report_json, py::arg("report"));
    m.def("cross_subject_csv", &cross_subject_csv, py::arg("matrix"));
}

// bbecog: command-line front end for the toolkit.
//
// One subcommand per workflow: gen-data, train, eval, freq-test, chan-test,
// cross-subject, sweep, export-heatmap, bench. Flags are validated before any
// file is touched, every run leaves a manifest.json (full config, input
// hashes, output names) in its --out directory, and exit codes are 0 on
// success, 1 on a usage error, 2 on a runtime failure.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bbecog/analysis.hpp"
#include "bbecog/checkpoint.hpp"
#include "bbecog/common.hpp"
#include "bbecog/data.hpp"
#include "bbecog/dsp.hpp"
#include "bbecog/harness.hpp"
#include "bbecog/model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bbecog;

namespace {

// A problem with the invocation itself (bad flag value, missing input file):
// reported with exit code 1, as opposed to failures of the work (exit 2).
struct Usage : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_input(const std::string& path, const std::string& flag) {
    if (path.empty()) throw Usage(flag + " is required");
    if (!fs::exists(path)) {
        throw Usage(flag + ": input file not found: " + path);
    }
    if (fs::is_directory(path)) {
        throw Usage(flag + ": expected a file, got a directory: " + path);
    }
}

// Rethrows configuration complaints as usage errors: during the validation
// phase every bad value traces back to a flag the caller can fix.
template <class F>
auto as_usage(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw Usage(e.what());
    }
}

std::string kernels_to_string(const std::vector<KernelGroup>& groups) {
    std::ostringstream os;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (i) os << ',';
        os << groups[i].length << 'x' << groups[i].count;
    }
    return os.str();
}

std::string format_double(double v, int precision = 17) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

void write_manifest(const fs::path& out_dir, const std::string& command, const json& config,
                    const std::vector<std::string>& input_paths,
                    const std::vector<std::string>& outputs) {
    json m;
    m["command"] = command;
    m["timestamp"] = utc_timestamp();
    m["config"] = config;
    json inputs = json::object();
    for (const std::string& p : input_paths) inputs[p] = file_hash_hex(p);
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    write_file_atomic(out_dir / "manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Shared flag bundles
// ---------------------------------------------------------------------------

// Model architecture flags, mirroring the config file keys. --config loads a
// file written by `train` (or by hand); explicit flags override it.
struct ModelFlags {
    std::string config_path;
    std::string kernels;
    std::size_t n_tcn = 0;
    std::string encoder;

    CLI::Option* kernels_opt = nullptr;
    CLI::Option* n_tcn_opt = nullptr;
    CLI::Option* encoder_opt = nullptr;

    void attach(CLI::App* sub) {
        sub->add_option("--config", config_path,
                        "model config file (as written by train); flags below override it");
        kernels_opt = sub->add_option(
            "--kernels", kernels,
            "kernel groups as LENGTHxCOUNT[,LENGTHxCOUNT...], e.g. 32x32,512x32");
        n_tcn_opt = sub->add_option("--n-tcn", n_tcn,
                                    "total TCN count (defaults to the kernel-group sum)");
        encoder_opt = sub->add_option("--encoder", encoder, "spatial3d or spatial2d")
                          ->check(CLI::IsMember({"spatial3d", "spatial2d"}));
    }

    ModelConfig resolve() const {
        return as_usage([&] {
            ModelConfig cfg;
            if (!config_path.empty()) {
                require_input(config_path, "--config");
                cfg = parse_config(read_file(config_path));
            }
            if (kernels_opt->count() > 0) {
                cfg.kernel_lengths = parse_config("kernel_lengths=" + kernels).kernel_lengths;
            }
            if (encoder_opt->count() > 0) {
                cfg.encoder = parse_config("encoder=" + encoder).encoder;
            }
            if (n_tcn_opt->count() > 0) {
                cfg.n_tcn = n_tcn;
            } else if (kernels_opt->count() > 0) {
                std::size_t total = 0;
                for (const KernelGroup& g : cfg.kernel_lengths) total += g.count;
                cfg.n_tcn = total;
            }
            validate(cfg);
            return cfg;
        });
    }
};

// Optimizer/schedule flags. Values start at the named preset (the only preset
// is the full-scale recipe) and each explicit flag overrides one field.
struct TrainFlags {
    std::string preset = "reference";
    TrainConfig cfg = reference_preset();
    std::size_t folds = 5;

    void attach(CLI::App* sub, bool with_folds = true) {
        sub->add_option("--preset", preset, "training recipe to start from")
            ->check(CLI::IsMember({"reference"}));
        sub->add_option("--epochs", cfg.epochs, "training epochs")->capture_default_str();
        sub->add_option("--batch-size", cfg.batch_size, "minibatch size")->capture_default_str();
        sub->add_option("--lr", cfg.lr, "Adam learning rate")->capture_default_str();
        sub->add_option("--weight-decay", cfg.weight_decay, "L2 weight decay")->capture_default_str();
        sub->add_option("--beta1", cfg.beta1, "Adam beta1")->capture_default_str();
        sub->add_option("--beta2", cfg.beta2, "Adam beta2")->capture_default_str();
        sub->add_option("--seed", cfg.seed, "base seed for init and shuffling")->capture_default_str();
        sub->add_option("--eval-every", cfg.eval_every, "epochs between test evaluations")->capture_default_str();
        if (with_folds) {
            sub->add_option("--folds", folds, "cross-validation folds")->capture_default_str()
                ->check(CLI::Range(std::size_t{2}, std::size_t{100}));
        }
    }

    void check() const { as_usage([&] { validate(cfg); }); }

    json to_json() const {
        return json{{"preset", preset},
                    {"epochs", cfg.epochs},
                    {"batch_size", cfg.batch_size},
                    {"lr", cfg.lr},
                    {"weight_decay", cfg.weight_decay},
                    {"beta1", cfg.beta1},
                    {"beta2", cfg.beta2},
                    {"seed", cfg.seed},
                    {"eval_every", cfg.eval_every}};
    }
};

json model_json(const ModelConfig& cfg) {
    return json{{"n_tcn", cfg.n_tcn},
                {"kernel_lengths", kernels_to_string(cfg.kernel_lengths)},
                {"encoder", cfg.encoder == EncoderKind::spatial3d ? "spatial3d" : "spatial2d"},
                {"config_text", serialize_config(cfg)}};
}

std::string live_model_id(const Model& m) {
    return fnv1a64_hex(serialize_checkpoint(model_arrays(m)));
}

// First --max-trials indices, or empty (meaning "all") when the cap is 0.
std::vector<std::size_t> head_indices(const Dataset& ds, std::size_t max_trials) {
    std::vector<std::size_t> idx;
    if (max_trials > 0 && max_trials < ds.trials.size()) {
        idx.resize(max_trials);
        for (std::size_t i = 0; i < max_trials; ++i) idx[i] = i;
    }
    return idx;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenFlags {
    std::size_t classes = kClasses;
    std::size_t trials_per_class = 100;
    std::vector<std::string> bands;
    std::vector<double> amplitudes;
    std::size_t cluster_size = 3;
    std::size_t cluster_offset = 0;
    double noise_power = 0.02;
    double white_floor = 0.01;
    std::uint64_t seed = 0;
    std::string subject = "S1";
    std::string out;
};

std::pair<double, double> parse_band(const std::string& s) {
    const std::size_t colon = s.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == s.size()) {
        throw Usage("--band: expected LO:HI in Hz, got '" + s + "'");
    }
    try {
        std::size_t used = 0;
        const double lo = std::stod(s.substr(0, colon), &used);
        if (used != colon) throw std::invalid_argument(s);
        const std::string hi_text = s.substr(colon + 1);
        const double hi = std::stod(hi_text, &used);
        if (used != hi_text.size()) throw std::invalid_argument(s);
        if (!(lo > 0.0) || !(hi > lo)) {
            throw Usage("--band: need 0 < LO < HI, got '" + s + "'");
        }
        return {lo, hi};
    } catch (const std::invalid_argument&) {
        throw Usage("--band: expected LO:HI in Hz, got '" + s + "'");
    } catch (const std::out_of_range&) {
        throw Usage("--band: value out of range in '" + s + "'");
    }
}

void run_gen_data(const GenFlags& gf) {
    if (gf.classes != kClasses) {
        throw Usage("--classes: this build is compiled for exactly " +
                    std::to_string(kClasses) + " classes");
    }
    if (gf.trials_per_class == 0) throw Usage("--trials-per-class must be positive");
    if (gf.cluster_size == 0) throw Usage("--cluster-size must be positive");

    std::vector<std::string> band_texts = gf.bands;
    if (band_texts.empty()) band_texts.push_back("10:15");
    std::vector<std::pair<double, double>> bands;
    for (const std::string& b : band_texts) bands.push_back(parse_band(b));

    std::vector<double> amps = gf.amplitudes;
    if (amps.empty()) amps.push_back(16.0);
    if (amps.size() == 1) amps.resize(bands.size(), amps[0]);
    if (amps.size() != bands.size()) {
        throw Usage("--amplitude: give one value, or one per --band (got " +
                    std::to_string(amps.size()) + " for " + std::to_string(bands.size()) +
                    " bands)");
    }
    for (double a : amps) {
        if (!(a > 0.0)) throw Usage("--amplitude values must be positive");
    }

    // Class clusters are laid out every kStride channels so the six of them
    // spread over the 8x16 grid without overlap.
    constexpr std::size_t kStride = 21;
    const std::size_t last = gf.cluster_offset + kStride * (kClasses - 1) + gf.cluster_size;
    if (last > kChannels) {
        throw Usage("--cluster-size/--cluster-offset: the last cluster would end at channel " +
                    std::to_string(last) + " but the grid has " + std::to_string(kChannels));
    }

    SyntheticConfig cfg;
    cfg.trials_per_class = gf.trials_per_class;
    cfg.noise_power = gf.noise_power;
    cfg.white_floor = gf.white_floor;
    cfg.seed = gf.seed;
    cfg.subject = gf.subject;
    for (std::size_t c = 0; c < kClasses; ++c) {
        std::vector<std::size_t> electrodes(gf.cluster_size);
        for (std::size_t j = 0; j < gf.cluster_size; ++j) {
            electrodes[j] = gf.cluster_offset + kStride * c + j;
        }
        for (std::size_t b = 0; b < bands.size(); ++b) {
            CarrierSpec spec;
            spec.electrodes = electrodes;
            spec.f_lo_hz = bands[b].first;
            spec.f_hi_hz = bands[b].second;
            spec.amplitude = amps[b];
            cfg.signatures[c].carriers.push_back(spec);
        }
    }

    // Everything the generator rejects here traces back to a flag value.
    Dataset ds = as_usage([&] { return generate_synthetic(cfg); });

    fs::create_directories(gf.out);
    save_dataset(ds, fs::path(gf.out) / "set.ecog");

    json truth = json::array();
    for (const ClassSignature& sig : ds.ground_truth) {
        json carriers = json::array();
        for (const CarrierSpec& c : sig.carriers) {
            carriers.push_back({{"electrodes", c.electrodes},
                                {"f_lo_hz", c.f_lo_hz},
                                {"f_hi_hz", c.f_hi_hz},
                                {"amplitude", c.amplitude}});
        }
        truth.push_back({{"carriers", carriers}});
    }
    write_file_atomic(fs::path(gf.out) / "ground_truth.json",
                      json{{"classes", truth}}.dump(2) + "\n");

    json config{{"classes", gf.classes},
                {"trials_per_class", gf.trials_per_class},
                {"bands", band_texts},
                {"amplitudes", amps},
                {"cluster_size", gf.cluster_size},
                {"cluster_offset", gf.cluster_offset},
                {"noise_power", gf.noise_power},
                {"white_floor", gf.white_floor},
                {"seed", gf.seed},
                {"subject", gf.subject}};
    write_manifest(gf.out, "gen-data", config, {}, {"set.ecog", "ground_truth.json"});

    std::cout << "wrote " << ds.trials.size() << " trials (" << gf.trials_per_class
              << " per class) to " << (fs::path(gf.out) / "set.ecog").string() << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainTask {
    std::string data;
    std::string out;
    ModelFlags model;
    TrainFlags train;
};

void run_train(const TrainTask& t) {
    require_input(t.data, "--data");
    const ModelConfig mcfg = t.model.resolve();
    t.train.check();

    Dataset ds = load_dataset(t.data);
    fs::create_directories(t.out);

    const std::size_t params = param_count(build_model(mcfg, t.train.cfg.seed));
    std::cout << "training " << t.train.folds << " folds x " << t.train.cfg.epochs
              << " epochs (" << params << " parameters)" << std::endl;

    RunMetrics rm = run_cv(ds, mcfg, t.train.cfg, t.train.folds, t.out);

    write_file_atomic(fs::path(t.out) / "model.cfg", serialize_config(mcfg));
    json summary{{"fold_accuracies", rm.fold_accuracies},
                 {"mean_accuracy", rm.mean_accuracy},
                 {"std_accuracy", rm.std_accuracy},
                 {"param_count", params}};
    write_file_atomic(fs::path(t.out) / "cv_summary.json", summary.dump(2) + "\n");

    std::vector<std::string> outputs{"model.cfg", "cv_summary.json"};
    for (std::size_t f = 0; f < t.train.folds; ++f) {
        outputs.push_back("fold" + std::to_string(f) + ".bben");
        outputs.push_back("fold" + std::to_string(f) + ".ndjson");
    }
    json config{{"data", t.data},
                {"folds", t.train.folds},
                {"model", model_json(mcfg)},
                {"train", t.train.to_json()}};
    write_manifest(t.out, "train", config, {t.data}, outputs);

    std::cout << "cv accuracy: " << format_double(rm.mean_accuracy, 4) << " +/- "
              << format_double(rm.std_accuracy, 4) << " over " << t.train.folds << " folds\n";
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalTask {
    std::string model_path;
    std::string data;
    std::string out;
    std::size_t batch_size = 128;
    ModelFlags model;
};

void run_eval(const EvalTask& t) {
    require_input(t.model_path, "--model");
    require_input(t.data, "--data");
    const ModelConfig mcfg = t.model.resolve();
    if (t.batch_size == 0) throw Usage("--batch-size must be positive");

    Dataset ds = load_dataset(t.data);
    Model m = build_model(mcfg, 0);
    load_weights(m, t.model_path);

    std::vector<int> labels;
    Tensor x = normalize_batch(ds, all_indices(ds.trials.size()), &labels);
    const double acc = evaluate(m, x, labels, t.batch_size);

    fs::create_directories(t.out);
    json result{{"accuracy", acc},
                {"n_trials", ds.trials.size()},
                {"model_id", live_model_id(m)},
                {"dataset_id", fnv1a64_hex(serialize_dataset(ds))}};
    write_file_atomic(fs::path(t.out) / "eval.json", result.dump(2) + "\n");

    json config{{"model", t.model_path},
                {"data", t.data},
                {"batch_size", t.batch_size},
                {"model_config", model_json(mcfg)}};
    write_manifest(t.out, "eval", config, {t.model_path, t.data}, {"eval.json"});

    std::cout << "accuracy: " << format_double(acc, 6) << " (n=" << ds.trials.size() << ")\n";
}

// ---------------------------------------------------------------------------
// freq-test / chan-test
// ---------------------------------------------------------------------------

struct ImportanceTask {
    std::string model_path;
    std::string data;
    std::string out;
    std::size_t batch_size = 128;
    std::size_t max_trials = 0;
    std::size_t n_taps = 501;
    ModelFlags model;
};

void attach_importance(CLI::App* sub, ImportanceTask& t, bool with_taps) {
    sub->add_option("--model", t.model_path, "checkpoint to probe")->required();
    sub->add_option("--data", t.data, "dataset file")->required();
    sub->add_option("--batch-size", t.batch_size, "evaluation batch size")->capture_default_str();
    sub->add_option("--max-trials", t.max_trials,
                    "score only the first N trials (0 = all)")->capture_default_str();
    if (with_taps) {
        sub->add_option("--taps", t.n_taps, "FIR tap count for the band filters")->capture_default_str();
    }
    t.model.attach(sub);
    sub->add_option("--out", t.out, "output directory")->required();
}

void run_freq_test(const ImportanceTask& t) {
    require_input(t.model_path, "--model");
    require_input(t.data, "--data");
    const ModelConfig mcfg = t.model.resolve();
    if (t.batch_size == 0) throw Usage("--batch-size must be positive");
    if (t.n_taps % 2 == 0 || t.n_taps < 3) throw Usage("--taps must be odd and at least 3");

    Dataset ds = load_dataset(t.data);
    Model m = build_model(mcfg, 0);
    load_weights(m, t.model_path);

    const std::vector<FilterSpec> bank = build_filter_bank(kSampleRate, t.n_taps);
    std::cout << "sweeping " << bank.size() << " bands over "
              << (t.max_trials > 0 ? std::min(t.max_trials, ds.trials.size())
                                   : ds.trials.size())
              << " trials" << std::endl;
    ImportanceReport report =
        frequency_importance(m, ds, head_indices(ds, t.max_trials), bank, t.batch_size);

    fs::create_directories(t.out);
    write_file_atomic(fs::path(t.out) / "freq_report.json", report_json(report));
    std::ostringstream csv;
    csv.precision(17);
    csv << "f_lo_hz,f_hi_hz,accuracy\n";
    for (const BandAccuracy& band : report.bands) {
        csv << band.f_lo << ',' << band.f_hi << ',' << band.accuracy << '\n';
    }
    write_file_atomic(fs::path(t.out) / "freq_bands.csv", csv.str());

    json config{{"model", t.model_path},
                {"data", t.data},
                {"batch_size", t.batch_size},
                {"max_trials", t.max_trials},
                {"taps", t.n_taps},
                {"n_bands", bank.size()},
                {"model_config", model_json(mcfg)}};
    write_manifest(t.out, "freq-test", config, {t.model_path, t.data},
                   {"freq_report.json", "freq_bands.csv"});

    const auto best = std::max_element(
        report.bands.begin(), report.bands.end(),
        [](const BandAccuracy& a, const BandAccuracy& b) { return a.accuracy < b.accuracy; });
    std::cout << "baseline " << format_double(report.baseline_accuracy, 4) << "; best band "
              << best->f_lo << "-" << best->f_hi << " Hz at "
              << format_double(best->accuracy, 4) << "\n";
}

void run_chan_test(const ImportanceTask& t) {
    require_input(t.model_path, "--model");
    require_input(t.data, "--data");
    const ModelConfig mcfg = t.model.resolve();
    if (t.batch_size == 0) throw Usage("--batch-size must be positive");

    Dataset ds = load_dataset(t.data);
    Model m = build_model(mcfg, 0);
    load_weights(m, t.model_path);

    ImportanceReport report =
        channel_importance(m, ds, head_indices(ds, t.max_trials), t.batch_size);

    fs::create_directories(t.out);
    write_file_atomic(fs::path(t.out) / "chan_report.json", report_json(report));
    export_heatmap(report, fs::path(t.out) / "heatmap.csv", HeatmapFormat::csv);
    export_heatmap(report, fs::path(t.out) / "heatmap.pgm", HeatmapFormat::pgm);

    json config{{"model", t.model_path},
                {"data", t.data},
                {"batch_size", t.batch_size},
                {"max_trials", t.max_trials},
                {"model_config", model_json(mcfg)}};
    write_manifest(t.out, "chan-test", config, {t.model_path, t.data},
                   {"chan_report.json", "heatmap.csv", "heatmap.pgm"});

    const std::size_t arg = static_cast<std::size_t>(
        std::max_element(report.channel_drops.begin(), report.channel_drops.end()) -
        report.channel_drops.begin());
    std::cout << "baseline " << format_double(report.baseline_accuracy, 4)
              << "; largest drop at channel " << arg << " (row " << arg / kGridCols
              << ", col " << arg % kGridCols << "): "
              << format_double(report.channel_drops[arg], 4) << "\n";
}

// ---------------------------------------------------------------------------
// cross-subject
// ---------------------------------------------------------------------------

struct CrossTask {
    std::vector<std::string> datas;
    std::string out;
    ModelFlags model;
    TrainFlags train;
};

void run_cross_subject(const CrossTask& t) {
    if (t.datas.size() < 2) throw Usage("--data: give at least two dataset files");
    for (const std::string& d : t.datas) require_input(d, "--data");
    const ModelConfig mcfg = t.model.resolve();
    t.train.check();

    fs::create_directories(t.out);

    std::vector<Model> models;
    std::vector<Tensor> test_xs;
    std::vector<std::vector<int>> test_ys;
    std::vector<std::string> names;
    std::set<std::string> seen;
    std::vector<std::string> outputs;

    for (std::size_t i = 0; i < t.datas.size(); ++i) {
        Dataset ds = load_dataset(t.datas[i]);
        std::string name = ds.trials.empty() ? "" : ds.trials[0].subject;
        if (name.empty()) name = fs::path(t.datas[i]).stem().string();
        if (!seen.insert(name).second) name += "#" + std::to_string(i);
        names.push_back(name);

        FoldSplit split = split_folds(ds, t.train.folds, t.train.cfg.seed);
        CvPair pair = iterate_cv(split)[0];
        std::vector<int> train_y, test_y;
        Tensor train_x = normalize_batch(ds, pair.train, &train_y);
        Tensor test_x = normalize_batch(ds, pair.test, &test_y);

        TrainConfig fold_cfg = t.train.cfg;
        fold_cfg.seed = t.train.cfg.seed + i;
        const std::string stem = "source" + std::to_string(i);
        fold_cfg.checkpoint_path = fs::path(t.out) / (stem + ".bben");
        fold_cfg.metrics_path = fs::path(t.out) / (stem + ".ndjson");
        outputs.push_back(stem + ".bben");
        outputs.push_back(stem + ".ndjson");

        std::cout << "training source " << i << " (" << name << "): " << pair.train.size()
                  << " train / " << pair.test.size() << " test trials" << std::endl;
        Model m = build_model(mcfg, fold_cfg.seed);
        RunMetrics rm = train(m, train_x, train_y, test_x, test_y, fold_cfg);
        std::cout << "  held-out accuracy " << format_double(rm.final_test_accuracy, 4)
                  << std::endl;

        models.push_back(std::move(m));
        test_xs.push_back(std::move(test_x));
        test_ys.push_back(std::move(test_y));
    }

    CrossSubjectMatrix matrix =
        cross_subject_eval(models, test_xs, test_ys, names, t.train.cfg.batch_size);
    const std::string csv = cross_subject_csv(matrix);
    write_file_atomic(fs::path(t.out) / "cross_subject.csv", csv);
    write_file_atomic(fs::path(t.out) / "model.cfg", serialize_config(mcfg));
    outputs.push_back("cross_subject.csv");
    outputs.push_back("model.cfg");

    json config{{"data", t.datas},
                {"folds", t.train.folds},
                {"model", model_json(mcfg)},
                {"train", t.train.to_json()}};
    std::vector<std::string> inputs(t.datas.begin(), t.datas.end());
    write_manifest(t.out, "cross-subject", config, inputs, outputs);

    std::cout << csv;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepTask {
    std::string data;
    std::string out;
    std::vector<std::size_t> n_tcns;
    std::vector<std::string> kernel_sets;
    std::vector<std::string> encoders;
    std::size_t jobs = 1;
    TrainFlags train;
};

std::vector<std::size_t> parse_kernel_set(const std::string& s) {
    std::vector<std::size_t> lengths;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, '+')) {
        if (item.empty()) throw Usage("--kernel-set: empty length in '" + s + "'");
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(item, &used);
            if (used != item.size() || v == 0) throw std::invalid_argument(item);
            lengths.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw Usage("--kernel-set: expected lengths joined by '+', e.g. 32+512, got '" + s +
                        "'");
        }
    }
    if (lengths.empty()) throw Usage("--kernel-set: no lengths in '" + s + "'");
    return lengths;
}

// n TCNs dealt across the set's lengths, first groups taking the remainder.
std::vector<KernelGroup> deal_kernels(const std::vector<std::size_t>& lengths, std::size_t n) {
    std::vector<KernelGroup> groups;
    const std::size_t k = lengths.size();
    for (std::size_t i = 0; i < k; ++i) {
        groups.push_back({lengths[i], n / k + (i < n % k ? 1 : 0)});
    }
    return groups;
}

void run_sweep(const SweepTask& t) {
    require_input(t.data, "--data");
    t.train.check();
    if (t.jobs == 0) throw Usage("--jobs must be positive");

    std::vector<std::size_t> n_tcns = t.n_tcns.empty() ? std::vector<std::size_t>{64} : t.n_tcns;
    std::vector<std::string> set_texts =
        t.kernel_sets.empty() ? std::vector<std::string>{"32+512"} : t.kernel_sets;
    std::vector<std::string> encoders =
        t.encoders.empty() ? std::vector<std::string>{"spatial3d"} : t.encoders;

    std::vector<std::vector<std::size_t>> sets;
    for (const std::string& s : set_texts) sets.push_back(parse_kernel_set(s));
    for (const std::string& e : encoders) {
        if (e != "spatial3d" && e != "spatial2d") {
            throw Usage("--encoder: expected spatial3d or spatial2d, got '" + e + "'");
        }
    }

    Dataset ds = load_dataset(t.data);
    fs::create_directories(t.out);

    const std::size_t total = n_tcns.size() * sets.size() * encoders.size();
    std::ostringstream csv;
    csv << "n_tcn,kernel_set,encoder,param_count,mean_accuracy,std_accuracy,status,detail\n";
    std::vector<std::string> outputs{"sweep.csv"};

    std::size_t cell = 0;
    for (std::size_t a = 0; a < n_tcns.size(); ++a) {
        for (std::size_t b = 0; b < sets.size(); ++b) {
            for (std::size_t c = 0; c < encoders.size(); ++c, ++cell) {
                ModelConfig mcfg;
                mcfg.n_tcn = n_tcns[a];
                mcfg.kernel_lengths = deal_kernels(sets[b], n_tcns[a]);
                mcfg.encoder =
                    encoders[c] == "spatial3d" ? EncoderKind::spatial3d : EncoderKind::spatial2d;

                std::ostringstream tag;
                tag << "cell" << std::setw(2) << std::setfill('0') << cell;
                std::cout << "cell " << (cell + 1) << "/" << total << ": n_tcn=" << n_tcns[a]
                          << " kernel-set=" << set_texts[b] << " encoder=" << encoders[c]
                          << " ... " << std::flush;
                csv << n_tcns[a] << ',' << set_texts[b] << ',' << encoders[c] << ',';
                try {
                    validate(mcfg);
                    const fs::path cell_dir = fs::path(t.out) / tag.str();
                    fs::create_directories(cell_dir);
                    RunMetrics rm = run_cv(ds, mcfg, t.train.cfg, t.train.folds, cell_dir);
                    const std::size_t params =
                        param_count(build_model(mcfg, t.train.cfg.seed));
                    write_file_atomic(cell_dir / "model.cfg", serialize_config(mcfg));
                    csv << params << ',' << format_double(rm.mean_accuracy) << ','
                        << format_double(rm.std_accuracy) << ",ok,\n";
                    outputs.push_back(tag.str());
                    std::cout << format_double(rm.mean_accuracy, 4) << " +/- "
                              << format_double(rm.std_accuracy, 4) << std::endl;
                } catch (const std::exception& e) {
                    csv << ",,,failed," << csv_quote(e.what()) << '\n';
                    std::cout << "failed: " << e.what() << std::endl;
                }
            }
        }
    }

    write_file_atomic(fs::path(t.out) / "sweep.csv", csv.str());
    json config{{"data", t.data},
                {"n_tcn", n_tcns},
                {"kernel_sets", set_texts},
                {"encoders", encoders},
                {"folds", t.train.folds},
                {"jobs", t.jobs},
                {"train", t.train.to_json()}};
    write_manifest(t.out, "sweep", config, {t.data}, outputs);
    std::cout << "wrote " << total << " rows to " << (fs::path(t.out) / "sweep.csv").string()
              << "\n";
}

// ---------------------------------------------------------------------------
// export-heatmap
// ---------------------------------------------------------------------------

struct ExportTask {
    std::string report_path;
    std::string format = "pgm";
    std::string out;
};

void run_export_heatmap(const ExportTask& t) {
    require_input(t.report_path, "--report");

    ImportanceReport report;
    try {
        const json j = json::parse(read_file(t.report_path));
        const std::string kind = j.at("kind").get<std::string>();
        if (kind != "channel") {
            throw std::runtime_error("kind is '" + kind +
                                     "'; heat maps render channel reports only");
        }
        report.kind = ReportKind::channel;
        report.baseline_accuracy = j.at("baseline_accuracy").get<double>();
        report.model_id = j.at("model_id").get<std::string>();
        report.dataset_id = j.at("dataset_id").get<std::string>();
        report.timestamp = j.at("timestamp").get<std::string>();
        report.notes = j.at("notes").get<std::vector<std::string>>();
        const json& grid = j.at("values");
        if (grid.size() != kGridRows) {
            throw std::runtime_error("values grid must have " + std::to_string(kGridRows) +
                                     " rows");
        }
        for (const json& row : grid) {
            if (row.size() != kGridCols) {
                throw std::runtime_error("values grid rows must have " +
                                         std::to_string(kGridCols) + " entries");
            }
            for (const json& v : row) report.channel_drops.push_back(v.get<double>());
        }
    } catch (const std::exception& e) {
        throw std::runtime_error("--report: " + t.report_path +
                                 " is not a channel importance report: " + e.what());
    }

    fs::create_directories(t.out);
    const std::string filename = t.format == "csv" ? "heatmap.csv" : "heatmap.pgm";
    export_heatmap(report, fs::path(t.out) / filename,
                   t.format == "csv" ? HeatmapFormat::csv : HeatmapFormat::pgm);

    json config{{"report", t.report_path}, {"format", t.format}};
    write_manifest(t.out, "export-heatmap", config, {t.report_path}, {filename});
    std::cout << "wrote " << (fs::path(t.out) / filename).string() << "\n";
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchTask {
    std::size_t n_trials = 256;
    std::size_t batch_size = 128;
    std::size_t n_epochs = 3;
    std::string out;
    ModelFlags model;
};

void run_bench(const BenchTask& t) {
    const ModelConfig mcfg = t.model.resolve();
    if (t.n_trials == 0) throw Usage("--trials must be positive");
    if (t.batch_size == 0) throw Usage("--batch-size must be positive");

    const std::size_t params = param_count(build_model(mcfg, 0));
    std::cout << "benchmarking " << params << " parameters on " << t.n_trials
              << " trials (batch " << t.batch_size << ")" << std::endl;
    const double seconds = benchmark_epoch(mcfg, t.n_trials, t.batch_size, t.n_epochs);

    fs::create_directories(t.out);
    json result{{"median_epoch_seconds", seconds},
                {"n_trials", t.n_trials},
                {"batch_size", t.batch_size},
                {"epochs_measured", std::max<std::size_t>(t.n_epochs, 3)},
                {"param_count", params}};
    write_file_atomic(fs::path(t.out) / "bench.json", result.dump(2) + "\n");

    json config{{"trials", t.n_trials},
                {"batch_size", t.batch_size},
                {"epochs", t.n_epochs},
                {"model", model_json(mcfg)}};
    write_manifest(t.out, "bench", config, {}, {"bench.json"});

    std::cout << "median epoch: " << format_double(seconds, 4) << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "bbecog: bi-band multichannel time-series classification toolkit.\n"
        "Every run writes its artifacts plus a manifest.json under --out."};
    app.require_subcommand(1);

    GenFlags gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a labeled synthetic dataset");
    gen_cmd->add_option("--classes", gen.classes, "class count (fixed by the build)")->capture_default_str();
    gen_cmd->add_option("--trials-per-class", gen.trials_per_class, "trials per class")->capture_default_str();
    gen_cmd->add_option("--band", gen.bands,
                        "carrier band LO:HI in Hz; repeat for multi-band signatures "
                        "(default 10:15)");
    gen_cmd->add_option("--amplitude", gen.amplitudes,
                        "carrier amplitude, one value or one per --band (default 16; about "
                        "3x the default noise level after envelope losses)");
    gen_cmd->add_option("--cluster-size", gen.cluster_size,
                        "electrodes per class cluster")->capture_default_str();
    gen_cmd->add_option("--cluster-offset", gen.cluster_offset,
                        "shift of every cluster, for disjoint multi-source layouts")->capture_default_str();
    gen_cmd->add_option("--noise-power", gen.noise_power,
                        "1/f background power (default is calibrated so default-amplitude "
                        "carriers are learnable at small trial counts)")->capture_default_str();
    gen_cmd->add_option("--white-floor", gen.white_floor, "white noise floor")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
    gen_cmd->add_option("--subject", gen.subject, "subject tag stored per trial")->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "output directory")->required();

    TrainTask train_task;
    auto* train_cmd = app.add_subcommand("train", "k-fold cross-validated training");
    train_cmd->add_option("--data", train_task.data, "dataset file")->required();
    train_task.model.attach(train_cmd);
    train_task.train.attach(train_cmd);
    train_cmd->add_option("--out", train_task.out, "output directory")->required();

    EvalTask eval_task;
    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a dataset");
    eval_cmd->add_option("--model", eval_task.model_path, "checkpoint file")->required();
    eval_cmd->add_option("--data", eval_task.data, "dataset file")->required();
    eval_cmd->add_option("--batch-size", eval_task.batch_size, "evaluation batch size")->capture_default_str();
    eval_task.model.attach(eval_cmd);
    eval_cmd->add_option("--out", eval_task.out, "output directory")->required();

    ImportanceTask freq_task;
    auto* freq_cmd = app.add_subcommand(
        "freq-test", "band-by-band accuracy sweep with the 100-filter bank");
    attach_importance(freq_cmd, freq_task, /*with_taps=*/true);

    ImportanceTask chan_task;
    auto* chan_cmd =
        app.add_subcommand("chan-test", "per-channel ablation importance map");
    attach_importance(chan_cmd, chan_task, /*with_taps=*/false);

    CrossTask cross_task;
    auto* cross_cmd = app.add_subcommand(
        "cross-subject", "train one model per source, score every model on every source");
    cross_cmd->add_option("--data", cross_task.datas, "dataset files (repeat; at least two)")
        ->required();
    cross_task.model.attach(cross_cmd);
    cross_task.train.attach(cross_cmd);
    cross_cmd->add_option("--out", cross_task.out, "output directory")->required();

    SweepTask sweep_task;
    auto* sweep_cmd = app.add_subcommand(
        "sweep", "grid ablation: TCN counts x kernel-length sets x encoders");
    sweep_cmd->add_option("--data", sweep_task.data, "dataset file")->required();
    sweep_cmd->add_option("--n-tcn", sweep_task.n_tcns, "TCN counts to sweep (repeat)");
    sweep_cmd->add_option("--kernel-set", sweep_task.kernel_sets,
                          "kernel lengths joined by '+', e.g. 32+512 (repeat)");
    sweep_cmd->add_option("--encoder", sweep_task.encoders,
                          "encoder variants to sweep (repeat)");
    sweep_cmd->add_option("--jobs", sweep_task.jobs,
                          "parallel cell limit (this build runs cells serially)")->capture_default_str();
    sweep_task.train.attach(sweep_cmd);
    sweep_cmd->add_option("--out", sweep_task.out, "output directory")->required();

    ExportTask export_task;
    auto* export_cmd =
        app.add_subcommand("export-heatmap", "render a saved channel report as CSV or PGM");
    export_cmd->add_option("--report", export_task.report_path, "channel report JSON file")
        ->required();
    export_cmd->add_option("--format", export_task.format, "output format")->capture_default_str()
        ->check(CLI::IsMember({"csv", "pgm"}));
    export_cmd->add_option("--out", export_task.out, "output directory")->required();

    BenchTask bench_task;
    auto* bench_cmd =
        app.add_subcommand("bench", "median wall-clock seconds per training epoch");
    bench_cmd->add_option("--trials", bench_task.n_trials, "synthetic trial count")->capture_default_str();
    bench_cmd->add_option("--batch-size", bench_task.batch_size, "minibatch size")->capture_default_str();
    bench_cmd->add_option("--epochs", bench_task.n_epochs, "measured epochs (minimum 3)")->capture_default_str();
    bench_task.model.attach(bench_cmd);
    bench_cmd->add_option("--out", bench_task.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (gen_cmd->parsed()) run_gen_data(gen);
        else if (train_cmd->parsed()) run_train(train_task);
        else if (eval_cmd->parsed()) run_eval(eval_task);
        else if (freq_cmd->parsed()) run_freq_test(freq_task);
        else if (chan_cmd->parsed()) run_chan_test(chan_task);
        else if (cross_cmd->parsed()) run_cross_subject(cross_task);
        else if (sweep_cmd->parsed()) run_sweep(sweep_task);
        else if (export_cmd->parsed()) run_export_heatmap(export_task);
        else if (bench_cmd->parsed()) run_bench(bench_task);
    } catch (const Usage& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

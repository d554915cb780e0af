#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bbecog/analysis.hpp"
#include "bbecog/checkpoint.hpp"
#include "bbecog/data.hpp"
#include "bbecog/harness.hpp"
#include "bbecog/model.hpp"
#include "json.hpp"

using namespace bbecog;

namespace {

// Six classes, disjoint electrode triplets, all signing in the 10-15 Hz band:
// class identity is carried spatially, band content separates signal from
// no-signal frequencies.
SyntheticConfig planted_config() {
    SyntheticConfig cfg;
    for (std::size_t c = 0; c < kClasses; ++c) {
        CarrierSpec spec;
        spec.electrodes = {21 * c, 21 * c + 2, 21 * c + 4};
        spec.f_lo_hz = 10.0;
        spec.f_hi_hz = 15.0;
        spec.amplitude = 24.0;
        cfg.signatures[c].carriers.push_back(spec);
    }
    cfg.trials_per_class = 24;
    cfg.noise_power = 0.02;
    cfg.seed = 33;
    return cfg;
}

struct TrainedFixture {
    Dataset ds;
    Model model;
    std::vector<std::size_t> train_idx, test_idx;
    double test_accuracy = 0.0;
};

TrainedFixture& trained_fixture() {
    static TrainedFixture* f = [] {
        auto* fx = new TrainedFixture{Dataset{}, Model{}, {}, {}, 0.0};
        fx->ds = generate_synthetic(planted_config());
        FoldSplit split = split_folds(fx->ds, 4, 7);
        CvPair pair = iterate_cv(split)[0];
        fx->train_idx = pair.train;
        fx->test_idx = pair.test;

        ModelConfig mcfg;
        mcfg.n_tcn = 2;
        mcfg.kernel_lengths = {{32, 2}};
        fx->model = build_model(mcfg, 3);

        std::vector<int> train_y, test_y;
        Tensor train_x = normalize_batch(fx->ds, fx->train_idx, &train_y);
        Tensor test_x = normalize_batch(fx->ds, fx->test_idx, &test_y);
        TrainConfig tcfg;
        tcfg.epochs = 45;
        tcfg.batch_size = 16;
        tcfg.lr = 2e-3;
        tcfg.seed = 5;
        tcfg.eval_every = 15;
        RunMetrics metrics = train(fx->model, train_x, train_y, test_x, test_y, tcfg);
        fx->test_accuracy = metrics.final_test_accuracy;
        return fx;
    }();
    return *f;
}

std::set<std::size_t> planted_channels() {
    std::set<std::size_t> out;
    for (const ClassSignature& sig : trained_fixture().ds.ground_truth) {
        for (const CarrierSpec& carrier : sig.carriers) {
            out.insert(carrier.electrodes.begin(), carrier.electrodes.end());
        }
    }
    return out;
}

ImportanceReport handmade_channel_report(std::vector<double> drops) {
    ImportanceReport report;
    report.kind = ReportKind::channel;
    report.channel_drops = std::move(drops);
    report.baseline_accuracy = 0.5;
    report.model_id = "feedbeef";
    report.dataset_id = "cafecafe";
    report.timestamp = "2026-01-01T00:00:00Z";
    return report;
}

}  // namespace

TEST_CASE("the planted band scores high while empty bands fall to chance") {
    TrainedFixture& fx = trained_fixture();
    REQUIRE(fx.test_accuracy >= 0.75);  // the fixture model must actually work

    std::vector<FilterSpec> bank{{10.0, 15.0, kSampleRate, 501},
                                 {120.0, 125.0, kSampleRate, 501},
                                 {200.0, 205.0, kSampleRate, 501}};
    ImportanceReport report =
        frequency_importance(fx.model, fx.ds, fx.test_idx, bank, 12);

    REQUIRE(report.kind == ReportKind::frequency);
    REQUIRE(report.bands.size() == bank.size());
    for (std::size_t b = 0; b < bank.size(); ++b) {
        CHECK(report.bands[b].f_lo == bank[b].f_lo);
        CHECK(report.bands[b].f_hi == bank[b].f_hi);
        CHECK(report.bands[b].accuracy >= 0.0);
        CHECK(report.bands[b].accuracy <= 1.0);
    }
    CHECK(report.baseline_accuracy == fx.test_accuracy);

    const double in_band = report.bands[0].accuracy;
    const double out_band = std::max(report.bands[1].accuracy, report.bands[2].accuracy);
    CHECK(in_band >= 0.65);
    CHECK(in_band > out_band + 0.2);
    CHECK(out_band <= 0.5);  // chance is 1/6 on six balanced classes

    CHECK(!report.model_id.empty());
    CHECK(!report.dataset_id.empty());
    CHECK(!report.timestamp.empty());
    REQUIRE(report.notes.size() >= 2);
}

TEST_CASE("frequency importance is deterministic and mutates nothing") {
    TrainedFixture& fx = trained_fixture();
    const std::string ds_before = serialize_dataset(fx.ds);
    const std::string model_before = serialize_checkpoint(model_arrays(fx.model));

    std::vector<FilterSpec> bank{{10.0, 15.0, kSampleRate, 501},
                                 {200.0, 205.0, kSampleRate, 501}};
    ImportanceReport a = frequency_importance(fx.model, fx.ds, fx.test_idx, bank, 12);
    ImportanceReport b = frequency_importance(fx.model, fx.ds, fx.test_idx, bank, 12);

    for (std::size_t i = 0; i < bank.size(); ++i) {
        CHECK(a.bands[i].accuracy == b.bands[i].accuracy);
    }
    CHECK(a.baseline_accuracy == b.baseline_accuracy);
    CHECK(serialize_dataset(fx.ds) == ds_before);
    CHECK(serialize_checkpoint(model_arrays(fx.model)) == model_before);
    CHECK(a.model_id == b.model_id);
    CHECK(a.dataset_id == b.dataset_id);
}

TEST_CASE("frequency importance refuses an empty dataset or bank") {
    TrainedFixture& fx = trained_fixture();
    Dataset empty;
    std::vector<FilterSpec> bank{{10.0, 15.0, kSampleRate, 501}};
    CHECK_THROWS_AS(frequency_importance(fx.model, empty, {}, bank, 12),
                    std::invalid_argument);
    CHECK_THROWS_AS(frequency_importance(fx.model, fx.ds, fx.test_idx, {}, 12),
                    std::invalid_argument);
    CHECK_THROWS_AS(frequency_importance(fx.model, fx.ds, {999}, bank, 12),
                    std::invalid_argument);
}

TEST_CASE("channel ablation recovers the planted electrodes") {
    TrainedFixture& fx = trained_fixture();
    ImportanceReport report = channel_importance(fx.model, fx.ds, fx.test_idx, 12);

    REQUIRE(report.kind == ReportKind::channel);
    REQUIRE(report.channel_drops.size() == kChannels);
    CHECK(report.baseline_accuracy == fx.test_accuracy);

    const std::set<std::size_t> planted = planted_channels();
    const std::size_t argmax = static_cast<std::size_t>(
        std::max_element(report.channel_drops.begin(), report.channel_drops.end()) -
        report.channel_drops.begin());
    CHECK(planted.count(argmax) == 1);
}

TEST_CASE("a channel that is flat at the background mean ablate to a zero drop") {
    // Channel 5's active interval sits exactly at the background mean, so its
    // normalized row is zero already and zeroing it changes nothing.
    Dataset ds;
    for (int t = 0; t < 8; ++t) {
        Trial trial;
        trial.background.resize(kChannels * kSamples);
        trial.active.resize(kChannels * kSamples);
        for (std::size_t i = 0; i < trial.background.size(); ++i) {
            trial.background[i] = (i % 2 == 0) ? 1.0f : -1.0f;  // mean 0, sd 1
        }
        for (std::size_t ch = 0; ch < kChannels; ++ch) {
            for (std::size_t s = 0; s < kSamples; ++s) {
                trial.active[ch * kSamples + s] =
                    ch == 5 ? 0.0f
                            : static_cast<float>(std::sin(0.1 * double(s) + double(ch + t)));
            }
        }
        trial.label = t % static_cast<int>(kClasses);
        trial.subject = "Z";
        ds.trials.push_back(trial);
    }

    ModelConfig mcfg;
    mcfg.n_tcn = 2;
    mcfg.kernel_lengths = {{8, 2}};
    Model m = build_model(mcfg, 41);
    ImportanceReport report = channel_importance(m, ds, {}, 8);
    CHECK(report.channel_drops[5] == 0.0);
}

TEST_CASE("cross subject evaluation fills a labeled square matrix") {
    ModelConfig mcfg;
    mcfg.n_tcn = 2;
    mcfg.kernel_lengths = {{8, 2}};
    mcfg.t_active = 32;
    std::vector<Model> models;
    models.push_back(build_model(mcfg, 1));
    models.push_back(build_model(mcfg, 2));

    auto mk = [](std::uint64_t salt) {
        std::vector<float> v(6 * kChannels * 32);
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = static_cast<float>(((i * 2654435761u + salt) % 97) / 97.0 - 0.5);
        }
        return Tensor::from_data({6, kChannels, 32}, std::move(v));
    };
    std::vector<Tensor> xs{mk(3), mk(9)};
    std::vector<std::vector<int>> ys{{0, 1, 2, 3, 4, 5}, {5, 4, 3, 2, 1, 0}};
    std::vector<std::string> names{"A", "B"};

    CrossSubjectMatrix matrix = cross_subject_eval(models, xs, ys, names, 6);
    REQUIRE(matrix.sources == names);
    REQUIRE(matrix.accuracy.size() == 2);
    for (const auto& row : matrix.accuracy) {
        REQUIRE(row.size() == 2);
        for (double a : row) {
            CHECK(a >= 0.0);
            CHECK(a <= 1.0);
        }
    }
    // Same models, same data: same numbers.
    CrossSubjectMatrix again = cross_subject_eval(models, xs, ys, names, 6);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(matrix.accuracy[i][j] == again.accuracy[i][j]);
        }
    }

    const std::string csv = cross_subject_csv(matrix);
    CHECK(csv.find("train\\test,A,B") == 0);

    std::vector<Model> one;
    one.push_back(build_model(mcfg, 1));
    std::vector<Tensor> one_x{mk(3)};
    std::vector<std::vector<int>> one_y{{0, 1, 2, 3, 4, 5}};
    CHECK_THROWS_AS(cross_subject_eval(one, one_x, one_y, {"A"}, 6), std::invalid_argument);

    std::vector<float> narrow(6 * 64 * 32, 0.0f);
    std::vector<Tensor> bad_x{mk(3), Tensor::from_data({6, 64, 32}, std::move(narrow))};
    CHECK_THROWS_AS(cross_subject_eval(models, bad_x, ys, names, 6), ShapeError);
}

TEST_CASE("heatmap export renders the grid as csv and as a darkness-coded pgm") {
    std::vector<double> drops(kChannels);
    for (std::size_t i = 0; i < kChannels; ++i) drops[i] = static_cast<double>(i) / 100.0;
    ImportanceReport report = handmade_channel_report(drops);

    const auto dir = std::filesystem::temp_directory_path();
    const auto csv_path = dir / "bbecog_heatmap.csv";
    const auto pgm_path = dir / "bbecog_heatmap.pgm";
    export_heatmap(report, csv_path, HeatmapFormat::csv);
    export_heatmap(report, pgm_path, HeatmapFormat::pgm);

    // CSV: 8 rows x 16 columns, values round-tripping exactly, position
    // (r, c) holding channel 16*r + c.
    std::ifstream csv(csv_path);
    REQUIRE(csv.good());
    std::string line;
    std::size_t r = 0;
    while (std::getline(csv, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::size_t c = 0;
        while (std::getline(ss, cell, ',')) {
            CHECK(std::stod(cell) == drops[16 * r + c]);
            ++c;
        }
        CHECK(c == kGridCols);
        ++r;
    }
    CHECK(r == kGridRows);

    // PGM: valid P2 header, first pixel lightest (smallest drop), last pixel
    // darkest (largest drop).
    std::ifstream pgm(pgm_path);
    REQUIRE(pgm.good());
    std::string magic;
    std::size_t w = 0, h = 0;
    int maxval = 0;
    pgm >> magic >> w >> h >> maxval;
    CHECK(magic == "P2");
    CHECK(w == kGridCols);
    CHECK(h == kGridRows);
    CHECK(maxval == 255);
    std::vector<int> pixels;
    int px = 0;
    while (pgm >> px) pixels.push_back(px);
    REQUIRE(pixels.size() == kChannels);
    CHECK(pixels.front() == 255);
    CHECK(pixels.back() == 0);
    for (int p : pixels) {
        CHECK(p >= 0);
        CHECK(p <= 255);
    }
    for (std::size_t i = 1; i < pixels.size(); ++i) CHECK(pixels[i] <= pixels[i - 1]);

    std::filesystem::remove(csv_path);
    std::filesystem::remove(pgm_path);
}

TEST_CASE("a flat drop grid renders as uniform mid-gray") {
    ImportanceReport report = handmade_channel_report(std::vector<double>(kChannels, 0.25));
    const auto path = std::filesystem::temp_directory_path() / "bbecog_heatmap_flat.pgm";
    export_heatmap(report, path, HeatmapFormat::pgm);
    std::ifstream pgm(path);
    std::string magic;
    std::size_t w = 0, h = 0;
    int maxval = 0;
    pgm >> magic >> w >> h >> maxval;
    int px = 0;
    std::size_t count = 0;
    while (pgm >> px) {
        CHECK(px == 128);
        ++count;
    }
    CHECK(count == kChannels);
    std::filesystem::remove(path);
}

TEST_CASE("heatmap export refuses a frequency report") {
    ImportanceReport report;
    report.kind = ReportKind::frequency;
    report.bands.push_back({10.0, 15.0, 0.5});
    CHECK_THROWS_AS(
        export_heatmap(report, std::filesystem::temp_directory_path() / "bad.pgm",
                       HeatmapFormat::pgm),
        ConfigError);
}

TEST_CASE("report json carries kind, values, baseline, and provenance") {
    TrainedFixture& fx = trained_fixture();
    std::vector<FilterSpec> bank{{10.0, 15.0, kSampleRate, 501}};
    ImportanceReport freq = frequency_importance(fx.model, fx.ds, fx.test_idx, bank, 12);
    auto jf = nlohmann::json::parse(report_json(freq));
    CHECK(jf["kind"] == "frequency");
    CHECK(jf["parameters"]["n_bands"] == 1);
    REQUIRE(jf["values"].size() == 1);
    CHECK(jf["values"][0]["f_lo_hz"] == 10.0);
    CHECK(jf["values"][0]["accuracy"].is_number());
    CHECK(jf["baseline_accuracy"].is_number());
    CHECK(!jf["model_id"].get<std::string>().empty());
    CHECK(!jf["dataset_id"].get<std::string>().empty());
    CHECK(!jf["timestamp"].get<std::string>().empty());
    CHECK(jf["notes"].is_array());

    std::vector<double> drops(kChannels, 0.0);
    drops[17] = 0.125;
    auto jc = nlohmann::json::parse(report_json(handmade_channel_report(drops)));
    CHECK(jc["kind"] == "channel");
    REQUIRE(jc["values"].size() == kGridRows);
    REQUIRE(jc["values"][0].size() == kGridCols);
    CHECK(jc["values"][1][1] == 0.125);  // channel 17 = row 1, col 1
    CHECK(jc["parameters"]["grid_rows"] == 8);
    CHECK(jc["parameters"]["grid_cols"] == 16);
}

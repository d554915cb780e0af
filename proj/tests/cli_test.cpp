#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bbecog/common.hpp"
#include "bbecog/data.hpp"
#include "bbecog/model.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

fs::path work_root() {
    static const fs::path root = [] {
        fs::path p = fs::temp_directory_path() /
                     ("bbecog_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Runs the tool with the given argument string, capturing exit code and both
// output streams through temp files.
RunResult run_cli(const std::string& args) {
    static int call = 0;
    const fs::path out_file = work_root() / ("stdout" + std::to_string(call) + ".txt");
    const fs::path err_file = work_root() / ("stderr" + std::to_string(call) + ".txt");
    ++call;
    const std::string cmd = std::string(BBECOG_CLI_PATH) + " " + args + " > " +
                            out_file.string() + " 2> " + err_file.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

// One dataset + one trained run shared by the read-only cases below.
struct CliFixture {
    fs::path data_dir;
    fs::path run_dir;
};

const CliFixture& fixture() {
    static const CliFixture fx = [] {
        CliFixture f;
        f.data_dir = work_root() / "d";
        f.run_dir = work_root() / "r";
        RunResult gen = run_cli("gen-data --trials-per-class 12 --amplitude 24 --seed 11 --out " +
                                f.data_dir.string());
        REQUIRE(gen.exit_code == 0);
        RunResult train = run_cli(
            "train --data " + (f.data_dir / "set.ecog").string() +
            " --n-tcn 2 --kernels 32x2 --folds 3 --epochs 8 --batch-size 16 --lr 2e-3"
            " --seed 5 --out " +
            f.run_dir.string());
        REQUIRE(train.exit_code == 0);
        return f;
    }();
    return fx;
}

}  // namespace

TEST_CASE("gen-data writes the dataset, the ground truth, and a manifest") {
    const CliFixture& fx = fixture();

    bbecog::Dataset ds = bbecog::load_dataset(fx.data_dir / "set.ecog");
    CHECK(ds.trials.size() == 12 * bbecog::kClasses);
    std::vector<int> per_class(bbecog::kClasses, 0);
    for (const bbecog::Trial& t : ds.trials) {
        REQUIRE(t.label >= 0);
        REQUIRE(t.label < static_cast<int>(bbecog::kClasses));
        ++per_class[static_cast<std::size_t>(t.label)];
        CHECK(t.subject == "S1");
    }
    for (int n : per_class) CHECK(n == 12);

    const nlohmann::json truth = nlohmann::json::parse(slurp(fx.data_dir / "ground_truth.json"));
    REQUIRE(truth.at("classes").size() == bbecog::kClasses);
    for (const auto& cls : truth.at("classes")) {
        REQUIRE(cls.at("carriers").size() == 1);
        CHECK(cls.at("carriers")[0].at("electrodes").size() == 3);
        CHECK(cls.at("carriers")[0].at("f_lo_hz").get<double>() == 10.0);
        CHECK(cls.at("carriers")[0].at("amplitude").get<double>() == 24.0);
    }

    const nlohmann::json manifest = nlohmann::json::parse(slurp(fx.data_dir / "manifest.json"));
    CHECK(manifest.at("command") == "gen-data");
    CHECK(manifest.at("config").at("seed") == 11);
    const auto& outputs = manifest.at("outputs");
    CHECK(std::find(outputs.begin(), outputs.end(), "set.ecog") != outputs.end());
}

TEST_CASE("gen-data validates flags before touching the filesystem") {
    const fs::path never = work_root() / "never";
    CHECK(run_cli("gen-data --band abc --out " + never.string()).exit_code == 1);
    CHECK(run_cli("gen-data --classes 5 --out " + never.string()).exit_code == 1);
    CHECK(run_cli("gen-data --band 10:15 --band 120:125 --amplitude 1 --amplitude 2 "
                  "--amplitude 3 --out " +
                  never.string())
              .exit_code == 1);
    CHECK(run_cli("gen-data --cluster-size 30 --out " + never.string()).exit_code == 1);
    CHECK(!fs::exists(never));
}

TEST_CASE("train leaves per-fold artifacts, the config, a summary, and a manifest") {
    const CliFixture& fx = fixture();

    for (int f = 0; f < 3; ++f) {
        CHECK(fs::exists(fx.run_dir / ("fold" + std::to_string(f) + ".bben")));
        CHECK(fs::exists(fx.run_dir / ("fold" + std::to_string(f) + ".ndjson")));
    }
    const bbecog::ModelConfig cfg = bbecog::parse_config(slurp(fx.run_dir / "model.cfg"));
    CHECK(cfg.n_tcn == 2);
    REQUIRE(cfg.kernel_lengths.size() == 1);
    CHECK(cfg.kernel_lengths[0].length == 32);

    const nlohmann::json summary = nlohmann::json::parse(slurp(fx.run_dir / "cv_summary.json"));
    REQUIRE(summary.at("fold_accuracies").size() == 3);
    const double mean = summary.at("mean_accuracy").get<double>();
    CHECK(mean >= 0.0);
    CHECK(mean <= 1.0);
    CHECK(summary.at("param_count").get<std::size_t>() ==
          bbecog::param_count(bbecog::build_model(cfg, 0)));

    const nlohmann::json manifest = nlohmann::json::parse(slurp(fx.run_dir / "manifest.json"));
    CHECK(manifest.at("command") == "train");
    CHECK(manifest.at("config").at("train").at("epochs") == 8);
    // The manifest alone pins the inputs: the recorded hash matches the file.
    const std::string data_path = (fx.data_dir / "set.ecog").string();
    CHECK(manifest.at("inputs").at(data_path) == bbecog::file_hash_hex(data_path));
    const bbecog::ModelConfig from_manifest = bbecog::parse_config(
        manifest.at("config").at("model").at("config_text").get<std::string>());
    CHECK(from_manifest.n_tcn == 2);
}

TEST_CASE("eval scores a checkpoint and records provenance hashes") {
    const CliFixture& fx = fixture();
    const fs::path out = work_root() / "e";
    RunResult r = run_cli("eval --model " + (fx.run_dir / "fold0.bben").string() + " --data " +
                          (fx.data_dir / "set.ecog").string() + " --config " +
                          (fx.run_dir / "model.cfg").string() + " --out " + out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("accuracy:") != std::string::npos);

    const nlohmann::json result = nlohmann::json::parse(slurp(out / "eval.json"));
    const double acc = result.at("accuracy").get<double>();
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    CHECK(result.at("n_trials") == 72);
    CHECK(result.at("model_id").get<std::string>().size() == 16);
    CHECK(result.at("dataset_id").get<std::string>().size() == 16);
}

TEST_CASE("freq-test emits one row per bank filter") {
    const CliFixture& fx = fixture();
    const fs::path out = work_root() / "f";
    RunResult r = run_cli("freq-test --model " + (fx.run_dir / "fold0.bben").string() +
                          " --data " + (fx.data_dir / "set.ecog").string() + " --config " +
                          (fx.run_dir / "model.cfg").string() +
                          " --taps 101 --max-trials 6 --batch-size 6 --out " + out.string());
    REQUIRE(r.exit_code == 0);

    std::istringstream csv(slurp(out / "freq_bands.csv"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(csv, line)) ++lines;
    CHECK(lines == 101);  // header + one row per band

    const nlohmann::json report = nlohmann::json::parse(slurp(out / "freq_report.json"));
    CHECK(report.at("kind") == "frequency");
    CHECK(report.at("values").size() == 100);
    CHECK(report.at("parameters").at("n_bands") == 100);
}

TEST_CASE("chan-test writes the report plus both heat-map renderings") {
    const CliFixture& fx = fixture();
    const fs::path out = work_root() / "c";
    RunResult r = run_cli("chan-test --model " + (fx.run_dir / "fold0.bben").string() +
                          " --data " + (fx.data_dir / "set.ecog").string() + " --config " +
                          (fx.run_dir / "model.cfg").string() +
                          " --max-trials 12 --batch-size 12 --out " + out.string());
    REQUIRE(r.exit_code == 0);

    const nlohmann::json report = nlohmann::json::parse(slurp(out / "chan_report.json"));
    CHECK(report.at("kind") == "channel");
    REQUIRE(report.at("values").size() == bbecog::kGridRows);
    for (const auto& row : report.at("values")) CHECK(row.size() == bbecog::kGridCols);

    const std::string pgm = slurp(out / "heatmap.pgm");
    CHECK(pgm.rfind("P2\n16 8\n255\n", 0) == 0);
    std::istringstream csv(slurp(out / "heatmap.csv"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(csv, line)) ++lines;
    CHECK(lines == bbecog::kGridRows);
}

TEST_CASE("export-heatmap re-renders a saved channel report and refuses others") {
    const CliFixture& fx = fixture();
    const fs::path chan = work_root() / "c";  // produced by the chan-test case
    if (!fs::exists(chan / "chan_report.json")) {
        RunResult r = run_cli("chan-test --model " + (fx.run_dir / "fold0.bben").string() +
                              " --data " + (fx.data_dir / "set.ecog").string() + " --config " +
                              (fx.run_dir / "model.cfg").string() +
                              " --max-trials 12 --batch-size 12 --out " + chan.string());
        REQUIRE(r.exit_code == 0);
    }

    const fs::path out = work_root() / "x";
    RunResult ok = run_cli("export-heatmap --report " + (chan / "chan_report.json").string() +
                           " --format pgm --out " + out.string());
    REQUIRE(ok.exit_code == 0);
    CHECK(slurp(out / "heatmap.pgm") == slurp(chan / "heatmap.pgm"));

    // A frequency report has no grid to render: runtime failure, not usage.
    const fs::path freq = work_root() / "f";
    if (fs::exists(freq / "freq_report.json")) {
        RunResult bad = run_cli("export-heatmap --report " +
                                (freq / "freq_report.json").string() + " --format pgm --out " +
                                (work_root() / "x2").string());
        CHECK(bad.exit_code == 2);
        CHECK(bad.err.find("channel") != std::string::npos);
    }
}

TEST_CASE("cross-subject trains one model per source and writes the matrix") {
    const CliFixture& fx = fixture();
    const fs::path d2 = work_root() / "d2";
    REQUIRE(run_cli("gen-data --trials-per-class 9 --amplitude 24 --cluster-offset 10 "
                    "--subject S2 --seed 12 --out " +
                    d2.string())
                .exit_code == 0);

    const fs::path out = work_root() / "cs";
    RunResult r = run_cli("cross-subject --data " + (fx.data_dir / "set.ecog").string() +
                          " --data " + (d2 / "set.ecog").string() +
                          " --n-tcn 2 --kernels 32x2 --folds 3 --epochs 4 --batch-size 16"
                          " --lr 2e-3 --seed 5 --out " +
                          out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(out / "source0.bben"));
    CHECK(fs::exists(out / "source1.bben"));

    std::istringstream csv(slurp(out / "cross_subject.csv"));
    std::string line;
    REQUIRE(std::getline(csv, line));
    CHECK(line == "train\\test,S1,S2");
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        std::istringstream fields(line);
        std::string name, a, b;
        REQUIRE(std::getline(fields, name, ','));
        REQUIRE(std::getline(fields, a, ','));
        REQUIRE(std::getline(fields, b, ','));
        const double va = std::stod(a), vb = std::stod(b);
        CHECK(va >= 0.0);
        CHECK(va <= 1.0);
        CHECK(vb >= 0.0);
        CHECK(vb <= 1.0);
    }
    CHECK(rows == 2);

    // A single source is a usage error.
    CHECK(run_cli("cross-subject --data " + (fx.data_dir / "set.ecog").string() + " --out " +
                  (work_root() / "cs1").string())
              .exit_code == 1);
}

TEST_CASE("sweep records failed cells and keeps going") {
    const CliFixture& fx = fixture();
    const fs::path out = work_root() / "sw";
    RunResult r = run_cli("sweep --data " + (fx.data_dir / "set.ecog").string() +
                          " --n-tcn 2 --n-tcn 1 --kernel-set 32+64 --folds 2 --epochs 2"
                          " --batch-size 16 --lr 2e-3 --out " +
                          out.string());
    REQUIRE(r.exit_code == 0);

    std::istringstream csv(slurp(out / "sweep.csv"));
    std::string header, row_ok, row_failed;
    REQUIRE(std::getline(csv, header));
    REQUIRE(std::getline(csv, row_ok));
    REQUIRE(std::getline(csv, row_failed));
    CHECK(header ==
          "n_tcn,kernel_set,encoder,param_count,mean_accuracy,std_accuracy,status,detail");
    CHECK(row_ok.rfind("2,32+64,spatial3d,", 0) == 0);
    CHECK(row_ok.find(",ok,") != std::string::npos);
    // One TCN cannot be dealt across a two-length set: the cell fails but the
    // sweep completes and records why.
    CHECK(row_failed.rfind("1,32+64,spatial3d,", 0) == 0);
    CHECK(row_failed.find("failed") != std::string::npos);
    std::string extra;
    CHECK(!std::getline(csv, extra));  // exactly grid-size rows

    CHECK(fs::exists(out / "cell00" / "fold0.bben"));
    CHECK(!fs::exists(out / "cell01"));  // the failed cell never writes
}

TEST_CASE("bench reports a positive median epoch time") {
    const fs::path out = work_root() / "b";
    RunResult r = run_cli("bench --n-tcn 1 --kernels 32x1 --trials 8 --batch-size 8 --out " +
                          out.string());
    REQUIRE(r.exit_code == 0);
    const nlohmann::json result = nlohmann::json::parse(slurp(out / "bench.json"));
    CHECK(result.at("median_epoch_seconds").get<double>() > 0.0);
    CHECK(result.at("param_count").get<std::size_t>() > 0);
}

TEST_CASE("exit codes separate usage problems from runtime failures") {
    const CliFixture& fx = fixture();
    CHECK(run_cli("--help").exit_code == 0);
    CHECK(run_cli("").exit_code == 1);                       // a subcommand is required
    CHECK(run_cli("gen-data --bogus 1 --out z").exit_code == 1);
    CHECK(run_cli("eval --model missing.bben --data also_missing.ecog --out z").exit_code == 1);

    // A checkpoint that does not fit the configured architecture is a runtime
    // failure of the work, not of the invocation.
    RunResult mismatch = run_cli("eval --model " + (fx.run_dir / "fold0.bben").string() +
                                 " --data " + (fx.data_dir / "set.ecog").string() + " --out " +
                                 (work_root() / "z").string());
    CHECK(mismatch.exit_code == 2);
}

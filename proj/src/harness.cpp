#include "bbecog/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "bbecog/adam.hpp"
#include "bbecog/common.hpp"
#include "bbecog/ops.hpp"
#include "bbecog/rng.hpp"

namespace bbecog {

namespace {

struct EvalResult {
    std::size_t correct = 0;
    double accuracy = 0.0;
    double loss = 0.0;
};

void check_pair(const Tensor& x, const std::vector<int>& y, const char* what) {
    if (!x.defined() || x.rank() != 3) {
        throw ShapeError(std::string(what) + ": inputs must be rank-3 [N,channels,T]");
    }
    if (x.extent(0) != y.size()) {
        throw ShapeError(std::string(what) + ": " + std::to_string(y.size()) +
                         " labels for " + std::to_string(x.extent(0)) + " inputs");
    }
}

std::size_t count_correct(const Tensor& logits, const std::vector<int>& labels,
                          std::size_t offset) {
    const std::size_t B = logits.extent(0), K = logits.extent(1);
    const float* z = logits.data();
    std::size_t correct = 0;
    for (std::size_t b = 0; b < B; ++b) {
        const float* row = z + b * K;
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k) {
            if (row[k] > row[best]) best = k;
        }
        if (static_cast<int>(best) == labels[offset + b]) ++correct;
    }
    return correct;
}

EvalResult eval_metrics(Model& m, const Tensor& inputs, const std::vector<int>& labels,
                        std::size_t batch_size, bool with_loss) {
    check_pair(inputs, labels, "evaluate");
    if (labels.empty()) throw std::invalid_argument("evaluate: empty input set");
    if (batch_size == 0) throw std::invalid_argument("evaluate: batch_size must be positive");
    NoGradGuard guard;
    const std::size_t N = inputs.extent(0);
    const std::size_t C = inputs.extent(1), T = inputs.extent(2);
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < N; start += batch_size) {
        const std::size_t b = std::min(batch_size, N - start);
        std::vector<std::size_t> idx(b);
        std::iota(idx.begin(), idx.end(), start);
        Tensor batch = reshape(gather_rows(inputs, idx), {b, 1, C, T});
        Tensor logits = forward(m, batch, /*training=*/false);
        if (with_loss) {
            std::vector<int> sub(labels.begin() + static_cast<std::ptrdiff_t>(start),
                                 labels.begin() + static_cast<std::ptrdiff_t>(start + b));
            loss_sum += static_cast<double>(softmax_cross_entropy(logits, sub).item()) *
                        static_cast<double>(b);
        }
        correct += count_correct(logits, labels, start);
    }
    return {correct, static_cast<double>(correct) / static_cast<double>(N),
            loss_sum / static_cast<double>(N)};
}

std::string json_number(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

void append_metric_line(std::string& out, std::size_t epoch, const char* split, double loss,
                        double accuracy, double seconds) {
    out += "{\"epoch\":" + std::to_string(epoch) + ",\"split\":\"" + split +
           "\",\"loss\":" + json_number(loss) + ",\"accuracy\":" + json_number(accuracy) +
           ",\"seconds\":" + json_number(seconds) + "}\n";
}

}  // namespace

TrainConfig reference_preset() { return TrainConfig{}; }

void validate(const TrainConfig& cfg) {
    if (cfg.epochs == 0) throw ConfigError("train config: epochs must be positive");
    if (cfg.batch_size == 0) throw ConfigError("train config: batch_size must be positive");
    if (cfg.eval_every == 0) throw ConfigError("train config: eval_every must be positive");
    if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) {
        throw ConfigError("train config: lr must be finite and >= 0");
    }
    if (!(cfg.weight_decay >= 0.0) || !std::isfinite(cfg.weight_decay)) {
        throw ConfigError("train config: weight_decay must be finite and >= 0");
    }
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
        throw ConfigError("train config: betas must lie in [0,1)");
    }
}

double evaluate(Model& m, const Tensor& inputs, const std::vector<int>& labels,
                std::size_t batch_size) {
    return eval_metrics(m, inputs, labels, batch_size, /*with_loss=*/false).accuracy;
}

std::size_t correct_predictions(Model& m, const Tensor& inputs, const std::vector<int>& labels,
                                std::size_t batch_size) {
    return eval_metrics(m, inputs, labels, batch_size, /*with_loss=*/false).correct;
}

RunMetrics train(Model& m, const Tensor& train_x, const std::vector<int>& train_y,
                 const Tensor& test_x, const std::vector<int>& test_y, const TrainConfig& cfg) {
    validate(cfg);
    check_pair(train_x, train_y, "train");
    if (train_y.empty()) throw std::invalid_argument("train: empty training set");
    const bool have_test = !test_y.empty();
    if (have_test) check_pair(test_x, test_y, "train(test)");

    const std::size_t N = train_x.extent(0);
    const std::size_t C = train_x.extent(1), T = train_x.extent(2);
    Adam opt(parameters(m),
             AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay});

    RunMetrics metrics;
    std::string lines;
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng rng(Rng::mix(cfg.seed, epoch));
        rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < N; start += cfg.batch_size) {
            const std::size_t b = std::min(cfg.batch_size, N - start);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(start + b));
            std::vector<int> batch_y(b);
            for (std::size_t i = 0; i < b; ++i) batch_y[i] = train_y[idx[i]];

            Tensor batch = reshape(gather_rows(train_x, idx), {b, 1, C, T});
            Tensor logits = forward(m, batch, /*training=*/true);
            Tensor loss = softmax_cross_entropy(logits, batch_y);
            const double lv = static_cast<double>(loss.item());
            if (!std::isfinite(lv)) {
                if (!cfg.metrics_path.empty()) write_file_atomic(cfg.metrics_path, lines);
                throw TrainDiverged("training diverged: non-finite loss",
                                    static_cast<int>(epoch),
                                    static_cast<int>(start / cfg.batch_size));
            }
            loss_sum += lv * static_cast<double>(b);
            correct += count_correct(logits, batch_y, 0);
            opt.zero_grad();
            backward(loss);
            opt.step();
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(N);
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(N);
        if (have_test && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
            EvalResult ev = eval_metrics(m, test_x, test_y, cfg.batch_size, /*with_loss=*/true);
            rec.test_accuracy = ev.accuracy;
            metrics.final_test_accuracy = ev.accuracy;
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                              .count();
            append_metric_line(lines, epoch, "train", rec.train_loss, rec.train_accuracy,
                               rec.seconds);
            append_metric_line(lines, epoch, "test", ev.loss, ev.accuracy, rec.seconds);
        } else {
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                              .count();
            append_metric_line(lines, epoch, "train", rec.train_loss, rec.train_accuracy,
                               rec.seconds);
        }
        metrics.epochs.push_back(rec);
    }

    if (!cfg.metrics_path.empty()) write_file_atomic(cfg.metrics_path, lines);
    if (!cfg.checkpoint_path.empty()) save_weights(m, cfg.checkpoint_path);
    return metrics;
}

std::pair<double, double> aggregate_folds(const std::vector<double>& accuracies) {
    if (accuracies.empty()) throw std::invalid_argument("aggregate_folds: no folds");
    const double n = static_cast<double>(accuracies.size());
    double mean = 0.0;
    for (double a : accuracies) mean += a;
    mean /= n;
    double var = 0.0;
    for (double a : accuracies) var += (a - mean) * (a - mean);
    var /= n;  // population variance: the folds are the whole population here
    return {mean, std::sqrt(var)};
}

RunMetrics run_cv(const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  std::size_t k, const std::filesystem::path& out_dir) {
    validate(mcfg);
    validate(tcfg);
    FoldSplit split = split_folds(ds, k, tcfg.seed);
    std::vector<CvPair> pairs = iterate_cv(split);

    RunMetrics agg;
    for (std::size_t f = 0; f < pairs.size(); ++f) {
        std::vector<int> train_y, test_y;
        Tensor train_x = normalize_batch(ds, pairs[f].train, &train_y);
        Tensor test_x = normalize_batch(ds, pairs[f].test, &test_y);

        TrainConfig fold_cfg = tcfg;
        fold_cfg.seed = tcfg.seed + f;  // fresh seed per fold
        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            fold_cfg.checkpoint_path = out_dir / ("fold" + std::to_string(f) + ".bben");
            fold_cfg.metrics_path = out_dir / ("fold" + std::to_string(f) + ".ndjson");
        } else {
            fold_cfg.checkpoint_path.clear();
            fold_cfg.metrics_path.clear();
        }

        Model model = build_model(mcfg, fold_cfg.seed);
        RunMetrics fold = train(model, train_x, train_y, test_x, test_y, fold_cfg);
        agg.fold_accuracies.push_back(fold.final_test_accuracy);
        if (agg.epochs.empty()) agg.epochs = fold.epochs;  // keep fold 0's trace for reporting
    }
    auto [mean, sd] = aggregate_folds(agg.fold_accuracies);
    agg.mean_accuracy = mean;
    agg.std_accuracy = sd;
    agg.final_test_accuracy = mean;
    return agg;
}

double benchmark_epoch(const ModelConfig& mcfg, std::size_t n_trials, std::size_t batch_size,
                       std::size_t n_epochs) {
    validate(mcfg);
    if (n_trials == 0) throw std::invalid_argument("benchmark_epoch: n_trials must be positive");
    if (batch_size == 0) throw std::invalid_argument("benchmark_epoch: batch_size must be positive");
    if (n_epochs < 3) n_epochs = 3;  // median needs at least three measurements

    const std::size_t C = mcfg.grid_rows * mcfg.grid_cols;
    const std::size_t T = mcfg.t_active;
    Rng rng(7);
    std::vector<float> values(n_trials * C * T);
    for (auto& v : values) v = static_cast<float>(rng.normal());
    Tensor x = Tensor::from_data({n_trials, C, T}, std::move(values));
    std::vector<int> y(n_trials);
    for (std::size_t i = 0; i < n_trials; ++i) {
        y[i] = static_cast<int>(i % mcfg.n_classes);
    }

    Model m = build_model(mcfg, 7);
    Adam opt(parameters(m), AdamConfig{});
    auto one_epoch = [&]() {
        for (std::size_t start = 0; start < n_trials; start += batch_size) {
            const std::size_t b = std::min(batch_size, n_trials - start);
            std::vector<std::size_t> idx(b);
            std::iota(idx.begin(), idx.end(), start);
            Tensor batch = reshape(gather_rows(x, idx), {b, 1, C, T});
            Tensor logits = forward(m, batch, /*training=*/true);
            std::vector<int> sub(y.begin() + static_cast<std::ptrdiff_t>(start),
                                 y.begin() + static_cast<std::ptrdiff_t>(start + b));
            Tensor loss = softmax_cross_entropy(logits, sub);
            opt.zero_grad();
            backward(loss);
            opt.step();
        }
    };

    one_epoch();  // warm-up, excluded from the timing
    std::vector<double> times;
    times.reserve(n_epochs);
    for (std::size_t e = 0; e < n_epochs; ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        one_epoch();
        times.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

}  // namespace bbecog

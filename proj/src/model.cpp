#include "bbecog/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "bbecog/rng.hpp"

namespace bbecog {

namespace {

// Output channels of every stage up to the pointwise fusion conv scale with
// the TCN count; the pointwise output (16) and therefore the fc width do not.
constexpr std::size_t kFusionOut = 16;

std::size_t encoder_channels(const ModelConfig& cfg) { return 2 * cfg.n_tcn; }

std::size_t pooled1(const ModelConfig& cfg) { return cfg.t_active / cfg.pool1; }
std::size_t pooled2(const ModelConfig& cfg) { return pooled1(cfg) / cfg.pool2; }

Tensor init_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
    Tensor t = Tensor::zeros(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.numel(); ++i) {
        t.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
    }
    t.set_requires_grad(true);
    return t;
}

Tensor init_const(Shape shape, float value, bool trainable) {
    Tensor t = Tensor::filled(std::move(shape), value);
    if (trainable) t.set_requires_grad(true);
    return t;
}

BatchNormStage init_bn(std::size_t channels) {
    BatchNormStage bn;
    bn.gamma = init_const({channels}, 1.0f, true);
    bn.beta = init_const({channels}, 0.0f, true);
    bn.running_mean = init_const({channels}, 0.0f, false);
    bn.running_var = init_const({channels}, 1.0f, false);
    return bn;
}

void check_stage(const char* stage, const Tensor& t, const Shape& want,
                 std::vector<std::pair<std::string, Shape>>* trace) {
    if (t.shape() != want) {
        throw ShapeError(std::string(stage) + ": got " + shape_str(t.shape()) + ", expected " +
                         shape_str(want));
    }
    if (trace) trace->emplace_back(stage, t.shape());
}

void for_each_array(const Model& m,
                    const std::function<void(const std::string&, const Tensor&)>& fn) {
    for (std::size_t j = 0; j < m.tcn_kernels.size(); ++j) {
        fn("tcn." + std::to_string(j) + ".kernel", m.tcn_kernels[j]);
        if (m.tcn_biases[j].defined()) {
            fn("tcn." + std::to_string(j) + ".bias", m.tcn_biases[j]);
        }
    }
    fn("encoder.conv1.weight", m.enc1_w);
    fn("encoder.conv1.bias", m.enc1_b);
    if (m.enc2_w.defined()) {
        fn("encoder.conv2.weight", m.enc2_w);
        fn("encoder.conv2.bias", m.enc2_b);
    }
    fn("encoder.bn.gamma", m.enc_bn.gamma);
    fn("encoder.bn.beta", m.enc_bn.beta);
    fn("encoder.bn.running_mean", m.enc_bn.running_mean);
    fn("encoder.bn.running_var", m.enc_bn.running_var);
    fn("fusion.temporal.weight", m.fus_t_w);
    fn("fusion.temporal.bias", m.fus_t_b);
    fn("fusion.pointwise.weight", m.fus_p_w);
    fn("fusion.pointwise.bias", m.fus_p_b);
    fn("fusion.bn.gamma", m.fus_bn.gamma);
    fn("fusion.bn.beta", m.fus_bn.beta);
    fn("fusion.bn.running_mean", m.fus_bn.running_mean);
    fn("fusion.bn.running_var", m.fus_bn.running_var);
    fn("fc.weight", m.fc_w);
    fn("fc.bias", m.fc_b);
}

}  // namespace

void validate(const ModelConfig& cfg) {
    if (cfg.n_tcn == 0) throw ConfigError("model: n_tcn must be positive");
    std::size_t total = 0;
    for (const KernelGroup& g : cfg.kernel_lengths) {
        if (g.length == 0 || g.count == 0) {
            throw ConfigError("model: kernel groups need positive length and count");
        }
        total += g.count;
    }
    if (total != cfg.n_tcn) {
        throw ConfigError("model: kernel counts sum to " + std::to_string(total) +
                          " but n_tcn is " + std::to_string(cfg.n_tcn));
    }
    if (cfg.grid_rows * cfg.grid_cols != kChannels) {
        throw ConfigError("model: grid " + std::to_string(cfg.grid_rows) + "x" +
                          std::to_string(cfg.grid_cols) + " does not cover " +
                          std::to_string(kChannels) + " channels");
    }
    if (cfg.encoder == EncoderKind::spatial3d && cfg.grid_cols % cfg.grid_rows != 0) {
        throw ConfigError("model: spatial3d encoder needs grid_cols divisible by grid_rows");
    }
    if (cfg.t_active == 0) throw ConfigError("model: t_active must be positive");
    if (cfg.n_classes < 2) throw ConfigError("model: need at least two classes");
    if (cfg.fusion_kernel == 0 || cfg.pool1 == 0 || cfg.pool2 == 0) {
        throw ConfigError("model: fusion_kernel and pool sizes must be positive");
    }
    if (pooled1(cfg) == 0 || pooled2(cfg) == 0) {
        throw ConfigError("model: pooling collapses the time axis to zero");
    }
}

std::string serialize_config(const ModelConfig& cfg) {
    std::ostringstream os;
    os << "n_tcn=" << cfg.n_tcn << "\n";
    os << "kernel_lengths=";
    for (std::size_t i = 0; i < cfg.kernel_lengths.size(); ++i) {
        if (i) os << ",";
        os << cfg.kernel_lengths[i].length << "x" << cfg.kernel_lengths[i].count;
    }
    os << "\n";
    os << "encoder=" << (cfg.encoder == EncoderKind::spatial3d ? "spatial3d" : "spatial2d")
       << "\n";
    os << "grid_rows=" << cfg.grid_rows << "\n";
    os << "grid_cols=" << cfg.grid_cols << "\n";
    os << "t_active=" << cfg.t_active << "\n";
    os << "n_classes=" << cfg.n_classes << "\n";
    os << "fusion_kernel=" << cfg.fusion_kernel << "\n";
    os << "pool1=" << cfg.pool1 << "\n";
    os << "pool2=" << cfg.pool2 << "\n";
    os << "tcn_bias=" << (cfg.tcn_bias ? 1 : 0) << "\n";
    return os.str();
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("config: bad value '" + value + "' for " + key);
    }
}

std::vector<KernelGroup> parse_kernels(const std::string& value) {
    std::vector<KernelGroup> groups;
    std::istringstream is(value);
    std::string item;
    while (std::getline(is, item, ',')) {
        const std::size_t x = item.find('x');
        if (x == std::string::npos) {
            throw ConfigError("config: kernel_lengths entries look like LENGTHxCOUNT, got '" +
                              item + "'");
        }
        groups.push_back({parse_size("kernel_lengths", item.substr(0, x)),
                          parse_size("kernel_lengths", item.substr(x + 1))});
    }
    if (groups.empty()) throw ConfigError("config: kernel_lengths is empty");
    return groups;
}

}  // namespace

ModelConfig parse_config(const std::string& text) {
    ModelConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: expected key=value, got '" + line + "'");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "n_tcn") {
            cfg.n_tcn = parse_size(key, value);
        } else if (key == "kernel_lengths") {
            cfg.kernel_lengths = parse_kernels(value);
        } else if (key == "encoder") {
            if (value == "spatial3d") {
                cfg.encoder = EncoderKind::spatial3d;
            } else if (value == "spatial2d") {
                cfg.encoder = EncoderKind::spatial2d;
            } else {
                throw ConfigError("config: unknown encoder '" + value + "'");
            }
        } else if (key == "grid_rows") {
            cfg.grid_rows = parse_size(key, value);
        } else if (key == "grid_cols") {
            cfg.grid_cols = parse_size(key, value);
        } else if (key == "t_active") {
            cfg.t_active = parse_size(key, value);
        } else if (key == "n_classes") {
            cfg.n_classes = parse_size(key, value);
        } else if (key == "fusion_kernel") {
            cfg.fusion_kernel = parse_size(key, value);
        } else if (key == "pool1") {
            cfg.pool1 = parse_size(key, value);
        } else if (key == "pool2") {
            cfg.pool2 = parse_size(key, value);
        } else if (key == "tcn_bias") {
            cfg.tcn_bias = parse_size(key, value) != 0;
        } else {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }
    return cfg;
}

Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    Model m;
    m.config = cfg;
    Rng rng(seed);

    // Draw order is fixed: TCNs (kernel, bias) in concatenation order, then
    // encoder, fusion, fc. Changing it would silently change every seed.
    for (const KernelGroup& g : cfg.kernel_lengths) {
        for (std::size_t i = 0; i < g.count; ++i) m.tcn_lengths.push_back(g.length);
    }
    for (std::size_t len : m.tcn_lengths) {
        m.tcn_kernels.push_back(init_uniform(rng, {len}, len));
        m.tcn_biases.push_back(cfg.tcn_bias ? init_const({}, 0.0f, true) : Tensor{});
    }

    const std::size_t n = cfg.n_tcn;
    const std::size_t ec = encoder_channels(cfg);
    if (cfg.encoder == EncoderKind::spatial3d) {
        const std::size_t kh = cfg.grid_rows, kw = cfg.grid_rows;
        m.enc1_w = init_uniform(rng, {ec, 1, kh, kw, 1}, kh * kw);
        m.enc1_b = init_const({ec}, 0.0f, true);
        const std::size_t w2 = cfg.grid_cols / cfg.grid_rows;
        m.enc2_w = init_uniform(rng, {ec, 1, 1, w2, 1}, w2);
        m.enc2_b = init_const({ec}, 0.0f, true);
    } else {
        m.enc1_w = init_uniform(rng, {ec, 1, kChannels, 1, 1}, kChannels);
        m.enc1_b = init_const({ec}, 0.0f, true);
    }
    m.enc_bn = init_bn(ec);

    m.fus_t_w = init_uniform(rng, {ec, 1, 1, 1, cfg.fusion_kernel}, cfg.fusion_kernel);
    m.fus_t_b = init_const({ec}, 0.0f, true);
    m.fus_p_w = init_uniform(rng, {kFusionOut, ec, 1, 1, 1}, ec);
    m.fus_p_b = init_const({kFusionOut}, 0.0f, true);
    m.fus_bn = init_bn(kFusionOut);

    const std::size_t fc_in = kFusionOut * pooled2(cfg);
    m.fc_w = init_uniform(rng, {cfg.n_classes, fc_in}, fc_in);
    m.fc_b = init_const({cfg.n_classes}, 0.0f, true);
    return m;
}

Tensor forward(Model& m, const Tensor& batch, bool training,
               std::vector<std::pair<std::string, Shape>>* trace) {
    const ModelConfig& cfg = m.config;
    if (!batch.defined() || batch.rank() != 4 || batch.extent(1) != 1 ||
        batch.extent(2) != cfg.grid_rows * cfg.grid_cols || batch.extent(3) != cfg.t_active) {
        throw ShapeError("forward: batch must be [B,1," +
                         std::to_string(cfg.grid_rows * cfg.grid_cols) + "," +
                         std::to_string(cfg.t_active) + "], got " +
                         (batch.defined() ? shape_str(batch.shape()) : "undefined"));
    }
    const std::size_t B = batch.extent(0);
    const std::size_t n = cfg.n_tcn, ec = encoder_channels(cfg);
    const std::size_t C = cfg.grid_rows * cfg.grid_cols, T = cfg.t_active;
    const std::size_t t1 = pooled1(cfg), t2 = pooled2(cfg);

    Tensor x = reshape(batch, {B, C, T});
    std::vector<Tensor> taps;
    taps.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
        taps.push_back(conv_temporal(x, m.tcn_kernels[j], m.tcn_biases[j]));
    }
    Tensor cat = stack_axis1(taps);
    check_stage("bi_bcwt.concat", cat, {B, n, C, T}, trace);

    Tensor enc;
    if (cfg.encoder == EncoderKind::spatial3d) {
        Tensor grid = reshape(cat, {B, n, cfg.grid_rows, cfg.grid_cols, T});
        check_stage("bi_bcwt.reshape", grid, {B, n, cfg.grid_rows, cfg.grid_cols, T}, trace);
        Tensor c1 = conv_grouped(grid, m.enc1_w, m.enc1_b,
                                 {cfg.grid_rows, cfg.grid_rows, 1}, n);
        const std::size_t w2 = cfg.grid_cols / cfg.grid_rows;
        check_stage("encoder.conv1", c1, {B, ec, 1, w2, T}, trace);
        Tensor c2 = conv_grouped(c1, m.enc2_w, m.enc2_b, {1, 1, 1}, ec);
        check_stage("encoder.conv2", c2, {B, ec, 1, 1, T}, trace);
        enc = c2;
    } else {
        Tensor flat = reshape(cat, {B, n, C, 1, T});
        Tensor c1 = conv_grouped(flat, m.enc1_w, m.enc1_b, {1, 1, 1}, n);
        check_stage("encoder.conv1", c1, {B, ec, 1, 1, T}, trace);
        enc = c1;
    }
    enc = batch_norm(enc, m.enc_bn.gamma, m.enc_bn.beta, m.enc_bn.running_mean,
                     m.enc_bn.running_var, training);
    enc = elu(enc);
    enc = avg_pool_temporal(enc, cfg.pool1);
    check_stage("encoder.pool", enc, {B, ec, 1, 1, t1}, trace);

    const std::size_t left = (cfg.fusion_kernel - 1) / 2;
    const std::size_t right = cfg.fusion_kernel - 1 - left;
    Tensor fus = pad_temporal(enc, left, right);
    fus = conv_grouped(fus, m.fus_t_w, m.fus_t_b, {1, 1, 1}, ec);
    check_stage("fusion.temporal", fus, {B, ec, 1, 1, t1}, trace);
    fus = conv_grouped(fus, m.fus_p_w, m.fus_p_b, {1, 1, 1}, 1);
    check_stage("fusion.pointwise", fus, {B, kFusionOut, 1, 1, t1}, trace);
    fus = batch_norm(fus, m.fus_bn.gamma, m.fus_bn.beta, m.fus_bn.running_mean,
                     m.fus_bn.running_var, training);
    fus = elu(fus);
    fus = avg_pool_temporal(fus, cfg.pool2);
    check_stage("fusion.pool", fus, {B, kFusionOut, 1, 1, t2}, trace);

    Tensor flat = reshape(fus, {B, kFusionOut * t2});
    check_stage("fc.flatten", flat, {B, kFusionOut * t2}, trace);
    Tensor logits = linear(flat, m.fc_w, m.fc_b);
    check_stage("fc.logits", logits, {B, cfg.n_classes}, trace);
    return logits;
}

std::vector<Tensor> parameters(Model& m) {
    std::vector<Tensor> out;
    for_each_array(m, [&](const std::string&, const Tensor& t) {
        if (t.requires_grad()) out.push_back(t);
    });
    return out;
}

std::size_t param_count(const Model& m) {
    std::size_t total = 0;
    for_each_array(m, [&](const std::string&, const Tensor& t) {
        if (t.requires_grad()) total += t.numel();
    });
    return total;
}

std::vector<NamedArray> model_arrays(const Model& m) {
    std::vector<NamedArray> out;
    for_each_array(m, [&](const std::string& name, const Tensor& t) {
        out.push_back({name, t.shape(), t.values()});
    });
    return out;
}

void load_model_arrays(Model& m, const std::vector<NamedArray>& arrays) {
    std::size_t expected = 0;
    for_each_array(m, [&](const std::string&, const Tensor&) { ++expected; });
    if (arrays.size() != expected) {
        throw FormatError("checkpoint holds " + std::to_string(arrays.size()) +
                          " arrays but the model has " + std::to_string(expected));
    }
    std::size_t i = 0;
    for_each_array(m, [&](const std::string& name, const Tensor& t) {
        const NamedArray& a = arrays[i++];
        if (a.name != name) {
            throw FormatError("checkpoint array '" + a.name + "' where '" + name +
                              "' was expected");
        }
        if (a.shape != t.shape()) {
            throw FormatError("checkpoint array '" + name + "' has shape " +
                              shape_str(a.shape) + ", model expects " + shape_str(t.shape()));
        }
        Tensor dst = t;  // shares the node; the copy drops constness only
        std::copy(a.values.begin(), a.values.end(), dst.data());
    });
}

void save_weights(const Model& m, const std::filesystem::path& path) {
    save_checkpoint(path.string(), model_arrays(m));
}

void load_weights(Model& m, const std::filesystem::path& path) {
    load_model_arrays(m, load_checkpoint(path.string()));
}

}  // namespace bbecog

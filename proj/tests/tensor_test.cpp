#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "bbecog/adam.hpp"
#include "bbecog/checkpoint.hpp"
#include "bbecog/ops.hpp"
#include "bbecog/rng.hpp"
#include "bbecog/tensor.hpp"
#include "doctest.h"
#include "support/grad_check.hpp"

using namespace bbecog;

TEST_CASE("tensor construction enforces the shape/data invariant") {
    auto t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.at({1, 2}) == 6.0f);
    CHECK_THROWS_AS(Tensor::from_data({2, 3}, {1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(t.item(), ShapeError);
    CHECK(Tensor::scalar(4.5f).item() == 4.5f);
}

TEST_CASE("backward on loss = sum of W·x leaves the outer structure of x on W") {
    auto x = Tensor::from_data({3}, {2.0f, -1.0f, 0.5f});
    auto W = Tensor::from_data({2, 3}, {0, 0, 0, 0, 0, 0}, true);
    auto b = Tensor::zeros({2}, true);
    auto y = linear(x, W, b);
    auto loss = testsup::sum_all(y);
    backward(loss);
    REQUIRE(W.has_grad());
    for (std::size_t o = 0; o < 2; ++o) {
        CHECK(W.grad()[o * 3 + 0] == doctest::Approx(2.0f));
        CHECK(W.grad()[o * 3 + 1] == doctest::Approx(-1.0f));
        CHECK(W.grad()[o * 3 + 2] == doctest::Approx(0.5f));
    }
}

TEST_CASE("parameters unreachable from the loss receive no gradient") {
    auto x = Tensor::from_data({2}, {1.0f, 2.0f});
    auto W = Tensor::from_data({2, 2}, {1, 0, 0, 1}, true);
    auto b = Tensor::zeros({2}, true);
    auto unused = Tensor::from_data({4}, {1, 1, 1, 1}, true);
    auto loss = testsup::sum_all(linear(x, W, b));
    backward(loss);
    CHECK(W.has_grad());
    CHECK_FALSE(unused.has_grad());
}

TEST_CASE("repeated backward accumulates onto leaf gradients") {
    // Documented contract: leaves accumulate across backward calls until
    // zero_grad; intermediate gradients are transient.
    auto x = Tensor::from_data({2}, {3.0f, -2.0f});
    auto W = Tensor::from_data({1, 2}, {1.0f, 1.0f}, true);
    auto b = Tensor::zeros({1}, true);
    auto loss = testsup::sum_all(linear(x, W, b));
    backward(loss);
    auto g1 = W.grad();
    backward(loss);
    REQUIRE(W.grad().size() == g1.size());
    for (std::size_t i = 0; i < g1.size(); ++i) {
        CHECK(W.grad()[i] == doctest::Approx(2.0f * g1[i]));
    }
    W.zero_grad();
    CHECK_FALSE(W.has_grad());
}

TEST_CASE("backward rejects non-scalar losses and undefined tensors") {
    auto v = Tensor::from_data({3}, {1, 2, 3}, true);
    CHECK_THROWS_AS(backward(v), std::invalid_argument);
    CHECK_THROWS_AS(backward(Tensor{}), std::invalid_argument);
}

TEST_CASE("NoGradGuard suppresses graph recording") {
    auto x = Tensor::from_data({1, 1, 4}, {1, 2, 3, 4}, true);
    auto k = Tensor::from_data({3}, {1, 1, 1}, true);
    {
        NoGradGuard guard;
        auto y = conv_temporal(x, k);
        CHECK_FALSE(y.requires_grad());
        CHECK(y.node()->is_leaf());
    }
    auto y = conv_temporal(x, k);
    CHECK(y.requires_grad());
    CHECK_FALSE(y.node()->is_leaf());
}

TEST_CASE("adam first step moves each weight by about -lr in the gradient direction") {
    AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    auto w = Tensor::from_data({3}, {1.0f, -2.0f, 0.5f}, true);
    const std::vector<float> before = w.values();
    auto gnode = w.node();
    gnode->grad = {2.0f, -0.5f, 1e-3f};  // nonzero gradient of arbitrary scale
    Adam opt({w}, cfg);
    opt.step();
    // m-hat = g, v-hat = g^2, so the step is -lr * g/(|g| + eps) = -lr * sign(g).
    CHECK(w.data()[0] == doctest::Approx(before[0] - 0.1).epsilon(1e-5));
    CHECK(w.data()[1] == doctest::Approx(before[1] + 0.1).epsilon(1e-5));
    CHECK(w.data()[2] == doctest::Approx(before[2] - 0.1).epsilon(1e-3));
    CHECK(opt.step_count() == 1);
}

TEST_CASE("adam with zero gradient or zero lr leaves weights bitwise unchanged") {
    auto w = Tensor::from_data({2}, {0.25f, -1.5f}, true);
    const std::vector<float> before = w.values();

    SUBCASE("explicit zero gradient") {
        AdamConfig cfg;
        cfg.weight_decay = 0.0;
        w.node()->grad = {0.0f, 0.0f};
        Adam opt({w}, cfg);
        opt.step();
        CHECK(w.values() == before);
    }
    SUBCASE("zero learning rate still advances the step counter") {
        AdamConfig cfg;
        cfg.lr = 0.0;
        cfg.weight_decay = 0.0;
        w.node()->grad = {1.0f, -2.0f};
        Adam opt({w}, cfg);
        opt.step();
        opt.step();
        CHECK(w.values() == before);
        CHECK(opt.step_count() == 2);
    }
}

TEST_CASE("adam coupled weight decay feeds the moment buffers") {
    AdamConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.5;
    auto w = Tensor::from_data({1}, {2.0f}, true);
    w.node()->grad = {0.0f};  // decay alone drives the step
    Adam opt({w}, cfg);
    opt.step();
    // Effective gradient 0.5*2 = 1, so first step is -lr * 1/(1 + eps).
    CHECK(w.data()[0] == doctest::Approx(2.0f - 0.01).epsilon(1e-5));
}

TEST_CASE("adam updates are deterministic") {
    auto run = [] {
        auto w = Tensor::from_data({4}, {1.0f, -1.0f, 0.5f, 2.0f}, true);
        AdamConfig cfg;
        cfg.lr = 0.05;
        Adam opt({w}, cfg);
        for (int i = 0; i < 10; ++i) {
            w.node()->grad = {0.3f, -0.7f, 0.1f, float(i)};
            opt.step();
        }
        return w.values();
    };
    CHECK(run() == run());
}

TEST_CASE("checkpoint round-trips named arrays bitwise") {
    Rng rng(99);
    std::vector<NamedArray> arrays;
    arrays.push_back({"bi_bcwt.k0", {5}, {}});
    arrays.push_back({"fc.weight", {3, 4}, {}});
    arrays.push_back({"fusion.bn.gamma", {2, 1, 3}, {}});
    for (auto& a : arrays) {
        a.values.resize(shape_numel(a.shape));
        for (auto& v : a.values) v = static_cast<float>(rng.normal());
    }
    const std::string bytes = serialize_checkpoint(arrays);
    CHECK(bytes.substr(0, 4) == "BBEN");
    auto back = deserialize_checkpoint(bytes);
    REQUIRE(back.size() == arrays.size());
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        CHECK(back[i].name == arrays[i].name);
        CHECK(back[i].shape == arrays[i].shape);
        CHECK(back[i].values == arrays[i].values);  // bitwise
    }
}

TEST_CASE("checkpoint rejects bad magic, truncation, and trailing bytes") {
    std::vector<NamedArray> arrays{{"w", {2}, {1.0f, 2.0f}}};
    std::string bytes = serialize_checkpoint(arrays);

    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(bad), FormatError);

    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);

    std::string trailing = bytes + "zz";
    CHECK_THROWS_AS(deserialize_checkpoint(trailing), FormatError);
}

TEST_CASE("rng matches the standard-mandated mt19937_64 reference value") {
    // The C++ standard pins the 10000th draw of a default-seeded (5489)
    // mt19937_64, which makes portability of the raw stream checkable.
    Rng rng(5489u);
    std::uint64_t v = 0;
    for (int i = 0; i < 10000; ++i) v = rng.next_u64();
    CHECK(v == 9981545732273789042ull);
}

TEST_CASE("rng streams are deterministic and seed-sensitive") {
    Rng a(7), b(7), c(8);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 100; ++i) {
        double va = a.uniform(), vb = b.uniform(), vc = c.uniform();
        all_equal = all_equal && (va == vb);
        any_diff = any_diff || (va != vc);
        CHECK(va >= 0.0);
        CHECK(va < 1.0);
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("rng normal draws have roughly standard moments") {
    Rng rng(1234);
    const int n = 20000;
    double sum = 0, sumsq = 0;
    for (int i = 0; i < n; ++i) {
        double v = rng.normal();
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("rng shuffle is a permutation and reproducible") {
    std::vector<int> v(50), w(50);
    for (int i = 0; i < 50; ++i) v[i] = w[i] = i;
    Rng a(3), b(3);
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}

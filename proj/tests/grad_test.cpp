// Finite-difference verification of every differentiable op, in float64.
// Each op gets >= 100 randomized small instances (tensors <= 64 elements);
// central differences with h = 1e-3 must agree within relative 1e-4.

#include <vector>

#include "bbecog/ops.hpp"
#include "bbecog/rng.hpp"
#include "doctest.h"
#include "support/grad_check.hpp"

using namespace bbecog;
using testsup::DTensor;
using testsup::check_gradients;
using testsup::rand_tensor;
using testsup::rand_weights;
using testsup::weighted_sum;

TEST_CASE("gradcheck: conv_temporal (odd and even kernels, bias)") {
    Rng rng(101);
    for (int trial = 0; trial < 110; ++trial) {
        const std::size_t C = 1 + rng.uniform_index(2);
        const std::size_t N = 1 + rng.uniform_index(2);
        const std::size_t T = 1 + rng.uniform_index(6);
        const std::size_t K = 1 + rng.uniform_index(8);
        auto x = rand_tensor(rng, {C, N, T});
        auto k = rand_tensor(rng, {K});
        auto b = rand_tensor(rng, {1});
        auto w = rand_weights(rng, C * N * T);
        check_gradients(
            [&](const std::vector<DTensor>& in) {
                return weighted_sum(conv_temporal(in[0], in[1], in[2]), w);
            },
            {x, k, b});
    }
}

TEST_CASE("gradcheck: conv_grouped (groups, strides, rank-4 and rank-5, bias)") {
    Rng rng(103);
    for (int trial = 0; trial < 110; ++trial) {
        const std::size_t G = 1 + rng.uniform_index(2);
        const std::size_t cpg = 1 + rng.uniform_index(2);
        const std::size_t opg = 1 + rng.uniform_index(2);
        const std::size_t H = 1 + rng.uniform_index(3), W = 1 + rng.uniform_index(3),
                          T = 1 + rng.uniform_index(4);
        const std::size_t kh = 1 + rng.uniform_index(H), kw = 1 + rng.uniform_index(W),
                          kt = 1 + rng.uniform_index(T);
        const Stride3 s{1 + rng.uniform_index(2), 1 + rng.uniform_index(2),
                        1 + rng.uniform_index(2)};
        const bool batched = trial % 2 == 0;
        Shape xs = batched ? Shape{2, G * cpg, H, W, T} : Shape{G * cpg, H, W, T};
        auto x = rand_tensor(rng, xs);
        auto kern = rand_tensor(rng, {G * opg, cpg, kh, kw, kt});
        auto bias = rand_tensor(rng, {G * opg});

        const std::size_t Ho = (H - kh) / s.h + 1, Wo = (W - kw) / s.w + 1,
                          To = (T - kt) / s.t + 1;
        auto w = rand_weights(rng, (batched ? 2 : 1) * G * opg * Ho * Wo * To);
        check_gradients(
            [&](const std::vector<DTensor>& in) {
                return weighted_sum(conv_grouped(in[0], in[1], in[2], s, G), w);
            },
            {x, kern, bias});
    }
}

TEST_CASE("gradcheck: batch_norm training mode") {
    Rng rng(107);
    for (int trial = 0; trial < 110; ++trial) {
        const std::size_t B = 2 + rng.uniform_index(2);
        const std::size_t C = 1 + rng.uniform_index(2);
        const std::size_t R = 1 + rng.uniform_index(3);
        auto x = rand_tensor(rng, {B, C, R});
        // Keep per-channel variance bounded away from 0 so 1/sqrt stays tame
        // under the finite-difference perturbations; the offset must alternate
        // within each channel's (batch, position) samples.
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t c = 0; c < C; ++c) {
                for (std::size_t r = 0; r < R; ++r) {
                    x.data()[(b * C + c) * R + r] += ((b * R + r) % 2 == 0) ? 2.0 : -2.0;
                }
            }
        }
        auto gamma = rand_tensor(rng, {C}, 0.5, 1.5);
        auto beta = rand_tensor(rng, {C});
        auto w = rand_weights(rng, B * C * R);
        check_gradients(
            [&, C](const std::vector<DTensor>& in) {
                auto rm = DTensor::zeros({C});
                auto rv = DTensor::filled({C}, 1.0);
                return weighted_sum(batch_norm(in[0], in[1], in[2], rm, rv, true), w);
            },
            {x, gamma, beta});
    }
}

TEST_CASE("gradcheck: batch_norm eval mode") {
    Rng rng(109);
    for (int trial = 0; trial < 110; ++trial) {
        const std::size_t B = 1 + rng.uniform_index(3);
        const std::size_t C = 1 + rng.uniform_index(2);
        const std::size_t R = 1 + rng.uniform_index(3);
        auto x = rand_tensor(rng, {B, C, R});
        auto gamma = rand_tensor(rng, {C}, 0.5, 1.5);
        auto beta = rand_tensor(rng, {C});
        auto rm = rand_tensor(rng, {C});
        auto rv = rand_tensor(rng, {C}, 0.5, 2.0);
        auto w = rand_weights(rng, B * C * R);
        check_gradients(
            [&](const std::vector<DTensor>& in) {
                auto rmc = rm, rvc = rv;
                return weighted_sum(batch_norm(in[0], in[1], in[2], rmc, rvc, false), w);
            },
            {x, gamma, beta});
    }
}

TEST_CASE("gradcheck: elu") {
    Rng rng(113);
    for (int trial = 0; trial < 110; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(16);
        auto x = rand_tensor(rng, {n});
        // Keep samples away from the kink at 0 where the finite difference
        // straddles two branches.
        for (std::size_t i = 0; i < n; ++i) {
            double v = rng.uniform(0.05, 2.0);
            x.data()[i] = rng.uniform() < 0.5 ? v : -v;
        }
        auto w = rand_weights(rng, n);
        check_gradients(
            [&](const std::vector<DTensor>& in) { return weighted_sum(elu(in[0]), w); }, {x});
    }
}

TEST_CASE("gradcheck: avg_pool_temporal") {
    Rng rng(127);
    for (int trial = 0; trial < 110; ++trial) {
        const std::size_t rowsdim = 1 + rng.uniform_index(3);
        const std::size_t T = 1 + rng.uniform_index(12);
        const std::size_t k = 1 + rng.uniform_index(T);
        auto x = rand_tensor(rng, {rowsdim, T});
        auto w = rand_weights(rng, rowsdim * (T / k));
        if (w.empty()) continue;  // degenerate window count
        check_gradients(
            [&](const std::vector<DTensor>& in) {
                return weighted_sum(avg_pool_temporal(in[0], k), w);
            },
            {x});
    }
}

TEST_CASE("gradcheck: linear") {
    Rng rng(131);
    for (int trial = 0; trial < 110; ++trial) {
        const std::size_t F = 1 + rng.uniform_index(5), O = 1 + rng.uniform_index(4);
        const bool batched = trial % 2 == 0;
        const std::size_t B = batched ? 1 + rng.uniform_index(3) : 1;
        auto x = batched ? rand_tensor(rng, {B, F}) : rand_tensor(rng, {F});
        auto W = rand_tensor(rng, {O, F});
        auto b = rand_tensor(rng, {O});
        auto w = rand_weights(rng, B * O);
        check_gradients(
            [&](const std::vector<DTensor>& in) {
                return weighted_sum(linear(in[0], in[1], in[2]), w);
            },
            {x, W, b});
    }
}

TEST_CASE("gradcheck: softmax_cross_entropy") {
    Rng rng(137);
    for (int trial = 0; trial < 110; ++trial) {
        const std::size_t B = 1 + rng.uniform_index(4), K = 2 + rng.uniform_index(5);
        auto z = rand_tensor(rng, {B, K}, -2, 2);
        std::vector<int> labels(B);
        for (auto& l : labels) l = static_cast<int>(rng.uniform_index(K));
        check_gradients(
            [&](const std::vector<DTensor>& in) { return softmax_cross_entropy(in[0], labels); },
            {z});
    }
}

TEST_CASE("gradcheck: reshape, pad_temporal, stack_axis1") {
    Rng rng(139);
    for (int trial = 0; trial < 110; ++trial) {
        const std::size_t A = 1 + rng.uniform_index(3), Bd = 1 + rng.uniform_index(4);
        auto x = rand_tensor(rng, {A, Bd});
        auto y = rand_tensor(rng, {A, Bd});
        const std::size_t left = rng.uniform_index(3), right = rng.uniform_index(3);
        auto wr = rand_weights(rng, A * Bd);
        check_gradients(
            [&](const std::vector<DTensor>& in) {
                return weighted_sum(reshape(in[0], {Bd, A}), wr);
            },
            {x});
        auto wp = rand_weights(rng, A * (Bd + left + right));
        check_gradients(
            [&](const std::vector<DTensor>& in) {
                return weighted_sum(pad_temporal(in[0], left, right), wp);
            },
            {x});
        auto ws = rand_weights(rng, 2 * A * Bd);
        check_gradients(
            [&](const std::vector<DTensor>& in) {
                return weighted_sum(stack_axis1<double>({in[0], in[1]}), ws);
            },
            {x, y});
    }
}

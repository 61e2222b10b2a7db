// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "neglab/diffcore.hpp"
#include "gradient_cases.hpp"
#include "support.hpp"

using namespace neglab;
using namespace neglab::testing;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("tensor shapes are validated", "[tensor]") {
    CHECK_THROWS_AS(Tensor<float>({2, 3}, std::vector<float>(5)), ContractViolation);
    CHECK_THROWS_AS(Tensor<float>(std::vector<std::size_t>{2, 0}), ContractViolation);
    CHECK_THROWS_AS(Tensor<float>(std::vector<std::size_t>{2, 2, 2}), ContractViolation);
    Tensor<float> t({2, 3}, 1.5f);
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(Tensor<float>::scalar(2.0f).item() == 2.0f);
}

TEST_CASE("d(x*x)/dx at 3 is 6", "[autodiff]") {
    Tape<double> tape;
    auto x = tape.leaf("x", Tensor<double>::scalar(3.0), true);
    auto vg = value_and_grad(tape, ad::mul(x, x));
    CHECK(vg.value == 9.0);
    CHECK(vg.grads.at("x").item() == 6.0);
}

TEST_CASE("sum of softmax has zero gradient", "[autodiff]") {
    Tape<double> tape;
    auto x = tape.leaf("x", random_tensor({3, 5}, 4), true);
    auto vg = value_and_grad(tape, ad::sum(ad::softmax_rows(x)));
    CHECK_THAT(vg.value, WithinAbs(3.0, 1e-12));
    for (double g : vg.grads.at("x").values()) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("value_and_grad reports flagged leaves only", "[autodiff]") {
    Tape<double> tape;
    auto a = tape.leaf("a", random_tensor({2, 2}, 1), true);
    auto b = tape.leaf("b", random_tensor({2, 2}, 2), false);
    auto unused = tape.leaf("unused", random_tensor({2, 2}, 3), true);
    (void)unused;
    auto vg = value_and_grad(tape, ad::sum(ad::mul(a, b)));
    CHECK(vg.grads.count("a") == 1);
    CHECK(vg.grads.count("b") == 0);
    REQUIRE(vg.grads.count("unused") == 1);
    for (double g : vg.grads.at("unused").values()) CHECK(g == 0.0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(vg.grads.at("a")[i] == b.value()[i]);
}

TEST_CASE("non-scalar output and opaque ops are rejected", "[autodiff]") {
    Tape<double> tape;
    auto x = tape.leaf("x", random_tensor({2, 2}, 1), true);
    CHECK_THROWS_AS(value_and_grad(tape, ad::gelu(x)), ContractViolation);
    auto o = ad::opaque<double>({x}, [](const std::vector<const Tensor<double>*>& in) { return *in[0]; }, "identity");
    CHECK_THROWS_AS(value_and_grad(tape, ad::sum(o)), UnsupportedOpError);
}

TEST_CASE("cosine similarity of two length-4 vectors matches finite differences", "[gradcheck]") {
    auto b = [](Tape<double>& t, Var<double> x) {
        auto other = t.constant(Tensor<double>({1, 4}, std::vector<double>{0.3, -1.2, 0.7, 2.0}));
        return ad::sum(ad::row_dot(ad::l2_normalize_rows(x), ad::l2_normalize_rows(other)));
    };
    auto x = random_vector(4, 99);
    CHECK(finite_diff_check(tape_function(b), x, 1e-3) < 1e-4);
}

TEST_CASE("finite_diff_check basics", "[gradcheck]") {
    GradFunction linear = [](std::span<const double> x, std::vector<double>* g) {
        const double a[] = {1.5, -2.0, 0.25};
        double s = 0;
        for (std::size_t i = 0; i < 3; ++i) s += a[i] * x[i];
        if (g) g->assign(a, a + 3);
        return s;
    };
    std::vector<double> p = {0.1, 0.2, -0.3};
    CHECK(finite_diff_check(linear, p, 1e-3) < 1e-10);

    // |x| at 0: the subgradient +1 disagrees with the symmetric difference 0.
    auto abs_fn = tape_function([](Tape<double>&, Var<double> x) { return ad::sum(ad::abs(x)); });
    std::vector<double> zero = {0.0};
    CHECK(finite_diff_check(abs_fn, zero, 1e-3) > 1.0);

    GradFunction nan_fn = [](std::span<const double> x, std::vector<double>* g) {
        if (g) g->assign(1, 1.0);
        return x[0] > 0.0 ? std::nan("") : x[0];
    };
    std::vector<double> at = {0.0};
    CHECK_THROWS_AS(finite_diff_check(nan_fn, at, 1e-3), NumericalDomainError);
}

TEST_CASE("every primitive passes the finite-difference check at 10 random points", "[gradcheck]") {
    const auto cases = primitive_gradient_cases();
    for (const auto& [name, fn] : cases) {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            INFO(name << " seed " << seed);
            CHECK(fn(seed) < 1e-4);
        }
    }
}

TEST_CASE("backward is linear in the output", "[autodiff]") {
    auto x0 = random_tensor({3, 4}, 5);
    auto grad_of = [&](int which) {
        Tape<double> tape;
        auto x = tape.leaf("x", x0, true);
        auto f = ad::sum(ad::gelu(x));
        auto g = ad::sum(ad::softmax_rows(ad::mul(x, x)));
        Var<double> out = which == 0 ? f : which == 1 ? g : ad::add(f, g);
        return value_and_grad(tape, out).grads.at("x");
    };
    auto a = grad_of(0), b = grad_of(1), c = grad_of(2);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK_THAT(c[i], WithinAbs(a[i] + b[i], 1e-12));
}

TEST_CASE("tape replay is bit-deterministic", "[autodiff]") {
    Tape<float> tape;
    auto x = tape.leaf("x", random_tensor<float>({4, 8}, 3), true);
    auto y = ad::sum(ad::layer_norm(ad::gelu(ad::matmul(x, ad::transpose(x))), tape.constant(Tensor<float>({4}, 1.0f)),
                                    tape.constant(Tensor<float>({4}, 0.0f))));
    const float before = y.value().item();
    tape.replay();
    CHECK(std::memcmp(&before, &y.value().values()[0], sizeof(float)) == 0);
    tape.set_leaf(*tape.find_leaf("x"), random_tensor<float>({4, 8}, 4));
    tape.replay();
    CHECK(y.value().item() != before);
}

TEST_CASE("adamw first step matches the hand-evaluated update", "[adamw]") {
    ParameterSet<double> p;
    p.add("w", Tensor<double>::scalar(1.0), true);
    AdamWState<double> st;
    st.config.weight_decay = 0.0;
    adamw_step(p, {{"w", Tensor<double>::scalar(1.0)}}, st, 0.01);
    // m_hat = 1, v_hat = 1, delta = lr / (1 + eps)
    CHECK_THAT(p.at("w").item(), WithinAbs(1.0 - 0.01 / (1.0 + 1e-8), 1e-15));
    CHECK(st.step == 1);
}

TEST_CASE("adamw zero gradient and decoupled decay", "[adamw]") {
    ParameterSet<double> p;
    p.add("w", Tensor<double>::scalar(1.0), true);
    p.add("frozen", Tensor<double>::scalar(2.0), false);
    AdamWState<double> st;
    st.config.weight_decay = 0.0;
    adamw_step(p, {{"w", Tensor<double>::scalar(0.0)}}, st, 0.01);
    CHECK(p.at("w").item() == 1.0);
    CHECK(st.step == 1);

    AdamWState<double> decay;
    decay.config.weight_decay = 0.1;
    adamw_step(p, {{"w", Tensor<double>::scalar(0.0)}, {"frozen", Tensor<double>::scalar(5.0)}}, decay, 0.01);
    CHECK_THAT(p.at("w").item(), WithinAbs(0.999, 1e-15));
    CHECK(p.at("frozen").item() == 2.0);
    adamw_step(p, {}, decay, 0.01);
    CHECK(decay.step == 2);
}

TEST_CASE("adamw rejects mismatched gradients", "[adamw]") {
    ParameterSet<double> p;
    p.add("w", Tensor<double>({2, 2}, 1.0), true);
    AdamWState<double> st;
    CHECK_THROWS_AS(adamw_step(p, {{"w", Tensor<double>({4}, 1.0)}}, st, 0.01), ContractViolation);
    CHECK_THROWS_AS(adamw_step(p, {{"v", Tensor<double>({2, 2}, 1.0)}}, st, 0.01), ContractViolation);
    CHECK_THROWS_AS(adamw_step(p, {}, st, -1.0), ContractViolation);
}

TEST_CASE("adamw moments keep parameter shapes over many steps", "[adamw]") {
    ParameterSet<float> p;
    p.add("a", random_tensor<float>({3, 2}, 1), true);
    p.add("b", random_tensor<float>({5}, 2), true);
    AdamWState<float> st;
    for (int i = 1; i <= 5; ++i) {
        adamw_step(p, {{"a", random_tensor<float>({3, 2}, 10 + i)}, {"b", random_tensor<float>({5}, 20 + i)}}, st, 1e-3);
        CHECK(st.step == static_cast<std::uint64_t>(i));
    }
    CHECK(st.first_moment.at("a").same_shape(p.at("a")));
    CHECK(st.second_moment.at("b").same_shape(p.at("b")));
}

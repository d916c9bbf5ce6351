// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "rayrope/grad_check.hpp"
#include "rayrope/tensor.hpp"

using namespace rayrope;

namespace {

Tensor<double> random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = dist(rng);
    return Tensor<double>::from_values(std::move(shape), std::move(v), /*requires_grad=*/true);
}

Shape random_shape(std::mt19937_64& rng, int max_rank = 4) {
    std::uniform_int_distribution<int> rank_dist(1, max_rank);
    std::uniform_int_distribution<int> dim_dist(1, 5);
    Shape s(static_cast<std::size_t>(rank_dist(rng)));
    for (auto& d : s) d = dim_dist(rng);
    return s;
}

} // namespace

TEST_CASE("forward values match scalar references") {
    auto a = Tensor<double>::from_values({2, 2}, {1, 2, 3, 4});
    auto b = Tensor<double>::from_values({2, 2}, {5, 6, 7, 8});

    auto sum_ab = add(a, b);
    CHECK(sum_ab.value_at(0) == 6.0);
    CHECK(sum_ab.value_at(3) == 12.0);

    auto prod = matmul(a, b);
    CHECK(prod.value_at(0) == doctest::Approx(19.0));
    CHECK(prod.value_at(1) == doctest::Approx(22.0));
    CHECK(prod.value_at(2) == doctest::Approx(43.0));
    CHECK(prod.value_at(3) == doctest::Approx(50.0));

    auto tr = transpose(a);
    CHECK(tr.value_at(1) == 3.0);

    auto soft = softmax_last(Tensor<double>::from_values({2}, {0.0, 0.0}));
    CHECK(soft.value_at(0) == doctest::Approx(0.5));
    CHECK(soft.value_at(1) == doctest::Approx(0.5));
}

TEST_CASE("matmul by identity returns the input") {
    std::mt19937_64 rng(7);
    auto eye = Tensor<double>::from_values({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    for (int k : {1, 4, 7}) {
        auto a = random_tensor(rng, {3, k});
        auto out = matmul(eye, a);
        for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(out.value_at(i) == a.value_at(i));
    }
}

TEST_CASE("shape mismatches are rejected with both shapes named") {
    auto a = Tensor<double>::zeros({2, 3});
    auto b = Tensor<double>::zeros({3, 2});
    try {
        add(a, b);
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2, 3]") != std::string::npos);
        CHECK(msg.find("[3, 2]") != std::string::npos);
    }
    CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
    CHECK_THROWS_AS(softmax_last(Tensor<double>::zeros({3, 0})), std::invalid_argument);
}

TEST_CASE("d/dx sum(exp(x)) equals exp(x)") {
    auto x = Tensor<double>::from_values({2}, {0.0, 1.0}, true);
    auto loss = sum(exp(x));
    backward(loss);
    // frozen from central differences, step 1e-5, 64-bit
    CHECK(x.grad()[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(x.grad()[1] == doctest::Approx(2.718281828).epsilon(1e-8));
}

TEST_CASE("grad_check basics") {
    auto x = Tensor<double>::from_values({1}, {3.0}, true);
    auto report = grad_check([&] { return mul(x, x); }, {{"x", x}});
    CHECK(report.pass);

    // f(x) = x^2 at 3: analytic 6
    x.zero_grad();
    auto loss = mul(x, x);
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(6.0));

    // constant function: zero gradient everywhere, passes
    auto y = Tensor<double>::from_values({3}, {1.0, -2.0, 0.5}, true);
    auto report2 = grad_check([&] { return Tensor<double>::scalar_value(4.2); }, {{"y", y}});
    CHECK(report2.pass);
    CHECK(report2.max_rel_err == 0.0);
}

TEST_CASE("every op passes finite-difference checks on random shapes") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 8; ++trial) {
        const Shape shape = random_shape(rng);
        auto x = random_tensor(rng, shape);
        auto y = random_tensor(rng, shape);

        auto weighted = [](const Tensor<double>& t, std::uint64_t salt) {
            // deterministic weights turn any tensor into a scalar loss
            std::mt19937_64 r(salt);
            std::normal_distribution<double> d(0.0, 1.0);
            std::vector<double> w(static_cast<std::size_t>(t.numel()));
            for (auto& v : w) v = d(r);
            return sum(mul(t, Tensor<double>::from_values(t.shape(), std::move(w))));
        };

        const std::vector<std::pair<std::string, std::function<Tensor<double>()>>> cases = {
            {"add", [&] { return weighted(add(x, y), 1); }},
            {"sub", [&] { return weighted(sub(x, y), 2); }},
            {"mul", [&] { return weighted(mul(x, y), 3); }},
            {"scalar_mul", [&] { return weighted(scalar_mul(x, 1.7), 4); }},
            {"exp", [&] { return weighted(exp(x), 5); }},
            {"sin", [&] { return weighted(sin(x), 6); }},
            {"cos", [&] { return weighted(cos(x), 7); }},
            {"sigmoid", [&] { return weighted(sigmoid(x), 8); }},
            {"silu", [&] { return weighted(silu(x), 9); }},
            {"sum", [&] { return sum(x); }},
            {"mean", [&] { return mean(x); }},
            {"softmax", [&] { return weighted(softmax_last(x), 10); }},
            {"mse", [&] { return mse_loss(x, y); }},
            {"reshape", [&] { return weighted(reshape(x, {x.numel()}), 11); }},
        };
        for (const auto& [name, fn] : cases) {
            auto report = grad_check(fn, {{"x", x}, {"y", y}});
            INFO(name << " on shape " << shape_str(shape));
            CHECK(report.pass);
        }
    }
}

TEST_CASE("positive-domain ops pass finite-difference checks") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 6; ++trial) {
        Shape shape = random_shape(rng, 3);
        std::uniform_real_distribution<double> pos(0.5, 3.0);
        std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
        for (auto& x : v) x = pos(rng);
        auto t = Tensor<double>::from_values(shape, std::move(v), true);
        auto r1 = grad_check([&] { return sum(log(t)); }, {{"t", t}});
        CHECK(r1.pass);
        auto r2 = grad_check([&] { return sum(reciprocal(t)); }, {{"t", t}});
        CHECK(r2.pass);
    }
}

TEST_CASE("matmul, transpose, concat, slice, take_rows, add_rows, layer_norm gradients") {
    std::mt19937_64 rng(44);
    auto a = random_tensor(rng, {3, 4});
    auto b = random_tensor(rng, {4, 2});
    auto gamma = random_tensor(rng, {4}, 0.5);
    auto beta = random_tensor(rng, {4}, 0.5);
    auto bias = random_tensor(rng, {2});

    auto r = grad_check(
        [&] {
            auto ln = layer_norm(a, gamma, beta);
            auto prod = add_rows(matmul(ln, b), bias);
            auto t = transpose(prod);
            auto joined = concat(std::vector<Tensor<double>>{t, t}, 1);
            auto cut = slice(joined, 1, 1, 4);
            auto rows = take_rows(cut, {1, 0, 1});
            return mean(mul(rows, rows));
        },
        {{"a", a}, {"b", b}, {"gamma", gamma}, {"beta", beta}, {"bias", bias}});
    CHECK(r.pass);
}

TEST_CASE("backward of a sum of independent graphs equals the sum of separate backwards") {
    std::mt19937_64 rng(45);
    auto x = random_tensor(rng, {5});
    auto y = random_tensor(rng, {5});

    auto loss_a = [&] { return sum(mul(x, x)); };
    auto loss_b = [&] { return mean(mul(sin(x), y)); };

    x.zero_grad();
    y.zero_grad();
    backward(add(loss_a(), loss_b()));
    std::vector<double> combined(x.grad().begin(), x.grad().end());
    std::vector<double> combined_y(y.grad().begin(), y.grad().end());

    x.zero_grad();
    y.zero_grad();
    backward(loss_a());
    backward(loss_b());
    for (std::size_t i = 0; i < combined.size(); ++i) {
        CHECK(x.grad()[i] == doctest::Approx(combined[i]).epsilon(1e-12));
        CHECK(y.grad()[i] == doctest::Approx(combined_y[i]).epsilon(1e-12));
    }
}

TEST_CASE("every reachable requires_grad tensor has a populated grad after backward") {
    std::mt19937_64 rng(46);
    auto a = random_tensor(rng, {2, 3});
    auto b = random_tensor(rng, {3, 3});
    auto mid = matmul(a, b);
    auto loss = sum(silu(mid));
    backward(loss);
    CHECK(a.has_grad());
    CHECK(b.has_grad());
    CHECK(mid.has_grad());
}

TEST_CASE("matmul is deterministic for a fixed thread count") {
    std::mt19937_64 rng(47);
    auto a = random_tensor(rng, {33, 17});
    auto b = random_tensor(rng, {17, 29});
    set_parallel_threads(2);
    auto first = matmul(a, b);
    auto second = matmul(a, b);
    set_parallel_threads(1);
    for (std::int64_t i = 0; i < first.numel(); ++i)
        CHECK(first.value_at(i) == second.value_at(i));
}

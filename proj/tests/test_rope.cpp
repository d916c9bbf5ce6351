// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "rayrope/rope.hpp"

using namespace rayrope;

TEST_CASE("rope_block basics") {
    const Block2 id = rope_block(3.7, 0.0);
    CHECK(id.a == 1.0);
    CHECK(id.b == 0.0);

    const Block2 quarter = rope_block(1.0, M_PI / 2.0);
    CHECK(quarter.a == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(quarter.b == doctest::Approx(1.0));

    // composition: rotations add angles
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 50; ++i) {
        const double w = std::exp(u(rng)), x = u(rng), y = u(rng);
        const Block2 bx = rope_block(w, x), by = rope_block(w, y), bxy = rope_block(w, x + y);
        const double a = bx.a * by.a - bx.b * by.b;
        const double b = bx.b * by.a + bx.a * by.b;
        CHECK(std::abs(a - bxy.a) < 1e-12);
        CHECK(std::abs(b - bxy.b) < 1e-12);
    }
}

TEST_CASE("expected_block degenerate interval reduces to rope_block") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 100; ++i) {
        const double w = std::exp(u(rng) * 0.5), x = u(rng);
        const Block2 e = expected_block(w, x, x);
        const Block2 r = rope_block(w, x);
        CHECK(std::abs(e.a - r.a) < 1e-9);
        CHECK(std::abs(e.b - r.b) < 1e-9);
    }
    CHECK_THROWS_AS(expected_block(1.0, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("expected_block closed form: omega=pi over [0,1]") {
    // int_0^1 cos(pi x) dx = 0, int_0^1 sin(pi x) dx = 2/pi; cross-checked by
    // Monte-Carlo below.
    const Block2 e = expected_block(M_PI, 0.0, 1.0);
    CHECK(e.a == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(e.b == doctest::Approx(2.0 / M_PI));
    const Block2 mc = oracles::mc_expected_block(M_PI, 0.0, 1.0, 1000000, 7);
    CHECK(std::abs(e.a - mc.a) < 1e-3);
    CHECK(std::abs(e.b - mc.b) < 1e-3);
}

TEST_CASE("expected_block matches Monte-Carlo within 3 standard errors") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> logw(std::log(1e-2), std::log(1e2));
    std::uniform_real_distribution<double> center(-5.0, 5.0);
    std::uniform_real_distribution<double> width(0.0, 10.0);
    constexpr std::size_t kSamples = 1000000;
    const double three_se = 3.0 / std::sqrt(static_cast<double>(kSamples));

    struct Draw {
        double w, lo, hi;
    };
    std::vector<Draw> draws;
    for (int i = 0; i < 24; ++i) {
        const double w = std::exp(logw(rng));
        const double c = center(rng), h = 0.5 * width(rng);
        draws.push_back({w, c - h, c + h});
    }
    std::vector<double> errs(draws.size(), 0.0);
    oracles::parallel_draws(static_cast<int>(draws.size()), [&](int i) {
        const auto& d = draws[static_cast<std::size_t>(i)];
        const Block2 analytic = expected_block(d.w, d.lo, d.hi);
        const Block2 mc = oracles::mc_expected_block(d.w, d.lo, d.hi, kSamples,
                                                     1000 + static_cast<std::uint64_t>(i));
        errs[static_cast<std::size_t>(i)] =
            std::max(std::abs(analytic.a - mc.a), std::abs(analytic.b - mc.b));
    });
    for (const double e : errs) CHECK(e < three_se);
}

TEST_CASE("magnitude law |E| = |2 sin(w delta / 2) / (w delta)|") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> logw(std::log(1e-2), std::log(1e2));
    std::uniform_real_distribution<double> center(-5.0, 5.0);
    std::uniform_real_distribution<double> width(1e-6, 10.0);
    for (int i = 0; i < 200; ++i) {
        const double w = std::exp(logw(rng));
        const double c = center(rng), h = 0.5 * width(rng);
        const Block2 e = expected_block(w, c - h, c + h);
        const double half = 0.5 * w * 2.0 * h;
        const double expected_mag = std::abs(2.0 * std::sin(half) / (w * 2.0 * h));
        CHECK(std::sqrt(e.magnitude_sq()) == doctest::Approx(expected_mag).epsilon(1e-9));
        CHECK(e.magnitude_sq() <= 1.0 + 1e-9);
    }
}

TEST_CASE("conjugate symmetry: transpose equals the encoding of the negated interval") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int i = 0; i < 100; ++i) {
        const double w = std::exp(0.5 * u(rng));
        double a = u(rng), b = u(rng);
        if (a > b) std::swap(a, b);
        const Block2 t = expected_block(w, a, b).transposed();
        const Block2 n = expected_block(w, -b, -a);
        CHECK(t.a == n.a);
        CHECK(t.b == n.b);
    }
}

TEST_CASE("width_eps branch is continuous") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int i = 0; i < 50; ++i) {
        const double w = std::exp(u(rng) * 0.5);
        const double x = u(rng);
        const double h = 1e-6;
        const Block2 e = expected_block(w, x - h, x + h);
        const Block2 r = rope_block(w, x);
        CHECK(std::abs(e.a - r.a) < 1e-8);
        CHECK(std::abs(e.b - r.b) < 1e-8);
    }
}

TEST_CASE("frequency schedule") {
    const auto f = frequency_schedule(4, 0.05, 50.0);
    CHECK(f.front() == doctest::Approx(50.0));
    CHECK(f.back() == doctest::Approx(0.05));
    CHECK(f[1] / f[2] == doctest::Approx(f[0] / f[1]).epsilon(1e-9));

    const auto single = frequency_schedule(1, 0.05, 50.0);
    CHECK(single.size() == 1);
    CHECK(single[0] == doctest::Approx(std::sqrt(0.05 * 50.0)));
    CHECK_THROWS_AS(frequency_schedule(0, 0.05, 50.0), std::invalid_argument);
}

namespace {

ProjectedRayInterval interval_from(const std::array<double, 6>& lo, const std::array<double, 6>& hi) {
    ProjectedRayInterval iv;
    iv.lo = lo;
    iv.hi = hi;
    return iv;
}

} // namespace

TEST_CASE("build_encoding layout and postconditions") {
    const std::vector<double> freqs = frequency_schedule(2, 0.5, 5.0);

    SUBCASE("all-zero deterministic position gives identity blocks") {
        const auto iv = interval_from({0, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 0, 0});
        const BlockEncoding enc = build_encoding(std::vector<ProjectedRayInterval>{iv}, 1, freqs, 24);
        for (const auto& b : enc.blocks) {
            CHECK(b.a == 1.0);
            CHECK(b.b == 0.0);
        }
    }
    SUBCASE("deterministic positions give pure rotations") {
        const auto iv = interval_from({1, -2, 0.5, 3, -1, 0.7}, {1, -2, 0.5, 3, -1, 0.7});
        const BlockEncoding enc = build_encoding(std::vector<ProjectedRayInterval>{iv}, 1, freqs, 24);
        for (const auto& b : enc.blocks) CHECK(b.magnitude_sq() == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("a full-period interval zeroes exactly its slot") {
        // component 2 spans one period of the first frequency
        auto lo = std::array<double, 6>{0, 0, 0, 0, 0, 0};
        auto hi = std::array<double, 6>{0, 0, 2.0 * M_PI / freqs[0], 0, 0, 0};
        const BlockEncoding enc =
            build_encoding(std::vector<ProjectedRayInterval>{interval_from(lo, hi)}, 1, freqs, 24);
        const int F = static_cast<int>(freqs.size());
        for (std::size_t k = 0; k < enc.blocks.size(); ++k) {
            const double mag = std::sqrt(enc.blocks[k].magnitude_sq());
            if (static_cast<int>(k) == 2 * F + 0)
                CHECK(mag < 1e-9);
            else
                CHECK(mag > 0.1);
        }
    }
    SUBCASE("divisibility violations carry the required divisor") {
        const auto iv = interval_from({}, {});
        try {
            build_encoding(std::vector<ProjectedRayInterval>{iv}, 1, freqs, 26);
            FAIL("expected invalid_argument");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("12") != std::string::npos);
        }
    }
}

TEST_CASE("apply_encoding modes") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const std::vector<double> freqs = frequency_schedule(2, 0.5, 5.0);
    const int dim = 24;

    std::array<double, 6> pos{};
    for (auto& p : pos) p = u(rng);
    const auto det = interval_from(pos, pos);
    const BlockEncoding enc = build_encoding(std::vector<ProjectedRayInterval>{det}, 1, freqs, dim);

    std::vector<double> vec(static_cast<std::size_t>(dim));
    for (auto& v : vec) v = u(rng);

    SUBCASE("identity encoding leaves vectors unchanged") {
        const BlockEncoding id = identity_encoding(1, freqs, dim);
        for (const auto mode : {ApplyMode::query, ApplyMode::key_value, ApplyMode::output}) {
            const auto out = apply_encoding(id, vec, mode);
            for (std::size_t i = 0; i < vec.size(); ++i) CHECK(out[i] == vec[i]);
        }
    }
    SUBCASE("query then output restores deterministic tokens") {
        const auto mid = apply_encoding(enc, vec, ApplyMode::query);
        const auto back = apply_encoding(enc, mid, ApplyMode::output);
        for (std::size_t i = 0; i < vec.size(); ++i) CHECK(back[i] == doctest::Approx(vec[i]).epsilon(1e-9));
    }
    SUBCASE("norm is preserved by pure rotations and shrunk by the magnitude factor") {
        const auto rotated = apply_encoding(enc, vec, ApplyMode::key_value);
        double n0 = 0.0, n1 = 0.0;
        for (std::size_t i = 0; i < vec.size(); ++i) {
            n0 += vec[i] * vec[i];
            n1 += rotated[i] * rotated[i];
        }
        CHECK(std::sqrt(n1) == doctest::Approx(std::sqrt(n0)).epsilon(1e-9));

        // uncertain interval: each pair's norm scales by the block magnitude
        auto hi = pos;
        for (auto& p : hi) p += 0.8;
        const BlockEncoding wide =
            build_encoding(std::vector<ProjectedRayInterval>{interval_from(pos, hi)}, 1, freqs, dim);
        const auto damped = apply_encoding(wide, vec, ApplyMode::key_value);
        for (std::size_t k = 0; k < wide.blocks.size(); ++k) {
            const double in_norm = std::hypot(vec[2 * k], vec[2 * k + 1]);
            const double out_norm = std::hypot(damped[2 * k], damped[2 * k + 1]);
            const double mag = std::sqrt(wide.blocks[k].magnitude_sq());
            CHECK(out_norm == doctest::Approx(mag * in_norm).epsilon(1e-9));
            CHECK(out_norm <= in_norm + 1e-9);
        }
    }
    SUBCASE("length mismatches are rejected") {
        std::vector<double> bad(static_cast<std::size_t>(dim - 2));
        CHECK_THROWS_AS(apply_encoding(enc, bad, ApplyMode::query), std::invalid_argument);
    }
}

TEST_CASE("relative_product") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const std::vector<double> freqs = frequency_schedule(2, 0.5, 5.0);
    const int dim = 24;

    SUBCASE("identical deterministic tokens give the identity") {
        std::array<double, 6> pos{};
        for (auto& p : pos) p = u(rng);
        const BlockEncoding enc =
            build_encoding(std::vector<ProjectedRayInterval>{interval_from(pos, pos)}, 1, freqs, dim);
        const BlockEncoding rel = relative_product(enc, enc);
        for (const auto& b : rel.blocks) {
            CHECK(b.a == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(b.b == doctest::Approx(0.0).epsilon(1e-12));
        }
    }
    SUBCASE("deterministic tokens reduce to the rope block of the difference") {
        std::array<double, 6> pi{}, pj{};
        for (auto& p : pi) p = u(rng);
        for (auto& p : pj) p = u(rng);
        const BlockEncoding ei =
            build_encoding(std::vector<ProjectedRayInterval>{interval_from(pi, pi)}, 1, freqs, dim);
        const BlockEncoding ej =
            build_encoding(std::vector<ProjectedRayInterval>{interval_from(pj, pj)}, 1, freqs, dim);
        const BlockEncoding rel = relative_product(ei, ej);
        const int F = static_cast<int>(freqs.size());
        for (int c = 0; c < 6; ++c)
            for (int f = 0; f < F; ++f) {
                const Block2 expect = rope_block(freqs[static_cast<std::size_t>(f)],
                                                 pi[static_cast<std::size_t>(c)] -
                                                     pj[static_cast<std::size_t>(c)]);
                const Block2& got = rel.blocks[static_cast<std::size_t>(c * F + f)];
                CHECK(got.a == doctest::Approx(expect.a).epsilon(1e-12));
                CHECK(got.b == doctest::Approx(expect.b).epsilon(1e-12));
            }
    }
    SUBCASE("uncertain intervals match the Monte-Carlo relative expectation") {
        for (int trial = 0; trial < 6; ++trial) {
            const double w = std::exp(u(rng));
            double ilo = u(rng), ihi = ilo + std::abs(u(rng));
            double jlo = u(rng), jhi = jlo + std::abs(u(rng));
            const Block2 bi = expected_block(w, ilo, ihi);
            const Block2 bj = expected_block(w, jlo, jhi);
            const Block2 analytic{bi.a * bj.a + bi.b * bj.b, bi.b * bj.a - bi.a * bj.b};
            const Block2 mc = oracles::mc_relative_block(w, ilo, ihi, jlo, jhi, 1000000,
                                                         42 + static_cast<std::uint64_t>(trial));
            CHECK(std::abs(analytic.a - mc.a) < 1e-3);
            CHECK(std::abs(analytic.b - mc.b) < 1e-3);
        }
    }
    SUBCASE("layout mismatch is rejected") {
        const BlockEncoding a = identity_encoding(1, freqs, dim);
        const BlockEncoding b = identity_encoding(1, frequency_schedule(1, 0.5, 5.0), 12);
        CHECK_THROWS_AS(relative_product(a, b), std::invalid_argument);
    }
}

TEST_CASE("scale_interval divides pixel components only") {
    ProjectedRayInterval iv;
    for (int c = 0; c < 6; ++c) {
        iv.lo[static_cast<std::size_t>(c)] = 10.0 + c;
        iv.hi[static_cast<std::size_t>(c)] = 20.0 + c;
    }
    const ProjectedRayInterval s = scale_interval(iv, 1.0 / 32.0);
    CHECK(s.lo[3] == doctest::Approx((10.0 + 3) / 32.0));
    CHECK(s.hi[4] == doctest::Approx((20.0 + 4) / 32.0));
    CHECK(s.lo[0] == iv.lo[0]);
    CHECK(s.lo[5] == iv.lo[5]);
}

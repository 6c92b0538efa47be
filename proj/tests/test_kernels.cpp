#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "ggnet/gradcheck.hpp"
#include "ggnet/kernels.hpp"
#include "ggnet/tensor_io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ggnet;
using ggnet::testing::dot;
using ggnet::testing::off_grid;
using ggnet::testing::random_conv;
using ggnet::testing::random_tensor;
using namespace ggnet::oracle;

namespace {

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
    return (a.data() - b.data()).cwiseAbs().maxCoeff();
}

} // namespace

TEST(Conv2d, ScalarProduct) {
    Tensor<float> in(1, 1, 1, 1, 2.0f);
    ConvParams<float> p(1, 1, 1);
    p.weight[0] = 3.0f;
    const auto out = conv2d(in, p);
    ASSERT_EQ(out.shape(), (Shape{1, 1, 1, 1}));
    EXPECT_EQ(out[0], 6.0f);
}

TEST(Conv2d, IdentityKernel) {
    std::mt19937 rng(1);
    const auto in = random_tensor<float>({2, 3, 5, 7}, rng);
    ConvParams<float> p(3, 3, 3);
    for (int c = 0; c < 3; ++c) p.weight(c, c, 1, 1) = 1.0f;
    const auto out = conv2d(in, p);
    ASSERT_EQ(out.shape(), in.shape());
    EXPECT_EQ(out.data(), in.data());
}

TEST(Conv2d, MatchesNestedLoopOracle) {
    std::mt19937 rng(7);
    const auto in = random_tensor<double>({1, 2, 4, 4}, rng);
    const auto p = random_conv<double>(3, 2, 3, rng);
    EXPECT_LT(max_abs_diff(conv2d(in, p), conv_oracle(in, p)), 1e-6);
}

TEST(Conv2d, PropertyRandomShapesFloat) {
    std::mt19937 rng(11);
    std::uniform_int_distribution<int> dn(1, 2), dc(1, 4), dh(1, 8), dk(0, 2), ds(1, 2);
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 2 * dk(rng) + 1;
        const int stride = ds(rng);
        const Shape s{dn(rng), dc(rng), dh(rng), dh(rng)};
        const auto in = random_tensor<float>(s, rng);
        const auto p = random_conv<float>(dc(rng), s.c, k, rng, stride, k / 2);
        const auto got = conv2d(in, p).cast<double>();
        const auto want = conv_oracle(in.cast<double>(), p.cast<double>());
        ASSERT_EQ(got.shape(), want.shape());
        EXPECT_LT(max_abs_diff(got, want), 1e-5) << "trial " << trial << " shape " << s;
    }
}

TEST(Conv2d, Errors) {
    Tensor<float> in(1, 2, 4, 4);
    ConvParams<float> p(1, 3, 3);
    EXPECT_THROW(conv2d(in, p), DimensionError);
    ConvParams<float> big(1, 2, 5, 1, 0);
    Tensor<float> tiny(1, 2, 3, 3);
    EXPECT_THROW(conv2d(tiny, big), ConfigError);
}

TEST(Conv2d, GradientsPassFiniteDifferences) {
    for (int seed = 0; seed < 10; ++seed) {
        std::mt19937 rng(100 + seed);
        const auto in = random_tensor<double>({2, 2, 5, 4}, rng);
        const auto p = random_conv<double>(3, 2, 3, rng, 1 + seed % 2);
        const auto probe = random_tensor<double>(conv2d(in, p).shape(), rng);
        const auto g = conv2d_backward(in, p, probe);

        auto r_in = finite_diff_check([&](const Tensor<double>& x) { return dot(conv2d(x, p), probe); }, in,
                                      g.input);
        EXPECT_TRUE(r_in.passed) << r_in.summary();
        auto r_w = finite_diff_check(
            [&](const Tensor<double>& w) {
                auto q = p;
                q.weight = w;
                return dot(conv2d(in, q), probe);
            },
            p.weight, g.weight);
        EXPECT_TRUE(r_w.passed) << r_w.summary();
        auto r_b = finite_diff_check(
            [&](const VectorX<double>& b) {
                auto q = p;
                q.bias = b;
                return dot(conv2d(in, q), probe);
            },
            p.bias, g.bias);
        EXPECT_TRUE(r_b.passed) << r_b.summary();
    }
}

TEST(Activations, ReluAndSigmoidValues) {
    auto t = Tensor<float>::from_data({1, 1, 1, 3}, (VectorX<float>(3) << -1.0f, 0.0f, 2.0f).finished());
    const auto r = relu(t);
    EXPECT_EQ(r[0], 0.0f);
    EXPECT_EQ(r[1], 0.0f);
    EXPECT_EQ(r[2], 2.0f);
    EXPECT_EQ(sigmoid(0.0f), 0.5f);
    EXPECT_TRUE(std::isfinite(sigmoid(-1000.0f)));
    EXPECT_TRUE(std::isfinite(sigmoid(1000.0f)));
}

TEST(Activations, GradientsPassFiniteDifferences) {
    for (int seed = 0; seed < 10; ++seed) {
        std::mt19937 rng(200 + seed);
        auto x = random_tensor<double>({1, 2, 3, 3}, rng, -3, 3);
        // Keep ReLU inputs away from the kink.
        for (std::size_t i = 0; i < x.size(); ++i)
            if (std::abs(x[i]) < 0.05) x[i] = 0.5;
        const auto probe = random_tensor<double>(x.shape(), rng);
        const auto gs = sigmoid_backward(sigmoid(x), probe);
        auto rs = finite_diff_check([&](const Tensor<double>& v) { return dot(sigmoid(v), probe); }, x, gs);
        EXPECT_TRUE(rs.passed) << rs.summary();
        const auto gr = relu_backward(x, probe);
        auto rr = finite_diff_check([&](const Tensor<double>& v) { return dot(relu(v), probe); }, x, gr);
        EXPECT_TRUE(rr.passed) << rr.summary();
    }
}

TEST(Bilinear, IntegerCoordinateIsExact) {
    std::mt19937 rng(3);
    const auto t = random_tensor<float>({1, 2, 5, 5}, rng);
    EXPECT_EQ(bilinear_sample(t, 2.0f, 3.0f, 1), t(0, 1, 3, 2));
    EXPECT_EQ(bilinear_sample(t, 0.0f, 0.0f, 0), t(0, 0, 0, 0));
    EXPECT_EQ(bilinear_sample(t, 4.0f, 4.0f, 0), t(0, 0, 4, 4));
}

TEST(Bilinear, MidpointIsMean) {
    Tensor<double> t(1, 1, 4, 4);
    t(0, 0, 2, 1) = 3.0;
    t(0, 0, 2, 2) = 5.0;
    EXPECT_DOUBLE_EQ(bilinear_sample(t, 1.5, 2.0, 0), 4.0);
}

TEST(Bilinear, OutOfRangeIsZeroPadded) {
    Tensor<double> t(1, 1, 3, 3, 1.0);
    EXPECT_EQ(bilinear_sample(t, -1.0, 1.0, 0), 0.0);
    EXPECT_EQ(bilinear_sample(t, 1.0, 7.5, 0), 0.0);
    EXPECT_DOUBLE_EQ(bilinear_sample(t, -0.5, 1.0, 0), 0.5);
}

TEST(Bilinear, MatchesClosedFormOracle) {
    std::mt19937 rng(5);
    const auto t = random_tensor<double>({1, 3, 6, 7}, rng);
    for (int i = 0; i < 200; ++i) {
        const double x = off_grid(rng, -1.5, 7.5, 0.0);
        const double y = off_grid(rng, -1.5, 6.5, 0.0);
        const int c = i % 3;
        EXPECT_NEAR(bilinear_sample(t, x, y, c), bilinear_oracle(t, c, x, y), 1e-12);
    }
}

TEST(Bilinear, LinearInFeatureValues) {
    std::mt19937 rng(9);
    const auto a = random_tensor<double>({1, 1, 5, 5}, rng);
    const auto b = random_tensor<double>({1, 1, 5, 5}, rng);
    for (int i = 0; i < 50; ++i) {
        const double alpha = off_grid(rng, -2, 2, 0.0), beta = off_grid(rng, -2, 2, 0.0);
        const double x = off_grid(rng, -1, 5, 0.0), y = off_grid(rng, -1, 5, 0.0);
        const auto mix = Tensor<double>::from_data(a.shape(), alpha * a.data() + beta * b.data());
        EXPECT_NEAR(bilinear_sample(mix, x, y, 0),
                    alpha * bilinear_sample(a, x, y, 0) + beta * bilinear_sample(b, x, y, 0), 1e-12);
    }
}

TEST(Bilinear, GradientsPassFiniteDifferences) {
    for (int seed = 0; seed < 10; ++seed) {
        std::mt19937 rng(300 + seed);
        const auto t = random_tensor<double>({1, 1, 5, 6}, rng);
        const double x = off_grid(rng, -0.9, 5.9, 0.05);
        const double y = off_grid(rng, -0.9, 4.9, 0.05);
        Tensor<double> gmap(t.shape());
        const auto gxy = bilinear_sample_backward(t, x, y, 0, 1.0, &gmap);
        auto rmap = finite_diff_check([&](const Tensor<double>& m) { return bilinear_sample(m, x, y, 0); }, t, gmap);
        EXPECT_TRUE(rmap.passed) << rmap.summary();
        const VectorX<double> xy = (VectorX<double>(2) << x, y).finished();
        const VectorX<double> g = (VectorX<double>(2) << gxy.dx, gxy.dy).finished();
        GradCheckOptions opt;
        opt.epsilon = 1e-4;  // stays inside one cell since points are >= 0.05 off grid
        auto rxy = finite_diff_check([&](const VectorX<double>& v) { return bilinear_sample(t, v[0], v[1], 0); },
                                     xy, g, opt);
        EXPECT_TRUE(rxy.passed) << rxy.summary();
    }
}

TEST(Bilinear, IntegerCoordinateUsesLeftCellSlope) {
    Tensor<double> t(1, 1, 1, 4);
    t(0, 0, 0, 0) = 0.0;
    t(0, 0, 0, 1) = 1.0;
    t(0, 0, 0, 2) = 5.0;
    const auto g = bilinear_sample_backward(t, 1.0, 0.0, 0, 1.0, static_cast<Tensor<double>*>(nullptr));
    EXPECT_DOUBLE_EQ(g.dx, 1.0);  // slope of [0, 1], not [1, 2]
}

TEST(DeformAggregate, ZeroOffsetsUnitWeightsIsConvBitwise) {
    std::mt19937 rng(13);
    const auto f = random_tensor<float>({2, 3, 6, 6}, rng);
    const auto p = random_conv<float>(4, 3, 5, rng);
    Tensor<float> off(2, 50, 6, 6, 0.0f), wts(2, 25, 6, 6, 1.0f);
    const auto a = deform_aggregate(f, off, wts, p);
    const auto b = conv2d(f, p);
    ASSERT_EQ(a.shape(), b.shape());
    EXPECT_EQ((a.data() - b.data()).cwiseAbs().maxCoeff(), 0.0f);
    EXPECT_TRUE(a.data() == b.data());
}

TEST(DeformAggregate, ZeroWeightTapIgnoresItsOffset) {
    std::mt19937 rng(15);
    const auto f = random_tensor<double>({1, 2, 6, 6}, rng);
    const auto p = random_conv<double>(2, 2, 3, rng);
    auto off = random_tensor<double>({1, 18, 6, 6}, rng, -2, 2);
    auto wts = random_tensor<double>({1, 9, 6, 6}, rng);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) wts(0, 4, y, x) = 0.0;
    const auto before = deform_aggregate(f, off, wts, p);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
            off(0, 8, y, x) += 1.37;
            off(0, 9, y, x) -= 0.61;
        }
    EXPECT_EQ(before.data(), deform_aggregate(f, off, wts, p).data());
}

TEST(DeformAggregate, MatchesSamplingOracle) {
    std::mt19937 rng(17);
    const auto f = random_tensor<double>({1, 2, 6, 6}, rng);
    const auto p = random_conv<double>(3, 2, 3, rng);
    const auto off = random_tensor<double>({1, 18, 6, 6}, rng, -2, 2);
    const auto wts = random_tensor<double>({1, 9, 6, 6}, rng);
    EXPECT_LT(max_abs_diff(deform_aggregate(f, off, wts, p), deform_oracle(f, off, wts, p)), 1e-6);
}

TEST(DeformAggregate, TapCountMismatchIsConfigError) {
    Tensor<float> f(1, 2, 5, 5);
    ConvParams<float> p(2, 2, 5);
    Tensor<float> off(1, 18, 5, 5), wts(1, 9, 5, 5);
    EXPECT_THROW(deform_aggregate(f, off, wts, p), ConfigError);
}

TEST(DeformAggregate, GradientsPassFiniteDifferences) {
    for (int seed = 0; seed < 10; ++seed) {
        std::mt19937 rng(400 + seed);
        const auto f = random_tensor<double>({1, 2, 5, 5}, rng);
        const auto p = random_conv<double>(2, 2, 3, rng);
        Tensor<double> off(1, 18, 5, 5);
        for (std::size_t i = 0; i < off.size(); ++i) off[i] = off_grid(rng, -1.5, 1.5, 0.05);
        const auto wts = random_tensor<double>({1, 9, 5, 5}, rng);
        const auto probe = random_tensor<double>({1, 2, 5, 5}, rng);
        const auto g = deform_aggregate_backward(f, off, wts, p, probe);

        auto rf = finite_diff_check(
            [&](const Tensor<double>& v) { return dot(deform_aggregate(v, off, wts, p), probe); }, f, g.featmap);
        EXPECT_TRUE(rf.passed) << "featmap " << rf.summary();
        GradCheckOptions opt;
        opt.epsilon = 1e-3;
        auto ro = finite_diff_check(
            [&](const Tensor<double>& v) { return dot(deform_aggregate(f, v, wts, p), probe); }, off, g.offsets,
            opt);
        EXPECT_TRUE(ro.passed) << "offsets " << ro.summary();
        auto rw = finite_diff_check(
            [&](const Tensor<double>& v) { return dot(deform_aggregate(f, off, v, p), probe); }, wts, g.weights);
        EXPECT_TRUE(rw.passed) << "weights " << rw.summary();
        auto rk = finite_diff_check(
            [&](const Tensor<double>& v) {
                auto q = p;
                q.weight = v;
                return dot(deform_aggregate(f, off, wts, q), probe);
            },
            p.weight, g.kernel_weight);
        EXPECT_TRUE(rk.passed) << "kernel " << rk.summary();
    }
}

TEST(MaxpoolNms, SinglePeakKept) {
    Tensor<float> t(1, 1, 5, 5);
    t(0, 0, 2, 2) = 0.9f;
    EXPECT_EQ(maxpool_nms(t)(0, 0, 2, 2), 0.9f);
}

TEST(MaxpoolNms, WeakerNeighbourSuppressed) {
    Tensor<float> t(1, 1, 5, 5);
    t(0, 0, 2, 2) = 0.9f;
    t(0, 0, 2, 3) = 1.0f;
    const auto out = maxpool_nms(t);
    EXPECT_EQ(out(0, 0, 2, 2), 0.0f);
    EXPECT_EQ(out(0, 0, 2, 3), 1.0f);
}

TEST(MaxpoolNms, MatchesWindowScanAndIsIdempotent) {
    std::mt19937 rng(19);
    for (int trial = 0; trial < 100; ++trial) {
        auto t = random_tensor<float>({1, 2, 7, 6}, rng, 0.0, 1.0);
        // Quantize to force ties.
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::round(t[i] * 4.0f) / 4.0f;
        const auto out = maxpool_nms(t);
        for (int c = 0; c < 2; ++c)
            for (int y = 0; y < 7; ++y)
                for (int x = 0; x < 6; ++x) {
                    bool is_max = true;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int yy = y + dy, xx = x + dx;
                            if (yy < 0 || xx < 0 || yy >= 7 || xx >= 6) continue;
                            if (t(0, c, yy, xx) > t(0, c, y, x)) is_max = false;
                        }
                    ASSERT_EQ(out(0, c, y, x), is_max ? t(0, c, y, x) : 0.0f);
                }
        EXPECT_EQ(maxpool_nms(out).data(), out.data());
    }
}

TEST(Topk, UniqueMaxFirstAndShortMaps) {
    Tensor<float> t(1, 2, 2, 2, 0.1f);
    t(0, 1, 1, 0) = 0.8f;
    const auto peaks = topk(t, 3);
    ASSERT_EQ(peaks.size(), 3u);
    EXPECT_EQ(peaks[0], (Peak<float>{0.8f, 1, 1, 0}));
    // ties by ascending linear index
    EXPECT_EQ(peaks[1], (Peak<float>{0.1f, 0, 0, 0}));
    EXPECT_EQ(peaks[2], (Peak<float>{0.1f, 0, 0, 1}));
    EXPECT_EQ(topk(t, 100).size(), 8u);
    EXPECT_THROW(topk(t, 0), ConfigError);
}

TEST(Topk, MatchesFullSortPrefix) {
    std::mt19937 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        auto t = random_tensor<float>({2, 3, 4, 5}, rng, 0.0, 1.0);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::round(t[i] * 8.0f) / 8.0f;
        const int b = trial % 2;
        std::vector<std::pair<float, int>> all;
        for (int i = 0; i < 60; ++i) all.emplace_back(t[t.index(b, 0, 0, 0) + static_cast<std::size_t>(i)], i);
        std::stable_sort(all.begin(), all.end(), [](auto& a, auto& c) { return a.first > c.first; });
        const auto peaks = topk(t, 5, b);
        ASSERT_EQ(peaks.size(), 5u);
        for (int i = 0; i < 5; ++i) {
            const int li = all[static_cast<std::size_t>(i)].second;
            EXPECT_EQ(peaks[static_cast<std::size_t>(i)], (Peak<float>{all[static_cast<std::size_t>(i)].first,
                                                                       li / 20, (li % 20) / 5, li % 5}));
        }
    }
}

TEST(GradCheck, LinearOpIsExact) {
    VectorX<double> a(4);
    a << 1.0, -2.0, 0.5, 3.0;
    const VectorX<double> x = VectorX<double>::Ones(4);
    auto r = finite_diff_check([&](const VectorX<double>& v) { return a.dot(v); }, x, a);
    EXPECT_TRUE(r.passed);
    EXPECT_LT(r.max_abs_error, 1e-10);
}

TEST(GradCheck, DetectsWrongGradientAndNonFinite) {
    const VectorX<double> x = VectorX<double>::Ones(2);
    const VectorX<double> wrong = VectorX<double>::Zero(2);
    auto r = finite_diff_check([](const VectorX<double>& v) { return v.sum(); }, x, wrong);
    EXPECT_FALSE(r.passed);
    EXPECT_THROW(finite_diff_check([](const VectorX<double>& v) { return std::log(v[0] - 1.0); }, x,
                                   VectorX<double>::Ones(2)),
                 NumericError);
}

TEST(GradCheck, RefinementResolvesAKinkInsideTheStep) {
    const VectorX<double> x = VectorX<double>::Constant(1, 2e-4);
    const VectorX<double> slope = VectorX<double>::Ones(1);
    auto f = [](const VectorX<double>& v) { return std::abs(v[0]); };
    EXPECT_FALSE(finite_diff_check(f, x, slope).passed);
    GradCheckOptions opt;
    opt.refinements = 1;
    const auto r = finite_diff_check(f, x, slope, opt);
    EXPECT_TRUE(r.passed) << r.summary();
    EXPECT_EQ(r.refined, 1);
    // a wrong gradient stays wrong at every step
    EXPECT_FALSE(finite_diff_check(f, x, VectorX<double>::Constant(1, 0.5), opt).passed);
}

TEST(TensorIo, ContainerLayout) {
    Tensor<float> t(1, 2, 1, 1);
    t[0] = 1.0f;
    t[1] = -2.5f;
    std::stringstream ss;
    write_tensor(ss, t);
    const std::string bytes = ss.str();
    ASSERT_EQ(bytes.size(), serialized_size(t.shape()));
    EXPECT_EQ(bytes.substr(0, 4), "GGT1");
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);  // channels field, little-endian
    EXPECT_EQ(static_cast<unsigned char>(bytes[23]), 0x3Fu);  // 1.0f = 0x3F800000, high byte last
    const auto back = read_tensor(ss);
    EXPECT_EQ(back.shape(), t.shape());
    EXPECT_EQ(back.data(), t.data());
}

TEST(TensorIo, RejectsGarbage) {
    std::stringstream bad("GGT0xxxxxxxxxxxxxxxx");
    EXPECT_THROW(read_tensor(bad), DataError);
    std::stringstream truncated(std::string("GGT1\x01\0\0\0\x01\0\0\0\x01\0\0\0\x02\0\0\0", 20));
    EXPECT_THROW(read_tensor(truncated), DataError);
}

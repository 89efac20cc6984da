// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <set>

#include "doctest.h"
#include "mtx/encoders.hpp"
#include "mtx/error.hpp"
#include "mtx/fusion.hpp"
#include "mtx/heads.hpp"

using mtx::real;
using mtx::RealTensor;

namespace {

RealTensor random_tensor(mtx::Shape shape, mtx::Rng& rng, bool requires_grad = false) {
    std::vector<real> v(mtx::shape_numel(shape));
    for (auto& x : v) x = real(rng.normal());
    return RealTensor::from_data(std::move(shape), std::move(v), requires_grad);
}

} // namespace

TEST_CASE("linear layer with zeroed weights reproduces its bias") {
    mtx::Rng rng(3);
    mtx::Linear l(3, 4, rng);
    std::fill(l.w.data().begin(), l.w.data().end(), real(0));
    l.b.data() = {real(1), real(2), real(3), real(4)};
    auto y = l.forward(random_tensor({2, 3}, rng));
    for (size_t n = 0; n < 2; ++n)
        for (size_t j = 0; j < 4; ++j) CHECK(y.data()[n * 4 + j] == real(j + 1));
}

TEST_CASE("parameter collection yields unique names and trainable tensors") {
    mtx::Rng rng(5);
    mtx::TimeseriesEncoder enc(4, 32, 4, 64, rng);
    mtx::ParamList params;
    enc.collect("ts", params);
    std::set<std::string> names;
    for (const auto& p : params) {
        CHECK(p.tensor.requires_grad());
        names.insert(p.name);
    }
    CHECK(names.size() == params.size());
    // 4 blocks x (2 LN + 4 attention projections + 2 FF, each with 2 tensors)
    // + input projection + final LN.
    CHECK(params.size() == 4 * 8 * 2 + 2 + 2);
}

TEST_CASE("positional code at timestamp zero interleaves zeros and ones") {
    mtx::Rng rng(7);
    mtx::TimeseriesEncoder enc(4, 32, 1, 64, rng);
    auto pe = enc.positional({0.0});
    REQUIRE(pe.size() == 32);
    for (size_t i = 0; i < 32; i += 2) {
        CHECK(pe[i] == real(0));
        CHECK(pe[i + 1] == real(1));
    }
}

TEST_CASE("positional codes differ for distinct timestamps") {
    mtx::Rng rng(7);
    mtx::TimeseriesEncoder enc(4, 32, 1, 64, rng);
    auto a = enc.positional({3.0});
    auto b = enc.positional({45.0});
    double diff = 0;
    for (size_t i = 0; i < a.size(); ++i) diff += std::abs(double(a[i]) - double(b[i]));
    CHECK(diff > 0.1);
}

TEST_CASE("timeseries encoder maps [N x T x F] to [N x dim]") {
    mtx::Rng rng(11);
    mtx::TimeseriesEncoder enc(4, 32, 4, 64, rng);
    auto x = random_tensor({2, 5, 4}, rng);
    std::vector<double> ts;
    for (size_t i = 0; i < 10; ++i) ts.push_back(double(i) * 6.0);
    auto y = enc.forward(x, ts, {5, 3});
    CHECK(y.shape() == mtx::Shape{2, 32});
}

TEST_CASE("reordering steps together with their timestamps keeps the pooled code") {
    mtx::Rng rng(13);
    mtx::TimeseriesEncoder enc(3, 32, 2, 64, rng);
    std::vector<real> base;
    for (size_t i = 0; i < 4 * 3; ++i) base.push_back(real(rng.normal()));
    std::vector<double> ts = {1.0, 7.0, 19.0, 33.0};
    std::vector<size_t> perm = {2, 0, 3, 1};
    std::vector<real> shuffled(base.size());
    std::vector<double> ts_shuffled(4);
    for (size_t t = 0; t < 4; ++t) {
        ts_shuffled[t] = ts[perm[t]];
        for (size_t f = 0; f < 3; ++f) shuffled[t * 3 + f] = base[perm[t] * 3 + f];
    }
    auto a = enc.forward(RealTensor::from_data({1, 4, 3}, base), ts, {});
    auto b = enc.forward(RealTensor::from_data({1, 4, 3}, shuffled), ts_shuffled, {});
    for (size_t i = 0; i < 32; ++i)
        CHECK(double(a.data()[i]) == doctest::Approx(double(b.data()[i])).epsilon(1e-4));
}

TEST_CASE("padded steps do not leak into the pooled code") {
    mtx::Rng rng(17);
    mtx::TimeseriesEncoder enc(3, 32, 2, 64, rng);
    std::vector<real> two;
    for (size_t i = 0; i < 2 * 3; ++i) two.push_back(real(rng.normal()));
    std::vector<real> four = two;
    four.resize(4 * 3, real(5));
    auto a = enc.forward(RealTensor::from_data({1, 2, 3}, two), {4.0, 11.0}, {});
    auto b = enc.forward(RealTensor::from_data({1, 4, 3}, four), {4.0, 11.0, 90.0, 95.0}, {2});
    for (size_t i = 0; i < 32; ++i)
        CHECK(double(a.data()[i]) == doctest::Approx(double(b.data()[i])).epsilon(1e-5));
}

TEST_CASE("tabular encoder maps features to the requested latent width") {
    mtx::Rng rng(19);
    mtx::TabularEncoder enc(5, 64, 32, rng);
    auto y = enc.forward(random_tensor({3, 5}, rng));
    CHECK(y.shape() == mtx::Shape{3, 32});
    CHECK_THROWS_AS(enc.forward(random_tensor({3, 6}, rng)), mtx::Error);
}

TEST_CASE("categorical encoder returns one embedding row per id") {
    mtx::Rng rng(23);
    mtx::CategoricalEncoder enc(9, 16, rng);
    auto y = enc.forward({0, 8, 3});
    CHECK(y.shape() == mtx::Shape{3, 16});
    for (size_t j = 0; j < 16; ++j)
        CHECK(y.data()[0 * 16 + j] == enc.emb.table.data()[0 * 16 + j]);
}

TEST_CASE("cnn encoder turns a 3x32x32 image into a 512-wide vector") {
    mtx::Rng rng(29);
    mtx::CnnEncoder enc(3, 512, rng);
    auto y = enc.forward(random_tensor({2, 3, 32, 32}, rng));
    CHECK(y.shape() == mtx::Shape{2, 512});
}

TEST_CASE("cnn encoder rejects extents it cannot pool down") {
    mtx::Rng rng(31);
    mtx::CnnEncoder enc(3, 512, rng);
    CHECK_THROWS_AS(enc.forward(random_tensor({1, 3, 24, 24}, rng)), mtx::Error);
}

TEST_CASE("flat image encoder turns a 12x6x6 patch into a 512-wide vector") {
    mtx::Rng rng(37);
    mtx::FlatImageEncoder enc(12 * 6 * 6, 512, 0.3, rng);
    auto x = random_tensor({2, 432}, rng);
    auto y = enc.forward(x, false, rng);
    CHECK(y.shape() == mtx::Shape{2, 512});
    // Inference is deterministic: dropout only acts while training.
    auto y2 = enc.forward(x, false, rng);
    for (size_t i = 0; i < y.data().size(); ++i) CHECK(y.data()[i] == y2.data()[i]);
}

TEST_CASE("unet encoder keeps the grid and emits 64 channels") {
    mtx::Rng rng(41);
    mtx::UnetEncoder enc(4, rng);
    auto x = random_tensor({2, 4, 32, 32}, rng, true);
    auto y = enc.forward(x);
    CHECK(y.shape() == mtx::Shape{2, 64, 32, 32});

    mtx::backward(mtx::sum_all(y));
    double e1_grad = 0, input_grad = 0;
    for (auto g : enc.e1.k.grad()) e1_grad += std::abs(double(g));
    for (auto g : x.grad()) input_grad += std::abs(double(g));
    CHECK(e1_grad > 0);
    CHECK(input_grad > 0);
}

TEST_CASE("unet encoder rejects grids that do not pool down four times") {
    mtx::Rng rng(43);
    mtx::UnetEncoder enc(4, rng);
    CHECK_THROWS_AS(enc.forward(random_tensor({1, 4, 24, 24}, rng)), mtx::Error);
}

TEST_CASE("three 512-wide latents fuse into a 1536-wide vector") {
    mtx::Rng rng(47);
    auto a = random_tensor({2, 512}, rng);
    auto b = random_tensor({2, 512}, rng);
    auto c = random_tensor({2, 512}, rng);
    auto f = mtx::fuse_vectors({a, b, c});
    REQUIRE(f.shape() == mtx::Shape{2, 1536});
    CHECK(f.data()[0] == a.data()[0]);
    CHECK(f.data()[512] == b.data()[0]);
    CHECK(f.data()[2 * 1536 - 1] == c.data()[2 * 512 - 1]);
}

TEST_CASE("spatial fusion mixes maps with broadcast vector latents") {
    mtx::Rng rng(53);
    mtx::SpatialFusion fuse(64 + 32 + 16, rng);
    auto m = random_tensor({2, 64, 16, 16}, rng);
    auto va = random_tensor({2, 32}, rng, true);
    auto vb = random_tensor({2, 16}, rng);
    auto y = fuse.forward({m}, {va, vb});
    CHECK(y.shape() == mtx::Shape{2, 64, 16, 16});

    // Every grid cell sees the vector latent, so its gradient pools over the
    // whole grid and cannot vanish for a generic mix.
    mtx::backward(mtx::sum_all(y));
    double va_grad = 0;
    for (auto g : va.grad()) va_grad += std::abs(double(g));
    CHECK(va_grad > 0);
}

TEST_CASE("spatial fusion rejects channel totals it was not built for") {
    mtx::Rng rng(59);
    mtx::SpatialFusion fuse(96, rng);
    auto m = random_tensor({1, 64, 16, 16}, rng);
    CHECK_THROWS_AS(fuse.forward({m}, {}), mtx::Error);
}

TEST_CASE("vector heads produce the requested output width") {
    mtx::Rng rng(61);
    auto x = random_tensor({4, 96}, rng);

    mtx::Head lin = mtx::LinearHead(96, 1, rng);
    CHECK(mtx::head_forward(lin, x, false, rng).shape() == mtx::Shape{4, 1});

    mtx::Head bn = mtx::MlpBnHead(96, 64, 9, rng);
    CHECK(mtx::head_forward(bn, x, true, rng).shape() == mtx::Shape{4, 9});
    CHECK(mtx::head_forward(bn, x, false, rng).shape() == mtx::Shape{4, 9});

    mtx::Head drop = mtx::MlpDropoutHead(96, 64, 3, 0.2, rng);
    auto a = mtx::head_forward(drop, x, false, rng);
    auto b = mtx::head_forward(drop, x, false, rng);
    CHECK(a.shape() == mtx::Shape{4, 3});
    for (size_t i = 0; i < a.data().size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("batch-normalized head refuses training on a single sample") {
    mtx::Rng rng(67);
    mtx::Head bn = mtx::MlpBnHead(8, 16, 2, rng);
    auto x = random_tensor({1, 8}, rng);
    CHECK_THROWS_AS(mtx::head_forward(bn, x, true, rng), mtx::Error);
    CHECK(mtx::head_forward(bn, x, false, rng).shape() == mtx::Shape{1, 2});
}

TEST_CASE("map heads keep the grid") {
    mtx::Rng rng(71);
    auto x = random_tensor({2, 64, 16, 16}, rng);

    mtx::Head seg = mtx::SegmentationHead(64, 12, rng);
    CHECK(mtx::head_forward(seg, x, false, rng).shape() == mtx::Shape{2, 12, 16, 16});

    mtx::Head dense = mtx::DenseMapHead(64, rng);
    auto y = mtx::head_forward(dense, x, false, rng);
    CHECK(y.shape() == mtx::Shape{2, 1, 16, 16});
    for (auto v : y.data()) {
        CHECK(v > real(0));
        CHECK(v < real(1));
    }
}

TEST_CASE("map-to-vector head pools the grid and optionally squashes") {
    mtx::Rng rng(73);
    auto x = random_tensor({2, 64, 16, 16}, rng);

    mtx::Head squashed = mtx::MapVectorHead(64, 1, 0.2, true, rng);
    auto y = mtx::head_forward(squashed, x, false, rng);
    CHECK(y.shape() == mtx::Shape{2, 1});
    for (auto v : y.data()) {
        CHECK(v > real(0));
        CHECK(v < real(1));
    }

    mtx::Head open = mtx::MapVectorHead(64, 3, 0.2, false, rng);
    CHECK(mtx::head_forward(open, x, false, rng).shape() == mtx::Shape{2, 3});
}

TEST_CASE("backprop through one head leaves the other head untouched") {
    mtx::Rng rng(79);
    auto latent = random_tensor({2, 16}, rng, true);
    mtx::Head a = mtx::LinearHead(16, 1, rng);
    mtx::Head b = mtx::LinearHead(16, 1, rng);
    mtx::backward(mtx::sum_all(mtx::head_forward(a, latent, false, rng)));

    auto& aw = std::get<mtx::LinearHead>(a).out.w;
    auto& bw = std::get<mtx::LinearHead>(b).out.w;
    double a_grad = 0;
    for (auto g : aw.grad()) a_grad += std::abs(double(g));
    CHECK(a_grad > 0);
    CHECK(bw.node()->grad.empty());
    double latent_grad = 0;
    for (auto g : latent.grad()) latent_grad += std::abs(double(g));
    CHECK(latent_grad > 0);
}

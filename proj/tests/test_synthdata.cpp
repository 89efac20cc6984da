// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mtx/multitask.hpp"
#include "mtx/synthdata.hpp"

namespace {

// Independent Bayes decode: exhaustive per-element residuals over a fertility
// grid, no dot-product shortcuts, so it cross-checks the ledger posteriors.
std::array<double, 3> reference_posterior(const mtx::PixelLedger& lg, const float* series) {
    const size_t T = lg.season_len;
    const double sigma = std::max(lg.spectral_noise, 1e-3);
    const int grid = 201;
    std::vector<double> logw(3 * grid);
    double logmax = -1e300;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < grid; ++i) {
            double phi = double(i) / double(grid - 1);
            double g = 1.0 + lg.coupling * (phi - 0.5);
            double d2 = 0;
            for (size_t t = 0; t < T; ++t)
                for (int ch = 0; ch < 12; ++ch) {
                    double model = lg.templates[(size_t(c) * T + t) * 12 + size_t(ch)] * g;
                    double x = series[t * 25 + size_t(ch)];
                    d2 += (x - model) * (x - model);
                }
            logw[size_t(c * grid + i)] = -d2 / (2.0 * sigma * sigma);
            logmax = std::max(logmax, logw[size_t(c * grid + i)]);
        }
    std::array<double, 3> post{};
    double total = 0;
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < grid; ++i) post[size_t(c)] += std::exp(logw[size_t(c * grid + i)] - logmax);
        total += post[size_t(c)];
    }
    for (auto& v : post) v /= total;
    return post;
}

bool columns_equal(const mtx::Dataset& a, const mtx::Dataset& b) {
    if (a.size() != b.size() || a.columns.size() != b.columns.size()) return false;
    for (size_t i = 0; i < a.columns.size(); ++i) {
        const auto &ca = a.columns[i], &cb = b.columns[i];
        if (ca.spec.name != cb.spec.name || ca.values != cb.values || ca.ids != cb.ids ||
            ca.timestamps != cb.timestamps || ca.lengths != cb.lengths)
            return false;
    }
    return a.sample_ids == b.sample_ids && a.group_ids == b.group_ids && a.strata == b.strata;
}

} // namespace

TEST_CASE("pixel dataset satisfies its schema invariants") {
    mtx::PixelDatasetParams p;
    p.n_fields = 50;
    p.pixels_per_field = 10;
    p.seed = 3;
    auto [d, lg] = mtx::gen_pixel_dataset(p);

    CHECK(d.size() == 500);
    CHECK(d.kind == "pixel");
    const auto& sat = d.column("satellite");
    CHECK(sat.spec.features == 25);
    CHECK(sat.spec.imagery);

    size_t stride = sat.spec.value_stride();
    for (size_t s = 0; s < d.size(); ++s) {
        for (size_t t = 0; t < 12; ++t) {
            float hot = 0;
            int ones = 0;
            for (size_t ch = 12; ch < 25; ++ch) {
                float v = sat.values[s * stride + t * 25 + ch];
                hot += v;
                ones += v == 1.0f;
            }
            REQUIRE(hot == 1.0f);  // one-hot scene block row
            REQUIRE(ones == 1);
        }
        // days-to-harvest counts down across the season
        REQUIRE(sat.timestamps[s * 12] > sat.timestamps[s * 12 + 11]);
        REQUIRE(d.column("yield").values[s] > 0.0f);
        REQUIRE(lg.fertility[s] >= 0.0);
        REQUIRE(lg.fertility[s] <= 1.0);
        REQUIRE(lg.expected_yield[s] ==
                doctest::Approx(lg.base + lg.gain * lg.fertility[s]).epsilon(1e-12));
        REQUIRE(d.strata[s] >= 0);
        REQUIRE(d.strata[s] < 3);
    }
    CHECK(lg.crop_posterior.size() == d.size() * 3);

    // The split machinery accepts the generated ids directly.
    auto split = mtx::split_grouped_stratified(mtx::split_items(d), {}, 5);
    CHECK(split.of(mtx::Split::train).size() > 0);
    CHECK(split.of(mtx::Split::val).size() > 0);
    CHECK(split.of(mtx::Split::test).size() > 0);
}

TEST_CASE("pixel generation is deterministic and validates parameters") {
    mtx::PixelDatasetParams p;
    p.n_fields = 10;
    p.pixels_per_field = 5;
    p.seed = 11;
    auto [d1, lg1] = mtx::gen_pixel_dataset(p);
    auto [d2, lg2] = mtx::gen_pixel_dataset(p);
    CHECK(columns_equal(d1, d2));
    CHECK(lg1.fertility == lg2.fertility);
    CHECK(lg1.crop_posterior == lg2.crop_posterior);

    p.seed = 12;
    auto [d3, lg3] = mtx::gen_pixel_dataset(p);
    CHECK_FALSE(columns_equal(d1, d3));

    mtx::PixelDatasetParams bad;
    bad.coupling = 1.5;
    CHECK_THROWS_AS(mtx::gen_pixel_dataset(bad), mtx::Error);
    bad = {};
    bad.season_len = 3;
    CHECK_THROWS_AS(mtx::gen_pixel_dataset(bad), mtx::Error);
    bad = {};
    bad.spectral_noise = -0.1;
    CHECK_THROWS_AS(mtx::gen_pixel_dataset(bad), mtx::Error);
}

TEST_CASE("zero coupling removes fertility from the series") {
    mtx::PixelDatasetParams p;
    p.n_fields = 6;
    p.pixels_per_field = 4;
    p.coupling = 0.0;
    p.spectral_noise = 0.0;
    p.yield_noise = 0.0;
    p.seed = 2;
    auto [d, lg] = mtx::gen_pixel_dataset(p);
    const auto& sat = d.column("satellite");
    size_t stride = sat.spec.value_stride();
    // Pixels of one field differ in fertility but get identical series.
    for (size_t f = 0; f < 6; ++f) {
        size_t s0 = f * 4;
        bool phi_varies = false;
        for (size_t k = 1; k < 4; ++k) {
            phi_varies = phi_varies || lg.fertility[s0 + k] != lg.fertility[s0];
            for (size_t i = 0; i < stride; ++i)
                REQUIRE(sat.values[(s0 + k) * stride + i] == sat.values[s0 * stride + i]);
        }
        CHECK(phi_varies);
    }
}

TEST_CASE("full coupling at zero noise is perfectly decodable") {
    mtx::PixelDatasetParams p;
    p.n_fields = 30;
    p.pixels_per_field = 5;
    p.coupling = 1.0;
    p.spectral_noise = 0.0;
    p.yield_noise = 0.0;
    p.seed = 4;
    auto [d, lg] = mtx::gen_pixel_dataset(p);
    const auto& sat = d.column("satellite");
    const auto& crop = d.column("crop");
    size_t stride = sat.spec.value_stride();
    for (size_t s = 0; s < d.size(); ++s) {
        auto dec = mtx::pixel_bayes_decode(lg, &sat.values[s * stride]);
        REQUIRE(dec.crop == crop.ids[s]);
        REQUIRE(std::abs(dec.fertility - lg.fertility[s]) < 0.01);
    }
}

TEST_CASE("default parameters keep the crops Bayes-separable") {
    auto [d, lg] = mtx::gen_pixel_dataset({});
    const auto& crop = d.column("crop");
    size_t wrong = 0;
    for (size_t s = 0; s < d.size(); ++s) {
        const double* post = &lg.crop_posterior[s * 3];
        int best = int(std::max_element(post, post + 3) - post);
        wrong += best != crop.ids[s];
    }
    CHECK(double(wrong) / double(d.size()) < 0.02);

    // Ledger posteriors match an independently coded decoder.
    const auto& sat = d.column("satellite");
    size_t stride = sat.spec.value_stride();
    for (size_t s = 0; s < 200; ++s) {
        auto post = reference_posterior(lg, &sat.values[s * stride]);
        for (int c = 0; c < 3; ++c)
            REQUIRE(post[size_t(c)] ==
                    doctest::Approx(lg.crop_posterior[s * 3 + size_t(c)]).epsilon(1e-6));
    }
}

TEST_CASE("the oracle's excess yield error grows with the planted coupling") {
    // Spectral noise high enough that the oracle misclassifies some crops;
    // yield noise zero so the proxy isolates the fertility decoding error.
    double prev = -1;
    for (double kappa : {0.0, 0.5, 1.0}) {
        mtx::PixelDatasetParams p;
        p.n_fields = 120;
        p.pixels_per_field = 10;
        p.coupling = kappa;
        p.spectral_noise = 1.5;
        p.yield_noise = 0.0;
        p.seed = 6;
        auto [d, lg] = mtx::gen_pixel_dataset(p);
        double proxy = mtx::pixel_coupling_proxy(d, lg);
        INFO("kappa=", kappa, " proxy=", proxy);
        CHECK(proxy > prev);
        prev = proxy;
    }
}

TEST_CASE("patch dataset satisfies its schema invariants") {
    mtx::PatchDatasetParams p;
    p.n_regions = 9;
    p.patches_per_region = 3;
    p.seed = 8;
    auto [d, lg] = mtx::gen_patch_dataset(p);
    CHECK(d.size() == 27);
    const size_t HW = 32 * 32;

    const auto& elev = d.column("elevation");
    const auto& lulc = d.column("lulc");
    for (size_t s = 0; s < d.size(); ++s) {
        size_t flagged = 0;
        for (size_t i = 0; i < HW; ++i) {
            REQUIRE(elev.values[s * HW + i] >= 0.0f);
            REQUIRE(elev.values[s * HW + i] <= 1.0f);
            REQUIRE(lulc.ids[s * HW + i] >= 0);
            REQUIRE(lulc.ids[s * HW + i] < 12);
            flagged += lg.boundary[s * HW + i];
        }
        // top decile by strict comparison: ties drop out, never add in
        REQUIRE(double(flagged) / double(HW) > 0.05);
        REQUIRE(double(flagged) / double(HW) <= 0.10 + 1e-9);
        REQUIRE(d.column("season").values[s] >= 0.0f);
        REQUIRE(d.column("season").values[s] <= 1.0f);
        REQUIRE(d.column("climate").ids[s] >= 0);
        REQUIRE(d.column("climate").ids[s] < 12);
        REQUIRE(d.strata[s] == d.column("climate").ids[s] / 4);
    }

    // Boundary flags match an independent gradient + full-sort computation.
    for (size_t s = 0; s < 3; ++s) {
        const float* e = &elev.values[s * HW];
        std::vector<float> mag(HW);
        for (size_t y = 0; y < 32; ++y)
            for (size_t x = 0; x < 32; ++x) {
                size_t xl = x > 0 ? x - 1 : x, xr = x < 31 ? x + 1 : x;
                size_t yu = y > 0 ? y - 1 : y, yd = y < 31 ? y + 1 : y;
                double gx = (e[y * 32 + xr] - e[y * 32 + xl]) / double(xr - xl);
                double gy = (e[yd * 32 + x] - e[yu * 32 + x]) / double(yd - yu);
                mag[y * 32 + x] = float(std::sqrt(gx * gx + gy * gy));
            }
        std::vector<float> sorted(mag);
        std::sort(sorted.begin(), sorted.end());
        float thr = sorted[HW - 1 - HW / 10];
        for (size_t i = 0; i < HW; ++i)
            REQUIRE(int(lg.boundary[s * HW + i]) == (mag[i] > thr ? 1 : 0));
    }
}

TEST_CASE("noise-free optical channels identify land cover exactly") {
    mtx::PatchDatasetParams p;
    p.n_regions = 4;
    p.patches_per_region = 2;
    p.noise = 0.0;
    p.seed = 9;
    auto [d, lg] = mtx::gen_patch_dataset(p);
    const size_t HW = 32 * 32;

    // Distinct mean-removed signature directions make the decode injective.
    auto centered = [&](const float* sig, std::array<double, 12>& out) {
        double mean = 0;
        for (int ch = 0; ch < 12; ++ch) mean += sig[ch];
        mean /= 12.0;
        double norm = 0;
        for (int ch = 0; ch < 12; ++ch) {
            out[size_t(ch)] = sig[ch] - mean;
            norm += out[size_t(ch)] * out[size_t(ch)];
        }
        norm = std::sqrt(norm);
        for (auto& v : out) v /= norm;
    };
    std::array<std::array<double, 12>, 12> dirs;
    for (int k = 0; k < 12; ++k) centered(&lg.signatures[size_t(k) * 12], dirs[size_t(k)]);
    for (int a = 0; a < 12; ++a)
        for (int b = a + 1; b < 12; ++b) {
            double cos = 0;
            for (int ch = 0; ch < 12; ++ch) cos += dirs[size_t(a)][size_t(ch)] * dirs[size_t(b)][size_t(ch)];
            REQUIRE(std::abs(cos) < 0.99);
        }

    const auto& opt = d.column("optical");
    const auto& lulc = d.column("lulc");
    for (size_t s = 0; s < d.size(); ++s)
        for (size_t i = 0; i < HW; ++i) {
            std::array<double, 12> px{};
            float raw[12];
            for (int ch = 0; ch < 12; ++ch) raw[ch] = opt.values[(s * 12 + size_t(ch)) * HW + i];
            centered(raw, px);
            int best = 0;
            double best_cos = -2;
            for (int k = 0; k < 12; ++k) {
                double cos = 0;
                for (int ch = 0; ch < 12; ++ch) cos += px[size_t(ch)] * dirs[size_t(k)][size_t(ch)];
                if (cos > best_cos) {
                    best_cos = cos;
                    best = k;
                }
            }
            REQUIRE(best == lulc.ids[s * HW + i]);
        }
}

TEST_CASE("patch generation is deterministic and validates extents") {
    mtx::PatchDatasetParams p;
    p.n_regions = 3;
    p.patches_per_region = 2;
    p.seed = 5;
    auto [d1, lg1] = mtx::gen_patch_dataset(p);
    auto [d2, lg2] = mtx::gen_patch_dataset(p);
    CHECK(columns_equal(d1, d2));
    CHECK(lg1.boundary == lg2.boundary);

    mtx::PatchDatasetParams bad;
    bad.height = 24;
    CHECK_THROWS_AS(mtx::gen_patch_dataset(bad), mtx::Error);
}

TEST_CASE("tree samples respect the class hierarchy and age ranges") {
    mtx::TreeDatasetParams p;
    p.n_stands = 150;
    p.samples_per_stand = 3;
    p.seed = 14;
    auto [d, lg] = mtx::gen_tree_dataset(p);
    CHECK(d.size() == 450);

    const auto& l3 = d.column("l3");
    const auto& l2 = d.column("l2");
    const auto& l1 = d.column("l1");
    const auto& age = d.column("age");
    for (size_t s = 0; s < d.size(); ++s) {
        REQUIRE(l2.ids[s] == lg.parent_32[size_t(l3.ids[s])]);
        REQUIRE(l1.ids[s] == lg.parent_21[size_t(l2.ids[s])]);
        auto [lo, hi] = lg.age_range[size_t(l3.ids[s])];
        REQUIRE(age.values[s] >= float(lo));
        REQUIRE(age.values[s] <= float(hi));
        REQUIRE(d.strata[s] == l1.ids[s]);
    }

    // Stand classes are uniform: chi-squared over the 15 species at the 1%
    // level (df=14, critical value 29.141). Counted per stand, the unit of
    // the draw.
    std::array<double, 15> counts{};
    for (size_t s = 0; s < d.size(); s += p.samples_per_stand) counts[size_t(l3.ids[s])] += 1;
    double expected = double(p.n_stands) / 15.0;
    double chi2 = 0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 29.141);

    auto [d2, lg2] = mtx::gen_tree_dataset(p);
    CHECK(columns_equal(d, d2));

    mtx::TreeDatasetParams bad;
    bad.parent_32[4] = 9;
    CHECK_THROWS_AS(mtx::gen_tree_dataset(bad), mtx::Error);
    bad = {};
    bad.parent_21[0] = -1;
    CHECK_THROWS_AS(mtx::gen_tree_dataset(bad), mtx::Error);
}

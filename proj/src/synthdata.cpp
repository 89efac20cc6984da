// SPDX-License-Identifier: Apache-2.0
#include "mtx/synthdata.hpp"

#include <algorithm>
#include <cmath>

#include "mtx/error.hpp"
#include "mtx/rng.hpp"

namespace mtx {
namespace {

constexpr double kTwoPi = 6.283185307179586;

// Stream tags keep per-entity draws independent of generation order, so the
// output is the same no matter how the sample loop is scheduled.
constexpr uint64_t kSampleStream = 0x100000000ull;
constexpr uint64_t kGroupStream = 0x200000000ull;

float clamp01(double v) { return float(std::clamp(v, 0.0, 1.0)); }
double sq(double v) { return v * v; }

ModalityColumn make_column(ModalitySpec spec) { return {std::move(spec), {}, {}, {}, {}}; }

// ---------------------------------------------------------------- pixel ----

constexpr double kYieldBase = 4.0;  // t/ha when fertility is zero
constexpr double kYieldGain = 4.0;  // t/ha per unit fertility
constexpr int kPixelCrops = 3;
constexpr int kSpectral = 12;
constexpr int kSceneClasses = 13;
constexpr int kPhiGrid = 201;  // fertility grid for the reference-prior decode

// Seasonal curve per crop: distinct peak time, width, amplitude and channel
// mix. Both the shape and the norm differ between crops, so a wrong crop
// hypothesis also misreads the amplitude scale the fertility signal lives on.
double pixel_template(int c, size_t t, size_t ch, size_t T) {
    static const double amp[kPixelCrops] = {1.0, 1.3, 1.69};
    static const double peak[kPixelCrops] = {0.30, 0.50, 0.70};
    static const double width[kPixelCrops] = {0.16, 0.20, 0.24};
    double tt = double(t) / double(T - 1);
    double season = 0.35 + 0.65 * std::exp(-0.5 * sq((tt - peak[c]) / width[c]));
    double chan = 0.55 + 0.45 * std::cos(kTwoPi * double((c + 1) * (ch + 2)) / 12.0 + double(c));
    return amp[c] * season * chan;
}

} // namespace

std::pair<Dataset, PixelLedger> gen_pixel_dataset(const PixelDatasetParams& p) {
    require(p.coupling >= 0.0 && p.coupling <= 1.0, ErrorCode::config,
            "pixel coupling must be in [0, 1]");
    require(p.season_len >= 4, ErrorCode::config, "pixel season length must be >= 4");
    require(p.n_fields >= 1 && p.pixels_per_field >= 1, ErrorCode::config,
            "pixel dataset needs at least one field and one pixel");
    require(p.spectral_noise >= 0.0 && p.yield_noise >= 0.0, ErrorCode::config,
            "noise scales must be >= 0");

    const size_t T = p.season_len;
    Dataset d;
    d.kind = "pixel";
    ModalitySpec sat;
    sat.name = "satellite";
    sat.kind = ModalityKind::timeseries;
    sat.features = kSpectral + kSceneClasses;
    sat.max_len = T;
    sat.imagery = true;
    d.columns.push_back(make_column(sat));
    d.columns.push_back(make_column({"weather", ModalityKind::tabular, TaskKind::regression, 4}));
    d.columns.push_back(make_column({"dem", ModalityKind::tabular, TaskKind::regression, 5}));
    ModalitySpec crop;
    crop.name = "crop";
    crop.kind = ModalityKind::categorical;
    crop.target_kind = TaskKind::classification;
    crop.classes = kPixelCrops;
    d.columns.push_back(make_column(crop));
    d.columns.push_back(make_column({"yield", ModalityKind::tabular, TaskKind::regression, 1}));

    PixelLedger ledger;
    ledger.base = kYieldBase;
    ledger.gain = kYieldGain;
    ledger.coupling = p.coupling;
    ledger.spectral_noise = p.spectral_noise;
    ledger.season_len = T;
    ledger.templates.resize(size_t(kPixelCrops) * T * kSpectral);
    for (int c = 0; c < kPixelCrops; ++c)
        for (size_t t = 0; t < T; ++t)
            for (int ch = 0; ch < kSpectral; ++ch)
                ledger.templates[(size_t(c) * T + t) * kSpectral + size_t(ch)] =
                    float(pixel_template(c, t, size_t(ch), T));

    int64_t id = 0;
    for (size_t f = 0; f < p.n_fields; ++f) {
        auto fr = Rng::derive(p.seed, kGroupStream + f);
        int crop_id = int(fr.below(kPixelCrops));
        int year = int(fr.below(3));
        double rain = fr.uniform();
        double field_fert = std::clamp(0.3 + 0.4 * rain + 0.06 * fr.normal(), 0.05, 0.95);
        double field_elev = fr.uniform();
        int scene = int(fr.below(kSceneClasses));
        double harvest_jitter = fr.uniform(0.0, 5.0);
        float w0 = clamp01(rain + 0.05 * fr.normal());
        float w1 = clamp01(fr.uniform());
        float w2 = clamp01(0.4 + 0.4 * rain + 0.1 * fr.normal());
        float w3 = clamp01(0.5 + 0.3 * (1.0 - rain) + 0.1 * fr.normal());

        for (size_t px = 0; px < p.pixels_per_field; ++px, ++id) {
            auto sr = Rng::derive(p.seed, kSampleStream + uint64_t(id));
            double elev = std::clamp(field_elev + 0.05 * sr.normal(), 0.0, 1.0);
            double phi =
                std::clamp(field_fert - 0.15 * (elev - 0.5) + 0.1 * sr.normal(), 0.0, 1.0);
            double amp = 1.0 + p.coupling * (phi - 0.5);

            auto& satc = d.columns[0];
            for (size_t t = 0; t < T; ++t) {
                for (int ch = 0; ch < kSpectral; ++ch) {
                    double v = ledger.templates[(size_t(crop_id) * T + t) * kSpectral + size_t(ch)];
                    satc.values.push_back(float(v * amp + p.spectral_noise * sr.normal()));
                }
                for (int ch = 0; ch < kSceneClasses; ++ch)
                    satc.values.push_back(ch == scene ? 1.0f : 0.0f);
                satc.timestamps.push_back(150.0 - double(t) * (150.0 / double(T - 1)) +
                                          harvest_jitter);
            }
            satc.lengths.push_back(T);

            d.columns[1].values.insert(d.columns[1].values.end(), {w0, w1, w2, w3});
            double aspect = sr.uniform(0.0, kTwoPi);
            d.columns[2].values.insert(
                d.columns[2].values.end(),
                {float(elev), float(std::abs(0.15 * sr.normal())), float(std::sin(aspect)),
                 float(std::cos(aspect)), float(0.25 * sr.uniform())});
            d.columns[3].ids.push_back(crop_id);
            double y = std::max(0.1, kYieldBase + kYieldGain * phi + p.yield_noise * sr.normal());
            d.columns[4].values.push_back(float(y));

            ledger.fertility.push_back(phi);
            ledger.expected_yield.push_back(kYieldBase + kYieldGain * phi);
            d.sample_ids.push_back(id);
            d.group_ids.push_back(int64_t(f));
            d.strata.push_back(year);
        }
    }
    d.validate();

    size_t stride = d.columns[0].spec.value_stride();
    ledger.crop_posterior.reserve(d.size() * kPixelCrops);
    for (size_t s = 0; s < d.size(); ++s) {
        auto dec = pixel_bayes_decode(ledger, &d.columns[0].values[s * stride]);
        for (double q : dec.posterior) ledger.crop_posterior.push_back(q);
    }
    return {std::move(d), std::move(ledger)};
}

PixelDecode pixel_bayes_decode(const PixelLedger& ledger, const float* series) {
    const size_t T = ledger.season_len;
    const double kappa = ledger.coupling;
    // A floor on the likelihood scale keeps the zero-noise case well defined:
    // weights then concentrate on the exact generating hypothesis.
    const double sigma = std::max(ledger.spectral_noise, 1e-3);

    double dot[kPixelCrops], norm2[kPixelCrops];
    for (int c = 0; c < kPixelCrops; ++c) {
        double dt = 0, n2 = 0;
        for (size_t t = 0; t < T; ++t)
            for (int ch = 0; ch < kSpectral; ++ch) {
                double tv = ledger.templates[(size_t(c) * T + t) * kSpectral + size_t(ch)];
                double xv = series[t * (kSpectral + kSceneClasses) + size_t(ch)];
                dt += tv * xv;
                n2 += tv * tv;
            }
        dot[c] = dt;
        norm2[c] = n2;
    }

    // log p(series | crop, phi) up to a shared constant, on the phi grid.
    double logw[kPixelCrops][kPhiGrid];
    double logmax = -1e300;
    for (int c = 0; c < kPixelCrops; ++c)
        for (int i = 0; i < kPhiGrid; ++i) {
            double phi = double(i) / double(kPhiGrid - 1);
            double g = 1.0 + kappa * (phi - 0.5);
            logw[c][i] = (2.0 * g * dot[c] - g * g * norm2[c]) / (2.0 * sigma * sigma);
            logmax = std::max(logmax, logw[c][i]);
        }

    PixelDecode out;
    double total = 0;
    double by_crop[kPixelCrops];
    for (int c = 0; c < kPixelCrops; ++c) {
        double sum = 0;
        for (int i = 0; i < kPhiGrid; ++i) sum += std::exp(logw[c][i] - logmax);
        by_crop[c] = sum;
        total += sum;
    }
    for (int c = 0; c < kPixelCrops; ++c) {
        out.posterior[size_t(c)] = by_crop[c] / total;
        if (by_crop[c] > by_crop[out.crop]) out.crop = c;
    }
    double wsum = 0, psum = 0;
    for (int i = 0; i < kPhiGrid; ++i) {
        double w = std::exp(logw[out.crop][i] - logmax);
        wsum += w;
        psum += w * double(i) / double(kPhiGrid - 1);
    }
    out.fertility = psum / wsum;
    return out;
}

double pixel_coupling_proxy(const Dataset& data, const PixelLedger& ledger) {
    const auto& sat = data.column("satellite");
    const auto& crop = data.column("crop");
    size_t stride = sat.spec.value_stride();
    double err[2] = {0, 0};  // [correctly classified, misclassified]
    size_t n[2] = {0, 0};
    for (size_t s = 0; s < data.size(); ++s) {
        auto dec = pixel_bayes_decode(ledger, &sat.values[s * stride]);
        double e = ledger.gain * std::abs(dec.fertility - ledger.fertility[s]);
        int bucket = dec.crop == crop.ids[s] ? 0 : 1;
        err[bucket] += e;
        n[bucket] += 1;
    }
    // No misclassifications (or no correct ones) means the comparison carries
    // no information; report parity.
    if (n[0] == 0 || n[1] == 0 || err[0] == 0) return 1.0;
    return (err[1] / double(n[1])) / (err[0] / double(n[0]));
}

// ---------------------------------------------------------------- patch ----

namespace {

constexpr int kLulcClasses = 12;
constexpr int kOpticalCh = 12;
constexpr int kClimateZones = 12;

float patch_signature(int cls, int ch) {
    return float(0.5 +
                 0.45 * std::cos(kTwoPi * double((cls + 1) * (ch + 1)) / 13.0 + 0.7 * cls));
}

// Smoothed random field in [0,1]: coarse white noise, bilinear upsample,
// two box blurs, per-patch min-max normalization.
std::vector<float> terrain_field(size_t H, size_t W, Rng& rng) {
    size_t ch = H / 4, cw = W / 4;
    std::vector<double> coarse(ch * cw);
    for (auto& v : coarse) v = rng.normal();

    std::vector<double> up(H * W);
    for (size_t y = 0; y < H; ++y)
        for (size_t x = 0; x < W; ++x) {
            double fy = (double(y) + 0.5) * double(ch) / double(H) - 0.5;
            double fx = (double(x) + 0.5) * double(cw) / double(W) - 0.5;
            size_t y0 = size_t(std::clamp(std::floor(fy), 0.0, double(ch - 1)));
            size_t x0 = size_t(std::clamp(std::floor(fx), 0.0, double(cw - 1)));
            size_t y1 = std::min(y0 + 1, ch - 1), x1 = std::min(x0 + 1, cw - 1);
            double ty = std::clamp(fy - double(y0), 0.0, 1.0);
            double tx = std::clamp(fx - double(x0), 0.0, 1.0);
            double a = coarse[y0 * cw + x0] * (1 - tx) + coarse[y0 * cw + x1] * tx;
            double b = coarse[y1 * cw + x0] * (1 - tx) + coarse[y1 * cw + x1] * tx;
            up[y * W + x] = a * (1 - ty) + b * ty;
        }

    for (int pass = 0; pass < 2; ++pass) {
        std::vector<double> blur(H * W);
        for (size_t y = 0; y < H; ++y)
            for (size_t x = 0; x < W; ++x) {
                double sum = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        size_t yy = size_t(std::clamp(int(y) + dy, 0, int(H) - 1));
                        size_t xx = size_t(std::clamp(int(x) + dx, 0, int(W) - 1));
                        sum += up[yy * W + xx];
                    }
                blur[y * W + x] = sum / 9.0;
            }
        up.swap(blur);
    }

    auto [mn, mx] = std::minmax_element(up.begin(), up.end());
    double lo = *mn, hi = *mx;
    std::vector<float> out(H * W, 0.5f);
    if (hi > lo)
        for (size_t i = 0; i < up.size(); ++i) out[i] = float((up[i] - lo) / (hi - lo));
    return out;
}

} // namespace

std::pair<Dataset, PatchLedger> gen_patch_dataset(const PatchDatasetParams& p) {
    require(p.height >= 16 && p.width >= 16 && p.height % 16 == 0 && p.width % 16 == 0,
            ErrorCode::config, "patch extents must be divisible by 16");
    require(p.n_regions >= 1 && p.patches_per_region >= 1, ErrorCode::config,
            "patch dataset needs at least one region and one patch");
    require(p.noise >= 0.0, ErrorCode::config, "noise scale must be >= 0");

    const size_t H = p.height, W = p.width, HW = H * W;
    Dataset d;
    d.kind = "patch";
    ModalitySpec sar;
    sar.name = "sar";
    sar.kind = ModalityKind::image_spatial;
    sar.channels = 2;
    sar.height = H;
    sar.width = W;
    sar.imagery = true;
    d.columns.push_back(make_column(sar));
    ModalitySpec optical = sar;
    optical.name = "optical";
    optical.channels = kOpticalCh;
    d.columns.push_back(make_column(optical));
    ModalitySpec elev;
    elev.name = "elevation";
    elev.kind = ModalityKind::dense_map;
    elev.target_kind = TaskKind::dense_seg;
    elev.channels = 1;
    elev.height = H;
    elev.width = W;
    d.columns.push_back(make_column(elev));
    ModalitySpec lulc;
    lulc.name = "lulc";
    lulc.kind = ModalityKind::class_map;
    lulc.target_kind = TaskKind::multiclass_seg;
    lulc.classes = kLulcClasses;
    lulc.height = H;
    lulc.width = W;
    d.columns.push_back(make_column(lulc));
    ModalitySpec climate;
    climate.name = "climate";
    climate.kind = ModalityKind::categorical;
    climate.target_kind = TaskKind::classification;
    climate.classes = kClimateZones;
    d.columns.push_back(make_column(climate));
    d.columns.push_back(
        make_column({"season", ModalityKind::tabular, TaskKind::bounded_regression, 1}));
    d.columns.push_back(make_column({"weather", ModalityKind::tabular, TaskKind::regression, 3}));

    PatchLedger ledger;
    ledger.signatures.resize(kLulcClasses * kOpticalCh);
    for (int k = 0; k < kLulcClasses; ++k)
        for (int ch = 0; ch < kOpticalCh; ++ch)
            ledger.signatures[size_t(k) * kOpticalCh + size_t(ch)] = patch_signature(k, ch);

    int64_t id = 0;
    std::vector<float> gradmag(HW);
    for (size_t r = 0; r < p.n_regions; ++r) {
        auto rr = Rng::derive(p.seed, kGroupStream + r);
        int zone = int(rr.below(kClimateZones));

        for (size_t k = 0; k < p.patches_per_region; ++k, ++id) {
            auto sr = Rng::derive(p.seed, kSampleStream + uint64_t(id));
            auto e = terrain_field(H, W, sr);
            double season = sr.uniform();
            double stripes_angle = sr.uniform(0.0, kTwoPi);
            double stripes_phase = sr.uniform(0.0, kTwoPi);
            double cs = std::cos(stripes_angle), sn = std::sin(stripes_angle);
            double season_scale = 0.85 + 0.3 * season;

            auto& lulcc = d.columns[3];
            size_t lulc_base = lulcc.ids.size();
            for (size_t y = 0; y < H; ++y)
                for (size_t x = 0; x < W; ++x) {
                    int band = std::min(5, int(e[y * W + x] * 6.0f));
                    double wave =
                        std::sin(kTwoPi * (cs * double(x) + sn * double(y)) / 8.0 + stripes_phase);
                    lulcc.ids.push_back(band * 2 + (wave > 0 ? 1 : 0));
                }

            auto& sarc = d.columns[0];
            for (size_t i = 0; i < HW; ++i)
                sarc.values.push_back(float(0.3 + 0.5 * e[i] + p.noise * sr.normal()));
            for (size_t i = 0; i < HW; ++i)
                sarc.values.push_back(float(0.2 + 0.5 * lulcc.ids[lulc_base + i] / 11.0 +
                                            p.noise * sr.normal()));

            auto& optc = d.columns[1];
            double tint = 0.1 * double(zone) / 11.0;
            for (int ch = 0; ch < kOpticalCh; ++ch)
                for (size_t i = 0; i < HW; ++i) {
                    int cls = lulcc.ids[lulc_base + i];
                    double sig = ledger.signatures[size_t(cls) * kOpticalCh + size_t(ch)];
                    optc.values.push_back(float(season_scale * (0.7 * sig + 0.3 * e[i]) + tint +
                                                p.noise * sr.normal()));
                }

            d.columns[2].values.insert(d.columns[2].values.end(), e.begin(), e.end());
            d.columns[4].ids.push_back(zone);
            d.columns[5].values.push_back(float(season));
            double mean_e = 0;
            for (float v : e) mean_e += v;
            mean_e /= double(HW);
            d.columns[6].values.push_back(clamp01(0.2 + 0.5 * season + 0.1 * sr.normal()));
            d.columns[6].values.push_back(
                clamp01(0.3 + 0.5 * double(zone) / 11.0 + 0.1 * sr.normal()));
            d.columns[6].values.push_back(clamp01(0.4 + 0.3 * mean_e + 0.1 * sr.normal()));

            // Boundary pixels: gradient magnitude above the patch's 90th
            // percentile (strictly, so ties fall outside the boundary set).
            for (size_t y = 0; y < H; ++y)
                for (size_t x = 0; x < W; ++x) {
                    size_t xl = x > 0 ? x - 1 : x, xr = x + 1 < W ? x + 1 : x;
                    size_t yu = y > 0 ? y - 1 : y, yd = y + 1 < H ? y + 1 : y;
                    double gx = (e[y * W + xr] - e[y * W + xl]) / double(xr - xl);
                    double gy = (e[yd * W + x] - e[yu * W + x]) / double(yd - yu);
                    gradmag[y * W + x] = float(std::hypot(gx, gy));
                }
            std::vector<float> sorted(gradmag);
            size_t kth = HW - 1 - HW / 10;  // at most HW/10 values land strictly above
            std::nth_element(sorted.begin(), sorted.begin() + kth, sorted.end());
            float thr = sorted[kth];
            for (size_t i = 0; i < HW; ++i) ledger.boundary.push_back(gradmag[i] > thr ? 1 : 0);

            d.sample_ids.push_back(id);
            d.group_ids.push_back(int64_t(r));
            d.strata.push_back(zone / 4);
        }
    }
    d.validate();
    return {std::move(d), std::move(ledger)};
}

// ----------------------------------------------------------------- tree ----

namespace {

constexpr int kTreeL3 = 15;
constexpr int kTreeL2 = 9;
constexpr int kTreeL1 = 3;
constexpr size_t kTreeFlatHW = 6;  // s1/s2 patch extent

} // namespace

std::pair<Dataset, TreeLedger> gen_tree_dataset(const TreeDatasetParams& p) {
    for (int v : p.parent_32)
        require(v >= 0 && v < kTreeL2, ErrorCode::config,
                "species parent map must target stand types [0, 9)");
    for (int v : p.parent_21)
        require(v >= 0 && v < kTreeL1, ErrorCode::config,
                "stand parent map must target foliage types [0, 3)");
    require(p.n_stands >= 1 && p.samples_per_stand >= 1, ErrorCode::config,
            "tree dataset needs at least one stand and one sample");
    require(p.height >= 16 && p.width >= 16 && p.height % 16 == 0 && p.width % 16 == 0,
            ErrorCode::config, "aerial extents must be divisible by 16");
    require(p.noise >= 0.0, ErrorCode::config, "noise scale must be >= 0");

    const size_t H = p.height, W = p.width;
    Dataset d;
    d.kind = "tree";
    ModalitySpec aerial;
    aerial.name = "aerial";
    aerial.kind = ModalityKind::image_spatial;
    aerial.channels = 3;
    aerial.height = H;
    aerial.width = W;
    aerial.imagery = true;
    d.columns.push_back(make_column(aerial));
    ModalitySpec s1;
    s1.name = "s1";
    s1.kind = ModalityKind::image_flat;
    s1.channels = 4;
    s1.height = kTreeFlatHW;
    s1.width = kTreeFlatHW;
    s1.imagery = true;
    d.columns.push_back(make_column(s1));
    ModalitySpec s2 = s1;
    s2.name = "s2";
    s2.channels = 12;
    d.columns.push_back(make_column(s2));
    for (auto [name, classes] :
         std::initializer_list<std::pair<const char*, size_t>>{{"l3", 15}, {"l2", 9}, {"l1", 3}}) {
        ModalitySpec m;
        m.name = name;
        m.kind = ModalityKind::categorical;
        m.target_kind = TaskKind::classification;
        m.classes = classes;
        d.columns.push_back(make_column(m));
    }
    d.columns.push_back(make_column({"age", ModalityKind::tabular, TaskKind::regression, 1}));

    TreeLedger ledger;
    ledger.parent_32 = p.parent_32;
    ledger.parent_21 = p.parent_21;
    for (int c = 0; c < kTreeL3; ++c)
        ledger.age_range[size_t(c)] = {0.03 * c, 0.03 * c + 0.45};
    ledger.mixed_fraction = 0.3;
    ledger.mix_weight_range = {0.35, 0.65};
    ledger.clean_density_range = {0.35, 1.0};
    ledger.mixed_density_range = {0.85, 1.0};

    // Species that share a stand type can appear blended in one canopy.
    std::array<std::vector<int>, kTreeL3> siblings;
    for (int a = 0; a < kTreeL3; ++a)
        for (int b = 0; b < kTreeL3; ++b)
            if (a != b && p.parent_32[size_t(a)] == p.parent_32[size_t(b)])
                siblings[size_t(a)].push_back(b);

    auto species_mix = [](int c, int ch) {
        return 0.75 + 0.25 * std::cos(kTwoPi * double(c * (ch + 1)) / 15.0);
    };
    // The flat patches are dominated by the stand type; the species leaves
    // only a faint residual, so species identity must mostly be read from
    // the fine aerial texture.
    auto s1_stand = [](int l2, int ch) {
        return 0.5 + 0.25 * std::cos(kTwoPi * double((l2 + 2) * (ch + 1)) / 11.0);
    };
    auto s1_species = [](int c, int ch) {
        return 0.08 * std::cos(kTwoPi * double((c + 2) * (ch + 1)) / 17.0);
    };
    auto s2_stand = [](int l2, int ch) {
        return 0.5 + 0.25 * std::cos(kTwoPi * double((l2 + 1) * (ch + 1)) / 13.0 + 0.2 * l2);
    };
    auto s2_species = [](int c, int ch) {
        return 0.08 * std::cos(kTwoPi * double((c + 1) * (ch + 1)) / 16.0 + 0.3 * c);
    };

    int64_t id = 0;
    for (size_t st = 0; st < p.n_stands; ++st) {
        auto str = Rng::derive(p.seed, kGroupStream + st);
        int c = int(str.below(kTreeL3));
        auto [lo, hi] = ledger.age_range[size_t(c)];
        double stand_age = str.uniform(lo + 0.05, hi - 0.05);
        int l2 = p.parent_32[size_t(c)];
        int l1 = p.parent_21[size_t(l2)];
        // Coarse pattern follows the stand type; its phase is a property of
        // the stand, not the observation.
        double gx = 1.0 + double(l2 % 3), gy = 1.0 + double(l2 / 3);
        double gph1 = str.uniform(0.0, kTwoPi), gph2 = str.uniform(0.0, kTwoPi);
        // Fine texture follows the species.
        double fx = 3.0 + double(c % 5), fy = 3.0 + double(c / 5);

        for (size_t k = 0; k < p.samples_per_stand; ++k, ++id) {
            auto sr = Rng::derive(p.seed, kSampleStream + uint64_t(id));
            double age = std::clamp(stand_age + 0.04 * sr.normal(), lo, hi);

            bool mixed = !siblings[size_t(c)].empty() &&
                         sr.uniform() < ledger.mixed_fraction;
            int sib = c;
            double lam = 0.0;
            if (mixed) {
                const auto& sibs = siblings[size_t(c)];
                sib = sibs[size_t(sr.below(sibs.size()))];
                lam = sr.uniform(ledger.mix_weight_range[0], ledger.mix_weight_range[1]);
            }
            const auto& dr = mixed ? ledger.mixed_density_range : ledger.clean_density_range;
            double density = sr.uniform(dr[0], dr[1]);
            double sfx = 3.0 + double(sib % 5), sfy = 3.0 + double(sib / 5);

            double ph1 = sr.uniform(0.0, kTwoPi), ph2 = sr.uniform(0.0, kTwoPi);
            double jit1 = gph1 + 0.1 * sr.normal(), jit2 = gph2 + 0.1 * sr.normal();
            double bright = 0.5 + 0.5 * age;

            auto& ac = d.columns[0];
            for (int ch = 0; ch < 3; ++ch) {
                double cmix = (1.0 - lam) * species_mix(c, ch) + lam * species_mix(sib, ch);
                double tint = 0.05 * std::cos(kTwoPi * double(l1 * 3 + ch) / 9.0);
                for (size_t y = 0; y < H; ++y)
                    for (size_t x = 0; x < W; ++x) {
                        double u = double(x) / double(W), v = double(y) / double(H);
                        double coarse = std::sin(kTwoPi * gx * u + jit1) *
                                        std::sin(kTwoPi * gy * v + jit2);
                        double fine = (1.0 - lam) * std::sin(kTwoPi * fx * u + ph1) *
                                                    std::sin(kTwoPi * fy * v + ph2) +
                                      lam * std::sin(kTwoPi * sfx * u + ph1) *
                                            std::sin(kTwoPi * sfy * v + ph2);
                        double tex = 0.45 + tint + density * (0.30 * coarse + 0.12 * cmix * fine);
                        ac.values.push_back(float(bright * tex + p.noise * sr.normal()));
                    }
            }

            double flat_scale = (0.8 + 0.2 * age) * (0.6 + 0.4 * density);
            auto& s1c = d.columns[1];
            for (int ch = 0; ch < 4; ++ch) {
                double sig = s1_stand(l2, ch) +
                             (1.0 - lam) * s1_species(c, ch) + lam * s1_species(sib, ch);
                for (size_t i = 0; i < kTreeFlatHW * kTreeFlatHW; ++i)
                    s1c.values.push_back(float(flat_scale * sig + p.noise * sr.normal()));
            }
            auto& s2c = d.columns[2];
            for (int ch = 0; ch < 12; ++ch) {
                double sig = s2_stand(l2, ch) +
                             (1.0 - lam) * s2_species(c, ch) + lam * s2_species(sib, ch);
                for (size_t i = 0; i < kTreeFlatHW * kTreeFlatHW; ++i)
                    s2c.values.push_back(float(flat_scale * sig + p.noise * sr.normal()));
            }

            d.columns[3].ids.push_back(c);
            d.columns[4].ids.push_back(l2);
            d.columns[5].ids.push_back(l1);
            d.columns[6].values.push_back(float(age));
            d.sample_ids.push_back(id);
            d.group_ids.push_back(int64_t(st));
            d.strata.push_back(l1);
        }
    }
    d.validate();
    return {std::move(d), std::move(ledger)};
}

} // namespace mtx

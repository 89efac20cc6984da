// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "mtx/dataset.hpp"

namespace mtx {

// Synthetic analogs of three remote-sensing schemas with planted, tunable
// cross-task couplings. Every latent that drives a sample is recorded in a
// generator ledger, so tests can compute exact oracles instead of trusting
// the models under test. All generator constants are artifact choices; the
// ledger and the dataset manifest state them explicitly.

// ---------------------------------------------------------------- pixel ----
// One sample per field pixel. A field grows one of three crops; each pixel
// has a latent fertility phi in [0,1]. The satellite series is the crop's
// seasonal template, amplitude-modulated by fertility with strength
// `coupling` (kappa): series = template(crop, t) * (1 + kappa*(phi - 1/2)).
// Yield is base + gain*phi with base and gain shared by all crops, so at
// kappa=0 yield carries no crop information at all: the null hypothesis for
// coupling analyses is exact by construction.

struct PixelDatasetParams {
    size_t n_fields = 200;
    size_t pixels_per_field = 25;
    size_t season_len = 12;  // satellite observations per sample, >= 4
    double coupling = 0.8;   // kappa in [0,1]
    double spectral_noise = 0.1;
    double yield_noise = 0.3;
    uint64_t seed = 1;
};

struct PixelLedger {
    double base = 0, gain = 0;  // yield = base + gain*phi + noise
    double coupling = 0;
    double spectral_noise = 0;
    size_t season_len = 0;
    std::vector<float> templates;        // [3][T][12] noise-free spectral curves
    std::vector<double> fertility;       // phi per sample
    std::vector<double> expected_yield;  // base + gain*phi per sample
    std::vector<double> crop_posterior;  // [n][3], reference-prior Bayes posterior
};

// Samples are ordered field-major; sample id is the row index, group id the
// field, stratum the harvest year. Modalities: satellite (timeseries 25 =
// 12 spectral + 13 one-hot scene, imagery), weather (tabular 4), dem
// (tabular 5), crop (categorical 3), yield (tabular 1).
std::pair<Dataset, PixelLedger> gen_pixel_dataset(const PixelDatasetParams& params);

// Bayes decode of one satellite series against the ledger templates under a
// reference prior (uniform crop, uniform fertility grid). `series` points at
// T*25 row-major values; only the 12 spectral channels enter the likelihood.
struct PixelDecode {
    int crop = 0;                        // argmax posterior
    double fertility = 0;                // posterior mean of phi given `crop`
    std::array<double, 3> posterior{};   // p(crop | series)
};
PixelDecode pixel_bayes_decode(const PixelLedger& ledger, const float* series);

// Coupling-strength proxy: the ratio of the Bayes oracle's noise-free yield
// error on crop-misclassified samples to its error on correctly classified
// ones. At kappa=0 the series carries no fertility signal, so both errors
// match; the ratio grows with kappa because a wrong crop hypothesis corrupts
// the amplitude decoding more, the harder amplitude and crop are entangled.
double pixel_coupling_proxy(const Dataset& data, const PixelLedger& ledger);

// ---------------------------------------------------------------- patch ----
// One sample per terrain patch. A smoothed random field, normalized per
// patch, is the elevation map; land cover is an elevation band split by a
// stripe texture; the optical channels carry an injective per-class
// signature plus elevation shading; radar carries elevation and class
// separately. Climate zone, season and weather are per-patch latents.

struct PatchDatasetParams {
    size_t n_regions = 24;
    size_t patches_per_region = 8;
    size_t height = 32, width = 32;  // divisible by 16
    double noise = 0.05;
    uint64_t seed = 1;
};

struct PatchLedger {
    std::vector<float> signatures;  // [12 classes][12 optical channels]
    std::vector<uint8_t> boundary;  // [n][H*W]; 1 = |grad elevation| in the patch's top decile
};

// Modalities: sar (2xHxW, imagery), optical (12xHxW, imagery), elevation
// (dense map), lulc (class map, 12 classes), climate (categorical 12),
// season (tabular 1 in [0,1]), weather (tabular 3). Group id is the region,
// stratum the region's climate belt (zone / 4).
std::pair<Dataset, PatchLedger> gen_patch_dataset(const PatchDatasetParams& params);

// ----------------------------------------------------------------- tree ----
// One sample per stand observation. Each stand has one species class (15),
// whose stand type (9) and foliage type (3) follow fixed parent maps; age is
// drawn from a class-dependent range. Appearance is hierarchical: a coarse
// low-frequency pattern keyed to the stand type, a fine high-frequency
// texture plus channel signature keyed to the species, a per-foliage tint,
// and age-dependent brightness, all scaled by a per-sample canopy density.

struct TreeDatasetParams {
    size_t n_stands = 400;
    size_t samples_per_stand = 3;
    size_t height = 16, width = 16;  // aerial extent
    double noise = 0.05;
    uint64_t seed = 1;
    std::array<int, 15> parent_32 = {0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 7, 8};
    std::array<int, 9> parent_21 = {0, 0, 0, 1, 1, 1, 2, 2, 2};
};

struct TreeLedger {
    std::array<int, 15> parent_32{};
    std::array<int, 9> parent_21{};
    std::array<std::array<double, 2>, 15> age_range{};  // [lo, hi] per species
    // Appearance constants. A slice of patches blends the fine species cues
    // with one same-stand sibling species (drawn weight in mix_weight_range),
    // modelling mixed-species canopies; their species label stays the
    // nominal one, so their species task carries irreducible ambiguity while
    // the stand cue is untouched. Canopy density scales all texture
    // amplitudes; mixed patches are dense by construction.
    double mixed_fraction = 0.0;
    std::array<double, 2> mix_weight_range{};
    std::array<double, 2> clean_density_range{};
    std::array<double, 2> mixed_density_range{};
};

// Modalities: aerial (3xHxW, imagery), s1 (flat 4x6x6, imagery), s2 (flat
// 12x6x6, imagery), l3 (categorical 15), l2 (categorical 9), l1
// (categorical 3), age (tabular 1). Group id is the stand, stratum the
// foliage type.
std::pair<Dataset, TreeLedger> gen_tree_dataset(const TreeDatasetParams& params);

} // namespace mtx

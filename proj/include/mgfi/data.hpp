#pragma once

#include <string>
#include <vector>

#include "mgfi/loss.hpp"
#include "mgfi/rng.hpp"
#include "mgfi/tensor.hpp"

namespace mgfi {

// Synthetic stand-in for polyp/nuclei/lesion imagery: irregular low-contrast
// blobs on a noisy background with exact interior masks.
struct SynthConfig {
    int count = 250;
    int size = 64;             // must be divisible by 32
    int channels = 3;
    int blob_count_min = 1;
    int blob_count_max = 3;
    float radius_min = 7.0f;
    float radius_max = 11.0f;
    float contrast = 0.15f;    // foreground-background gap, deliberately low
    float noise_sigma = 0.05f;
    float irregularity = 0.2f; // sinusoidal radius perturbation amplitude
    std::uint64_t seed = 42;

    void validate() const;
};

struct Sample {
    Tensor image;          // (1, c, h, w) in [0,1]
    LabelMask label;       // (1, 1, h, w)
    BoundaryMask boundary; // (1, 1, h, w); may be undefined until derived
};

// Deterministic given the seed; per-sample streams are derived as
// seed (+) index so generation order does not matter.
std::vector<Sample> synth_generate(const SynthConfig& cfg);

// Individual geometric transforms (applied identically to image and mask).
Sample rotate90(const Sample& s, int quarter_turns);
Sample transpose_hw(const Sample& s);
Sample center_crop_resize(const Sample& s, int numerator, int denominator);
Sample add_noise(const Sample& s, float sigma, Rng& rng);

// Training pipeline, each stage applied with probability 0.5: center crop to
// 7/8 and resize back (bilinear image / nearest mask), rotation by a random
// quarter turn, transposition, Gaussian noise (image only).
Sample augment(const Sample& s, Rng& rng);

struct SplitIndices {
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;
};

// Seeded shuffle then 80/10/10; val/test sizes floor(n/10), remainder to
// train.
SplitIndices split(int count, std::uint64_t seed);

// Dataset directory layout: images/NNNN.ppm (or .pgm), masks/NNNN.pgm and a
// manifest.json carrying the file list, split assignment and generator
// config.
void write_dataset(const std::string& dir, const std::vector<Sample>& samples,
                   const SplitIndices& split, const SynthConfig& cfg);

struct Dataset {
    std::vector<Sample> samples;
    SplitIndices split;
    int class_count = 2;
};

Dataset load_dataset(const std::string& dir);

}  // namespace mgfi

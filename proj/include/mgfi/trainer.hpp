#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mgfi/adam.hpp"
#include "mgfi/checkpoint.hpp"
#include "mgfi/data.hpp"
#include "mgfi/metrics.hpp"
#include "mgfi/network.hpp"

namespace mgfi {

struct TrainConfig {
    ModelConfig model;
    SynthConfig synth;
    std::string dataset_path;  // when set, loads from disk instead of synth
    int batch_size = 8;
    float learning_rate = 1e-3f;
    int max_epochs = 50;
    int patience = 7;          // early stopping on validation Dice
    std::uint64_t seed = 42;
    std::string out_dir = "out";

    void validate() const;
};

TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& cfg);

struct EpochStats {
    int epoch = 0;
    double train_total = 0.0;
    double train_ce = 0.0;
    double train_dice = 0.0;
    double train_boundary = 0.0;
    double val_dice = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
    double best_val_dice = 0.0;
    std::string checkpoint_path;
    MetricReport test;  // evaluated with the best parameters
};

std::string train_report_to_json(const TrainReport& r);

// Full deterministic loop: seeded shuffle, augmentation, forward, hybrid
// loss, backward, Adam; per-epoch validation Dice with strict-improvement
// early stopping; best checkpoint written to <out_dir>/best.ckpt.
TrainReport train(const TrainConfig& config);

// Per-image metrics averaged over the given samples (inference mode). With
// oracle=true the labels are fed through as one-hot logits, bypassing the
// network.
MetricReport evaluate_samples(NetworkParams& params, const ModelConfig& config,
                              const std::vector<Sample>& samples, bool oracle = false);

// Argmax prediction and raw edge map for one sample.
struct Prediction {
    LabelMask mask;
    Tensor edge;  // undefined when the AE head is ablated
};
Prediction predict(NetworkParams& params, const ModelConfig& config,
                   const Tensor& image);

// Trains and evaluates the full model plus the four single-switch variants
// under one seed; rows ordered full, no-mgfi-upper, no-mgfi-lower, no-mgfi,
// no-ae.
std::vector<std::pair<std::string, MetricReport>> ablate(const TrainConfig& config);

// Resolves the sample list the trainer/evaluator works on.
struct LoadedData {
    std::vector<Sample> samples;
    SplitIndices split;
    int class_count = 2;
};
LoadedData resolve_dataset(const TrainConfig& config);

}  // namespace mgfi

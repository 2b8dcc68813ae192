#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "coverhead/head.hpp"

namespace coverhead {

// Head training protocol: Adam with per-sample updates, step decay, and
// horizontal flips as the only augmentation.
struct TrainConfig {
    int epochs = 40;
    double lr0 = 1e-3;
    std::vector<int> decay_epochs{20, 30};  // 1-based epochs where lr drops
    double decay_factor = 0.1;
    int batch_size = 1;
    bool augment_hflip = true;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError naming the field

    // key=value text file; unknown keys rejected. decay_epochs is a
    // comma-separated list.
    static TrainConfig from_file(const std::filesystem::path& path);
    void to_file(const std::filesystem::path& path) const;
};

// Learning rate in effect during a 1-based epoch: lr0 scaled by decay_factor
// once per decay epoch that has been reached.
double lr_at_epoch(const TrainConfig& config, int epoch);

struct EpochStats {
    int epoch = 0;          // 1-based
    double mean_loss_pp = 0.0;
    double lr = 0.0;
    double kappa = 0.0;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;

    void write_csv(const std::filesystem::path& path) const;
};

// One training sample: normalized features plus the image-level cover target.
struct TrainSample {
    const FeatureMap* features = nullptr;
    CoverVector target;  // percent
};

struct AdamState {
    std::vector<double> m_weights, v_weights;
    std::vector<double> m_bias, v_bias;
    double m_kappa = 0.0, v_kappa = 0.0;
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static AdamState init(const HeadParams& params, const TrainConfig& config);
};

// One bias-corrected Adam update over all head parameters.
void adam_step(HeadParams& params, const HeadGradients& grads, AdamState& state, double lr);

struct TrainResult {
    HeadParams params;
    TrainHistory history;
};

// Runs the full schedule over the dataset. Deterministic for a fixed seed:
// sample order and flip draws come from per-epoch derived streams, so
// toggling the augmentation never perturbs the shuffles.
TrainResult train(std::span<const TrainSample> dataset, const TrainConfig& config);

} // namespace coverhead

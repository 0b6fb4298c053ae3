#pragma once

#include <string>
#include <vector>

#include "msat/network.hpp"
#include "msat/video_data.hpp"

namespace msat {

// Training hyperparameters; serialized as flat key=value text. Unknown keys
// are rejected and the text form round-trips losslessly.
struct TrainConfig {
    Stream stream = Stream::spatial;
    int batch_size = 16;
    float lr = 0.001f;
    float momentum = 0.9f;
    float lr_decay_factor = 0.1f;
    int lr_decay_every = 40;
    int epochs = 30;
    float grad_clip = 20.0f;
    int num_segments = 3;
    float lambda_adv = 1.0f;
    uint64_t seed = 0;
    std::string encoder_path;
    float adam_lr_d = 1e-4f;
    float eps_clamp = 1e-7f;

    std::vector<int> stage_channels{8, 16, 32, 64};
    int embed_dim = 64;
    std::vector<int> mpa_bins{1, 2, 4};
    bool residual_attention = false;
    bool use_mpa = true;

    bool operator==(const TrainConfig&) const = default;

    // Scaled-down defaults that train in minutes on a desktop CPU.
    static TrainConfig desk_defaults(Stream stream);
    // The full-scale schedule (batch 64, 80/120 epochs, clip 20/40).
    static TrainConfig paper_scale(Stream stream);

    NetworkConfig network_config(int in_channels, int input_h, int input_w) const;

    float lr_at_epoch(int epoch) const;
};

TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config_file(const std::string& path);
std::string config_to_text(const TrainConfig& cfg);
void write_config_file(const TrainConfig& cfg, const std::string& path);

}  // namespace msat

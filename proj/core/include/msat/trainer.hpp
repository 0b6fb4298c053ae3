#pragma once

#include <memory>
#include <string>
#include <vector>

#include "msat/config.hpp"
#include "msat/sal.hpp"

namespace msat {

struct LossLogRow {
    int64_t step = 0;
    int epoch = 0;
    float cls = 0.0f;
    float adv_d = 0.0f;
    float adv_g = 0.0f;
    float total = 0.0f;
};

// Confusion matrix rows are truth, columns prediction; accuracy equals
// trace(M) / sum(M).
struct Metrics {
    double top1 = 0.0;
    std::vector<double> per_class;
    std::vector<std::vector<int64_t>> confusion;
    int64_t total_clips = 0;
    std::vector<LossLogRow> loss_curves;  // filled by training runs
};

// A trainable two-stream half: generator network, classifier and
// discriminator, plus progress counters. Checkpoints persist all parameters
// and optimizer state so training resumes bit-exactly.
struct TrainState {
    TrainConfig cfg;
    int num_classes = 0;
    int input_height = 0;
    int input_width = 0;
    int epoch = 0;  // completed epochs
    int64_t global_step = 0;

    std::unique_ptr<Network> net;
    std::unique_ptr<Classifier> classifier;
    std::unique_ptr<Discriminator> discriminator;

    ParamRefs all_params();
};

void save_checkpoint(TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

struct TrainResult {
    std::vector<LossLogRow> log;
    std::string checkpoint_path;
    std::string loss_log_path;
};

// Runs epochs of alternating adversarial steps over seeded shuffled
// minibatches, decaying the generator lr on the configured schedule, writing
// a checkpoint after every epoch and the loss log next to it. Pass
// resume_from to continue a checkpoint; the remaining epochs reproduce a
// straight-through run exactly.
TrainResult train_stream(const DatasetManifest& manifest, const TrainConfig& cfg,
                         const std::string& out_checkpoint,
                         const std::string& resume_from = {});

// Deterministic center-snippet evaluation.
Metrics evaluate(TrainState& state, const DatasetManifest& manifest);
Metrics evaluate_checkpoint(const std::string& checkpoint_path, const DatasetManifest& manifest);

// Per-clip class probabilities (softmax over logits) under test sampling.
std::vector<std::vector<float>> predict_probabilities(TrainState& state, const ClipStore& store);

// Combines the two streams' probabilities as w_s*p_s + w_t*p_t per clip and
// scores the argmax.
Metrics fuse_streams(TrainState& spatial_state, TrainState& temporal_state,
                     const DatasetManifest& manifest, float weight_spatial = 1.0f,
                     float weight_temporal = 1.0f);

// Writes confusion.csv, metrics.json, confusion.ppm (and loss_log.csv when
// loss curves are present) into out_dir.
void emit_reports(const Metrics& metrics, const std::string& out_dir);

void write_loss_log_csv(const std::vector<LossLogRow>& rows, const std::string& path);
std::vector<std::vector<int64_t>> read_confusion_csv(const std::string& path);

}  // namespace msat

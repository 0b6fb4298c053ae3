#pragma once

#include <random>
#include <string>
#include <vector>

#include "msat/tensor.hpp"

namespace msat {

enum class Stream { spatial, temporal };
enum class TaskKind { spatial_only, temporal_only, joint };
enum class SampleMode { train, test };

const char* stream_name(Stream s);
Stream stream_from_name(const std::string& name);
TaskKind task_from_name(const std::string& name);

// A raw clip: frames [T,3,H,W] with values in [0,1], T >= 2.
struct VideoClip {
    std::string clip_id;
    int label = -1;
    Tensor frames;

    int num_frames() const { return frames.dim(0); }
    int height() const { return frames.dim(2); }
    int width() const { return frames.dim(3); }
};

// Splits the valid index range into num_segments near-equal contiguous
// segments and draws one snippet per segment: uniformly at random in train
// mode, the segment center (ties to the upper index) in test mode.
struct SegmentSampler {
    int num_segments = 3;
    SampleMode mode = SampleMode::test;
};

// For the spatial stream indices range over frames [0,T-1]; for the temporal
// stream they are difference-pair starts [0,T-2].
std::vector<int> sample_segments(const VideoClip& clip, const SegmentSampler& sampler,
                                 Stream stream, std::mt19937* rng = nullptr);

// frames[i+1] - frames[i], elementwise; values lie in [-1,1].
Tensor compute_diff(const VideoClip& clip, int index);

// Network-ready batch; rows are clip-major (all n snippets of clip 0, ...).
struct SnippetBatch {
    Tensor data;              // [N*n, 3, H, W]
    std::vector<int> labels;  // one per clip
    Stream stream = Stream::spatial;
    int num_segments = 1;
};

// Spatial inputs map [0,1] -> [-1,1]; temporal diffs pass through unchanged.
// Rejects out-of-range values.
Tensor normalize_frames(const Tensor& raw, Stream stream);

SnippetBatch make_batch(const std::vector<const VideoClip*>& clips,
                        const SegmentSampler& sampler, Stream stream,
                        std::mt19937* rng = nullptr);

struct ManifestEntry {
    std::string clip_id;
    std::string path;  // relative to the manifest root
    int label = 0;
    int frames = 0;
    int height = 0;
    int width = 0;
};

struct DatasetManifest {
    std::string root;
    int num_classes = 0;
    std::string split;
    std::vector<ManifestEntry> entries;
};

void save_manifest(const DatasetManifest& manifest, const std::string& path);
// Loads and validates: labels of a train split must cover [0,K) exactly, and
// each entry's file header must match its declared shape.
DatasetManifest load_manifest(const std::string& path);

void save_clip(const VideoClip& clip, const std::string& path);
VideoClip load_clip(const DatasetManifest& manifest, size_t entry_index);

struct DatasetSpec {
    TaskKind task = TaskKind::joint;
    int num_classes = 8;
    int clips_per_class = 10;
    int frames = 16;
    int height = 32;
    int width = 32;
    uint64_t seed = 0;
    std::string split = "train";
};

// Writes one moving-shape clip per (class, index) under root_dir plus a
// manifest named <split>_manifest.json; deterministic per seed.
//   spatial_only:  classes differ by shape color, motion direction random
//   temporal_only: classes differ by motion direction (K in {2,4}), color random
//   joint:         classes are (color, direction) pairs, K = colors x directions
DatasetManifest generate_synthetic_dataset(const std::string& root_dir, const DatasetSpec& spec);

// For joint tasks: how the class count factors into colors x directions.
void joint_task_factors(int num_classes, int* colors, int* directions);

std::string manifest_filename(const std::string& split);

// All clips of a manifest loaded into memory.
struct ClipStore {
    std::vector<VideoClip> clips;
    int num_classes = 0;

    static ClipStore load(const DatasetManifest& manifest);
};

}  // namespace msat

#pragma once

#include <random>
#include <string>
#include <vector>

#include "msat/ops.hpp"
#include "msat/optim.hpp"

namespace msat {

// Backbone and fusion configuration. Stage i halves the spatial resolution
// of its input, so input extents must be divisible by 16.
struct NetworkConfig {
    std::vector<int> stage_channels{8, 16, 32, 64};
    int embed_dim = 64;
    std::vector<int> mpa_bins{1, 2, 4};
    bool residual_attention = false;
    bool use_mpa = true;
    int in_channels = 3;
    int input_height = 32;
    int input_width = 32;
};

struct Conv2dLayer {
    Parameter weight, bias;
    int stride = 1, padding = 0;

    Conv2dLayer() = default;
    Conv2dLayer(const std::string& name, int in_ch, int out_ch, int ksize, int stride,
                int padding, std::mt19937& rng);
    Tensor forward(const Tensor& x) const;
    void collect(ParamRefs& out);
};

struct LinearLayer {
    Parameter weight, bias;

    LinearLayer() = default;
    LinearLayer(const std::string& name, int in_dim, int out_dim, std::mt19937& rng);
    Tensor forward(const Tensor& x) const;
    void collect(ParamRefs& out);
};

// One backbone stage: 3x3 stride-2 conv + relu, then 3x3 conv + relu at the
// reduced resolution. Rejects odd spatial extents.
struct Stage {
    Conv2dLayer reduce, refine;

    Tensor forward(const Tensor& x) const;
    void collect(ParamRefs& out);
};

// Pyramid attention gate: pools the stage features at several scales,
// restores each branch to full resolution, mixes the branches with learned
// softmax weights, merges them through a 1x1 conv and emits a sigmoid gate
// that multiplies the features.
struct PyramidAttention {
    std::vector<int> bins;   // square pyramid bin sizes, each fits the map
    Parameter scale_logits;  // one logit per pyramid scale
    Conv2dLayer merge;       // 1x1 conv: bins.size()*c -> c
    bool residual = false;

    PyramidAttention() = default;
    PyramidAttention(const std::string& name, int channels, std::vector<int> bins,
                     bool residual, std::mt19937& rng);

    struct Result {
        Tensor attention;  // values strictly in (0,1)
        Tensor refined;    // same shape as the input features
    };
    Result forward(const Tensor& features) const;
    void collect(ParamRefs& out);
};

// Projects each stage to a common embedding dimension and fuses the four
// stage embeddings with learned softmax weights.
struct FusionHead {
    std::vector<LinearLayer> embed;
    Parameter stage_logits;

    void collect(ParamRefs& out);
};

// Elementwise mean of equally-shaped per-snippet tensors.
Tensor consensus(const std::vector<Tensor>& snippets);

// Softmax-weighted sum of per-stage embeddings; differentiable through both
// the embeddings and the logits.
Tensor fuse_stages(const std::vector<Tensor>& stage_embeddings, const Tensor& stage_logits);

// Four-stage convolutional backbone with a pyramid-attention gate after each
// stage; produces one fused embedding per clip.
class Network {
 public:
    Network(const NetworkConfig& cfg, std::mt19937& rng);

    // batch is [N*n, C, H, W] with rows clip-major (all n snippets of clip 0,
    // then clip 1, ...); returns [N, embed_dim].
    Tensor forward(const Tensor& batch, int num_segments);

    ParamRefs parameters();
    const NetworkConfig& config() const { return cfg_; }

    Stage& stage(int i) { return stages_.at(i); }
    PyramidAttention& attention(int i) { return attn_.at(i); }
    FusionHead& fusion() { return fusion_; }
    static constexpr int kNumStages = 4;

 private:
    NetworkConfig cfg_;
    std::vector<Stage> stages_;
    std::vector<PyramidAttention> attn_;
    FusionHead fusion_;
};

}  // namespace msat

#include "msat/network.hpp"

#include <algorithm>
#include <cmath>

namespace msat {

Conv2dLayer::Conv2dLayer(const std::string& name, int in_ch, int out_ch, int ksize, int stride_,
                         int padding_, std::mt19937& rng)
    : stride(stride_), padding(padding_) {
    const float std_dev = std::sqrt(2.0f / static_cast<float>(in_ch * ksize * ksize));
    weight = Parameter(name + ".weight",
                       Tensor::normal({out_ch, in_ch, ksize, ksize}, 0.0f, std_dev, rng, true));
    bias = Parameter(name + ".bias", Tensor::zeros({out_ch}, true));
}

Tensor Conv2dLayer::forward(const Tensor& x) const {
    return conv2d(x, weight.value, bias.value, stride, padding);
}

void Conv2dLayer::collect(ParamRefs& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

LinearLayer::LinearLayer(const std::string& name, int in_dim, int out_dim, std::mt19937& rng) {
    const float std_dev = std::sqrt(2.0f / static_cast<float>(in_dim));
    weight = Parameter(name + ".weight", Tensor::normal({out_dim, in_dim}, 0.0f, std_dev, rng, true));
    bias = Parameter(name + ".bias", Tensor::zeros({out_dim}, true));
}

Tensor LinearLayer::forward(const Tensor& x) const {
    return linear(x, weight.value, bias.value);
}

void LinearLayer::collect(ParamRefs& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

Tensor Stage::forward(const Tensor& x) const {
    MSAT_REQUIRE(x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0,
                 "stage: spatial extents must be even, got ", shape_str(x.shape()));
    return relu(refine.forward(relu(reduce.forward(x))));
}

void Stage::collect(ParamRefs& out) {
    reduce.collect(out);
    refine.collect(out);
}

PyramidAttention::PyramidAttention(const std::string& name, int channels, std::vector<int> bins_,
                                   bool residual_, std::mt19937& rng)
    : bins(std::move(bins_)), residual(residual_) {
    MSAT_REQUIRE(!bins.empty(), name, ": needs at least one pyramid scale");
    scale_logits = Parameter(name + ".scale_logits",
                             Tensor::zeros({static_cast<int>(bins.size())}, true));
    merge = Conv2dLayer(name + ".merge", static_cast<int>(bins.size()) * channels, channels, 1,
                        1, 0, rng);
}

PyramidAttention::Result PyramidAttention::forward(const Tensor& features) const {
    const int h = features.dim(2), w = features.dim(3);
    const Tensor weights = softmax(scale_logits.value, 0);
    std::vector<Tensor> branches;
    branches.reserve(bins.size());
    for (size_t t = 0; t < bins.size(); ++t) {
        MSAT_REQUIRE(bins[t] <= h && bins[t] <= w, "pyramid bin ", bins[t],
                     " larger than feature map (", h, ",", w, ")");
        Tensor pooled = adaptive_avg_pool2d(features, bins[t], bins[t]);
        Tensor restored = upsample_nearest(pooled, h, w);
        branches.push_back(mul(restored, take(weights, static_cast<int64_t>(t))));
    }
    Result r;
    r.attention = sigmoid(merge.forward(concat_channels(branches)));
    r.refined = residual ? mul(features, affine(r.attention, 1.0f, 1.0f))
                         : mul(features, r.attention);
    return r;
}

void PyramidAttention::collect(ParamRefs& out) {
    out.push_back(&scale_logits);
    merge.collect(out);
}

void FusionHead::collect(ParamRefs& out) {
    for (auto& e : embed) e.collect(out);
    out.push_back(&stage_logits);
}

Tensor consensus(const std::vector<Tensor>& snippets) {
    MSAT_REQUIRE(!snippets.empty(), "consensus: empty snippet list");
    Tensor acc = snippets[0];
    for (size_t i = 1; i < snippets.size(); ++i) acc = add(acc, snippets[i]);
    if (snippets.size() == 1) return acc;
    return affine(acc, 1.0f / static_cast<float>(snippets.size()), 0.0f);
}

Tensor fuse_stages(const std::vector<Tensor>& stage_embeddings, const Tensor& stage_logits) {
    MSAT_REQUIRE(!stage_embeddings.empty(), "fuse_stages: empty embedding list");
    MSAT_REQUIRE(stage_logits.numel() == static_cast<int64_t>(stage_embeddings.size()),
                 "fuse_stages: ", stage_embeddings.size(), " embeddings but ",
                 stage_logits.numel(), " stage logits");
    for (const auto& e : stage_embeddings)
        MSAT_REQUIRE(e.shape() == stage_embeddings[0].shape(),
                     "fuse_stages: embedding dimension mismatch ", shape_str(e.shape()),
                     " vs ", shape_str(stage_embeddings[0].shape()));
    const Tensor weights = softmax(stage_logits, 0);
    Tensor fused = mul(stage_embeddings[0], take(weights, 0));
    for (size_t i = 1; i < stage_embeddings.size(); ++i)
        fused = add(fused, mul(stage_embeddings[i], take(weights, static_cast<int64_t>(i))));
    return fused;
}

Network::Network(const NetworkConfig& cfg, std::mt19937& rng) : cfg_(cfg) {
    MSAT_REQUIRE(static_cast<int>(cfg.stage_channels.size()) == kNumStages,
                 "network: expected ", kNumStages, " stage channel counts, got ",
                 cfg.stage_channels.size());
    MSAT_REQUIRE(cfg.input_height % 16 == 0 && cfg.input_width % 16 == 0,
                 "network: input extents must be divisible by 16, got (", cfg.input_height,
                 ",", cfg.input_width, ")");
    MSAT_REQUIRE(cfg.embed_dim >= 1, "network: embed_dim must be positive");

    int in_ch = cfg.in_channels;
    for (int i = 0; i < kNumStages; ++i) {
        const int out_ch = cfg.stage_channels[i];
        const std::string name = "stage" + std::to_string(i + 1);
        Stage s;
        s.reduce = Conv2dLayer(name + ".reduce", in_ch, out_ch, 3, 2, 1, rng);
        s.refine = Conv2dLayer(name + ".refine", out_ch, out_ch, 3, 1, 1, rng);
        stages_.push_back(std::move(s));
        in_ch = out_ch;
    }
    if (cfg.use_mpa) {
        for (int i = 0; i < kNumStages; ++i) {
            const int map = std::min(cfg.input_height, cfg.input_width) >> (i + 1);
            std::vector<int> bins;
            for (int b : cfg.mpa_bins)
                if (b >= 1 && b <= map) bins.push_back(b);
            MSAT_REQUIRE(!bins.empty(), "network: no pyramid bin fits stage ", i + 1,
                         " feature map of extent ", map);
            attn_.emplace_back("mpa" + std::to_string(i + 1), cfg.stage_channels[i],
                               std::move(bins), cfg.residual_attention, rng);
        }
    }
    for (int i = 0; i < kNumStages; ++i)
        fusion_.embed.push_back(LinearLayer("fusion.embed" + std::to_string(i + 1),
                                            cfg.stage_channels[i], cfg.embed_dim, rng));
    fusion_.stage_logits = Parameter("fusion.stage_logits", Tensor::zeros({kNumStages}, true));
}

Tensor Network::forward(const Tensor& batch, int num_segments) {
    MSAT_REQUIRE(batch.rank() == 4, "network: batch must be [B,C,H,W], got ",
                 shape_str(batch.shape()));
    MSAT_REQUIRE(batch.dim(1) == cfg_.in_channels, "network: expected ", cfg_.in_channels,
                 " input channels, got ", batch.dim(1));
    MSAT_REQUIRE(batch.dim(2) == cfg_.input_height && batch.dim(3) == cfg_.input_width,
                 "network: expected ", cfg_.input_height, "x", cfg_.input_width,
                 " input, got ", batch.dim(2), "x", batch.dim(3));
    MSAT_REQUIRE(num_segments >= 1, "network: num_segments must be positive");
    MSAT_REQUIRE(batch.dim(0) % num_segments == 0, "network: batch size ", batch.dim(0),
                 " not divisible by num_segments ", num_segments);
    const int num_clips = batch.dim(0) / num_segments;

    Tensor x = batch;
    std::vector<Tensor> stage_embeddings;
    for (int i = 0; i < kNumStages; ++i) {
        x = stages_[i].forward(x);
        if (cfg_.use_mpa) x = attn_[i].forward(x).refined;
        // Global average pool, project to the shared embedding dimension,
        // then take the snippet consensus per clip.
        Tensor pooled = mean_over_axis(mean_over_axis(x, 3), 2);
        Tensor embedded = fusion_.embed[i].forward(pooled);
        Tensor grouped = reshape(embedded, {num_clips, num_segments, cfg_.embed_dim});
        stage_embeddings.push_back(mean_over_axis(grouped, 1));
    }
    return fuse_stages(stage_embeddings, fusion_.stage_logits.value);
}

ParamRefs Network::parameters() {
    ParamRefs out;
    for (auto& s : stages_) s.collect(out);
    for (auto& a : attn_) a.collect(out);
    fusion_.collect(out);
    return out;
}

}  // namespace msat

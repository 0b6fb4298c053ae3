#pragma once

#include <random>
#include <string>
#include <vector>

#include "msat/network.hpp"

namespace msat {

// Label-supervised autoencoder with three fully connected layers:
// encoder one-hot(K) -> 64 -> relu -> code_dim, decoder code_dim -> K.
// After training the encoder is frozen and maps each label to a fixed
// semantic code that downstream adversarial training treats as "real".
class SemanticAutoencoder {
 public:
    SemanticAutoencoder() = default;
    SemanticAutoencoder(int num_classes, int code_dim, std::mt19937& rng);

    // One code per label; forward under the frozen contract runs without
    // gradient recording and is a pure function of the label.
    Tensor encode(int label) const;                           // [code_dim]
    Tensor encode_batch(const std::vector<int>& labels) const;  // [N, code_dim]

    // Differentiable reconstruction path used during training.
    Tensor reconstruct_logits(const Tensor& one_hot_labels);

    int num_classes() const { return num_classes_; }
    int code_dim() const { return code_dim_; }
    bool frozen() const { return frozen_; }
    void freeze() { frozen_ = true; }

    // Argmax reconstruction accuracy over all K one-hot inputs.
    double reconstruction_accuracy() const;

    ParamRefs parameters();
    uint64_t encoder_checksum() const;

    static constexpr int kHiddenDim = 64;

 private:
    int num_classes_ = 0;
    int code_dim_ = 0;
    bool frozen_ = false;
    LinearLayer enc_hidden_, enc_out_, dec_out_;

    friend SemanticAutoencoder load_semantic_encoder(const std::string& path);
};

// Trains to 100% label reconstruction with full-batch Adam and freezes the
// result; throws if the epoch budget is insufficient.
SemanticAutoencoder train_autoencoder(int num_classes, int code_dim, int epochs, float lr,
                                      uint64_t seed);

// Checkpoint = tensor sequence plus sidecar <path>.json with
// {"num_classes":K,"code_dim":D,"frozen":true}.
void save_semantic_encoder(const SemanticAutoencoder& autoencoder, const std::string& path);
// Re-validates the 100% reconstruction contract at load time.
SemanticAutoencoder load_semantic_encoder(const std::string& path);

}  // namespace msat

#include "msat/semantic_encoder.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "msat/sal.hpp"
#include "msat/serialize.hpp"

namespace msat {

SemanticAutoencoder::SemanticAutoencoder(int num_classes, int code_dim, std::mt19937& rng)
    : num_classes_(num_classes), code_dim_(code_dim) {
    MSAT_REQUIRE(num_classes >= 2, "autoencoder: need at least 2 classes, got ", num_classes);
    MSAT_REQUIRE(code_dim >= 1, "autoencoder: code_dim must be positive");
    enc_hidden_ = LinearLayer("encoder.hidden", num_classes, kHiddenDim, rng);
    enc_out_ = LinearLayer("encoder.out", kHiddenDim, code_dim, rng);
    dec_out_ = LinearLayer("decoder.out", code_dim, num_classes, rng);
}

Tensor SemanticAutoencoder::encode_batch(const std::vector<int>& labels) const {
    MSAT_REQUIRE(num_classes_ > 0, "autoencoder: not initialized");
    for (int y : labels)
        MSAT_REQUIRE(y >= 0 && y < num_classes_, "encode: label ", y, " out of range [0,",
                     num_classes_, ")");
    NoGradGuard guard;
    const Tensor inputs = one_hot(labels, num_classes_);
    return enc_out_.forward(relu(enc_hidden_.forward(inputs)));
}

Tensor SemanticAutoencoder::encode(int label) const {
    return reshape(encode_batch({label}), {code_dim_});
}

Tensor SemanticAutoencoder::reconstruct_logits(const Tensor& one_hot_labels) {
    MSAT_REQUIRE(!frozen_, "autoencoder: reconstruction path is training-only once frozen");
    return dec_out_.forward(enc_out_.forward(relu(enc_hidden_.forward(one_hot_labels))));
}

double SemanticAutoencoder::reconstruction_accuracy() const {
    NoGradGuard guard;
    std::vector<int> all(static_cast<size_t>(num_classes_));
    for (int k = 0; k < num_classes_; ++k) all[static_cast<size_t>(k)] = k;
    const Tensor codes = encode_batch(all);
    const Tensor logits = dec_out_.forward(codes);
    int correct = 0;
    for (int k = 0; k < num_classes_; ++k)
        if (argmax_row(logits, k) == k) ++correct;
    return static_cast<double>(correct) / static_cast<double>(num_classes_);
}

ParamRefs SemanticAutoencoder::parameters() {
    ParamRefs out;
    enc_hidden_.collect(out);
    enc_out_.collect(out);
    dec_out_.collect(out);
    return out;
}

uint64_t SemanticAutoencoder::encoder_checksum() const {
    auto& self = const_cast<SemanticAutoencoder&>(*this);
    ParamRefs enc;
    self.enc_hidden_.collect(enc);
    self.enc_out_.collect(enc);
    return params_checksum(enc);
}

SemanticAutoencoder train_autoencoder(int num_classes, int code_dim, int epochs, float lr,
                                      uint64_t seed) {
    MSAT_REQUIRE(epochs >= 1, "train_autoencoder: epochs must be positive");
    MSAT_REQUIRE(lr > 0.0f, "train_autoencoder: learning rate must be positive");
    std::mt19937 rng(static_cast<std::mt19937::result_type>(hash_mix(seed, 0x5eed)));
    SemanticAutoencoder ae(num_classes, code_dim, rng);

    std::vector<int> labels(static_cast<size_t>(num_classes));
    for (int k = 0; k < num_classes; ++k) labels[static_cast<size_t>(k)] = k;
    const Tensor inputs = one_hot(labels, num_classes);
    const ParamRefs params = ae.parameters();

    Tape& tape = Tape::current();
    for (int epoch = 0; epoch < epochs; ++epoch) {
        tape.clear();
        const Tensor loss = classification_loss(ae.reconstruct_logits(inputs), labels);
        zero_grad(params);
        tape.backward(loss);
        adam_step(params, lr);
    }
    tape.clear();

    ae.freeze();
    const double acc = ae.reconstruction_accuracy();
    MSAT_REQUIRE(acc == 1.0,
                 "train_autoencoder: only ", acc * 100.0, "% of ", num_classes,
                 " labels reconstruct after ", epochs,
                 " epochs; raise the epoch budget or change the seed");
    return ae;
}

void save_semantic_encoder(const SemanticAutoencoder& autoencoder, const std::string& path) {
    auto& self = const_cast<SemanticAutoencoder&>(autoencoder);
    save_tensor_sequence(path, named_values(self.parameters()));
    const nlohmann::json sidecar = {{"num_classes", autoencoder.num_classes()},
                                    {"code_dim", autoencoder.code_dim()},
                                    {"frozen", autoencoder.frozen()}};
    const std::string sidecar_path = path + ".json";
    std::ofstream out(sidecar_path);
    MSAT_REQUIRE(out.good(), sidecar_path, ": cannot open for writing");
    out << sidecar.dump(2) << "\n";
    MSAT_REQUIRE(out.good(), sidecar_path, ": write failed");
}

SemanticAutoencoder load_semantic_encoder(const std::string& path) {
    const std::string sidecar_path = path + ".json";
    std::ifstream in(sidecar_path);
    MSAT_REQUIRE(in.good(), sidecar_path, ": cannot open");
    nlohmann::json sidecar;
    try {
        in >> sidecar;
    } catch (const nlohmann::json::exception& e) {
        detail::fail(sidecar_path, ": invalid sidecar JSON: ", e.what());
    }

    std::mt19937 rng(0);
    SemanticAutoencoder ae(sidecar.at("num_classes").get<int>(),
                           sidecar.at("code_dim").get<int>(), rng);
    assign_named_values(load_tensor_sequence(path), ae.parameters());
    if (sidecar.at("frozen").get<bool>()) {
        ae.freeze();
        const double acc = ae.reconstruction_accuracy();
        MSAT_REQUIRE(acc == 1.0, path, ": frozen encoder reconstructs only ", acc * 100.0,
                     "% of its labels");
    }
    return ae;
}

}  // namespace msat

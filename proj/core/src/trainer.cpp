#include "msat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "msat/serialize.hpp"

namespace msat {

namespace fs = std::filesystem;
using nlohmann::json;

ParamRefs TrainState::all_params() {
    MSAT_REQUIRE(net && classifier && discriminator, "train state not initialized");
    ParamRefs params = net->parameters();
    for (Parameter* p : classifier->parameters()) params.push_back(p);
    for (Parameter* p : discriminator->parameters()) params.push_back(p);
    return params;
}

namespace {

Tensor steps_tensor(int64_t steps) { return Tensor::scalar(static_cast<float>(steps)); }

std::string float_csv(float v) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<float>::max_digits10) << v;
    return os.str();
}

TrainState build_state(const TrainConfig& cfg, int num_classes, int input_h, int input_w) {
    TrainState state;
    state.cfg = cfg;
    state.num_classes = num_classes;
    state.input_height = input_h;
    state.input_width = input_w;
    std::mt19937 net_rng(static_cast<std::mt19937::result_type>(hash_mix(cfg.seed, 0x6e6574)));
    std::mt19937 cls_rng(static_cast<std::mt19937::result_type>(hash_mix(cfg.seed, 0xc1a55)));
    std::mt19937 disc_rng(static_cast<std::mt19937::result_type>(hash_mix(cfg.seed, 0xd15c)));
    state.net = std::make_unique<Network>(cfg.network_config(3, input_h, input_w), net_rng);
    state.classifier = std::make_unique<Classifier>(cfg.embed_dim, num_classes, cls_rng);
    state.discriminator = std::make_unique<Discriminator>(cfg.embed_dim, disc_rng);
    return state;
}

}  // namespace

void save_checkpoint(TrainState& state, const std::string& path) {
    std::vector<NamedTensor> records;
    for (Parameter* p : state.all_params()) {
        records.push_back({p->name, p->value});
        if (!p->momentum.empty())
            records.push_back({"opt." + p->name + ".momentum",
                               Tensor::from_data(p->value.shape(), p->momentum)});
        if (!p->adam_m.empty()) {
            records.push_back({"opt." + p->name + ".adam_m",
                               Tensor::from_data(p->value.shape(), p->adam_m)});
            records.push_back({"opt." + p->name + ".adam_v",
                               Tensor::from_data(p->value.shape(), p->adam_v)});
        }
        records.push_back({"opt." + p->name + ".steps", steps_tensor(p->steps)});
    }
    save_tensor_sequence(path, records);

    const json sidecar = {{"config_text", config_to_text(state.cfg)},
                          {"num_classes", state.num_classes},
                          {"input_height", state.input_height},
                          {"input_width", state.input_width},
                          {"epoch", state.epoch},
                          {"global_step", state.global_step}};
    const std::string sidecar_path = path + ".json";
    std::ofstream out(sidecar_path);
    MSAT_REQUIRE(out.good(), sidecar_path, ": cannot open for writing");
    out << sidecar.dump(2) << "\n";
    MSAT_REQUIRE(out.good(), sidecar_path, ": write failed");
}

TrainState load_checkpoint(const std::string& path) {
    const std::string sidecar_path = path + ".json";
    std::ifstream in(sidecar_path);
    MSAT_REQUIRE(in.good(), sidecar_path, ": cannot open");
    json sidecar;
    try {
        in >> sidecar;
    } catch (const json::exception& e) {
        detail::fail(sidecar_path, ": invalid sidecar JSON: ", e.what());
    }

    TrainState state = build_state(parse_config_text(sidecar.at("config_text")),
                                   sidecar.at("num_classes").get<int>(),
                                   sidecar.at("input_height").get<int>(),
                                   sidecar.at("input_width").get<int>());
    state.epoch = sidecar.at("epoch").get<int>();
    state.global_step = sidecar.at("global_step").get<int64_t>();

    const auto records = load_tensor_sequence(path);
    assign_named_values(records, state.all_params());
    for (Parameter* p : state.all_params()) {
        for (const auto& nt : records) {
            if (nt.name == "opt." + p->name + ".momentum") {
                p->momentum = nt.tensor.data();
            } else if (nt.name == "opt." + p->name + ".adam_m") {
                p->adam_m = nt.tensor.data();
            } else if (nt.name == "opt." + p->name + ".adam_v") {
                p->adam_v = nt.tensor.data();
            } else if (nt.name == "opt." + p->name + ".steps") {
                p->steps = static_cast<int64_t>(nt.tensor.item());
            }
        }
    }
    return state;
}

TrainResult train_stream(const DatasetManifest& manifest, const TrainConfig& cfg,
                         const std::string& out_checkpoint, const std::string& resume_from) {
    MSAT_REQUIRE(!cfg.encoder_path.empty(), "train: config must name a frozen encoder");
    const SemanticAutoencoder encoder = load_semantic_encoder(cfg.encoder_path);
    MSAT_REQUIRE(encoder.frozen(), "train: encoder at ", cfg.encoder_path, " is not frozen");
    MSAT_REQUIRE(encoder.num_classes() == manifest.num_classes,
                 "train: encoder has ", encoder.num_classes(), " classes but manifest has ",
                 manifest.num_classes);
    MSAT_REQUIRE(encoder.code_dim() == cfg.embed_dim, "train: encoder code_dim ",
                 encoder.code_dim(), " does not match embed_dim ", cfg.embed_dim);

    const ClipStore store = ClipStore::load(manifest);
    MSAT_REQUIRE(!store.clips.empty(), "train: empty dataset");
    const int input_h = store.clips[0].height(), input_w = store.clips[0].width();

    TrainState state;
    if (resume_from.empty()) {
        state = build_state(cfg, manifest.num_classes, input_h, input_w);
    } else {
        state = load_checkpoint(resume_from);
        MSAT_REQUIRE(state.cfg == cfg,
                     "train: resume checkpoint config does not match the requested config");
        MSAT_REQUIRE(state.num_classes == manifest.num_classes &&
                         state.input_height == input_h && state.input_width == input_w,
                     "train: resume checkpoint does not match the dataset");
    }

    SalContext ctx;
    ctx.generator = state.net.get();
    ctx.classifier = state.classifier.get();
    ctx.discriminator = state.discriminator.get();
    ctx.encoder = &encoder;
    ctx.momentum = cfg.momentum;
    ctx.grad_clip = cfg.grad_clip;
    ctx.lr_discriminator = cfg.adam_lr_d;
    ctx.lambda_adv = cfg.lambda_adv;
    ctx.eps_clamp = cfg.eps_clamp;

    TrainResult result;
    result.checkpoint_path = out_checkpoint;
    result.loss_log_path = out_checkpoint + ".loss_log.csv";

    const SegmentSampler sampler{cfg.num_segments, SampleMode::train};
    for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
        ctx.lr_generator = cfg.lr_at_epoch(epoch);
        // Per-epoch seeding keeps resumed runs on the exact trajectory of a
        // straight-through run.
        std::mt19937 rng(static_cast<std::mt19937::result_type>(
            hash_mix(cfg.seed, 0xe70c, static_cast<uint64_t>(epoch))));
        std::vector<size_t> order(store.clips.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);

        for (size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const size_t end = std::min(order.size(), begin + cfg.batch_size);
            std::vector<const VideoClip*> clips;
            clips.reserve(end - begin);
            for (size_t i = begin; i < end; ++i) clips.push_back(&store.clips[order[i]]);

            const SnippetBatch batch = make_batch(clips, sampler, cfg.stream, &rng);
            const LossReport report = sal_step(batch, ctx);
            result.log.push_back({state.global_step++, epoch, report.cls, report.adv_d,
                                  report.adv_g, report.total});
        }
        state.epoch = epoch + 1;
        save_checkpoint(state, out_checkpoint);
    }
    write_loss_log_csv(result.log, result.loss_log_path);
    return result;
}

std::vector<std::vector<float>> predict_probabilities(TrainState& state, const ClipStore& store) {
    MSAT_REQUIRE(state.net && state.classifier, "predict: state not initialized");
    NoGradGuard guard;
    const SegmentSampler sampler{state.cfg.num_segments, SampleMode::test};
    std::vector<std::vector<float>> probs;
    probs.reserve(store.clips.size());

    constexpr size_t kEvalBatch = 32;
    for (size_t begin = 0; begin < store.clips.size(); begin += kEvalBatch) {
        const size_t end = std::min(store.clips.size(), begin + kEvalBatch);
        std::vector<const VideoClip*> clips;
        for (size_t i = begin; i < end; ++i) clips.push_back(&store.clips[i]);
        const SnippetBatch batch = make_batch(clips, sampler, state.cfg.stream, nullptr);
        const Tensor fused = state.net->forward(batch.data, batch.num_segments);
        const Tensor p = softmax(state.classifier->forward(fused), 1);
        const int k = p.dim(1);
        for (size_t i = 0; i < clips.size(); ++i) {
            const float* row = p.data().data() + i * static_cast<size_t>(k);
            probs.emplace_back(row, row + k);
        }
    }
    return probs;
}

namespace {

Metrics score_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                          int num_classes) {
    Metrics m;
    m.total_clips = static_cast<int64_t>(truth.size());
    m.confusion.assign(static_cast<size_t>(num_classes),
                       std::vector<int64_t>(static_cast<size_t>(num_classes), 0));
    for (size_t i = 0; i < truth.size(); ++i)
        ++m.confusion[static_cast<size_t>(truth[i])][static_cast<size_t>(predicted[i])];

    int64_t trace = 0;
    m.per_class.assign(static_cast<size_t>(num_classes), 0.0);
    for (int k = 0; k < num_classes; ++k) {
        int64_t row = 0;
        for (int j = 0; j < num_classes; ++j) row += m.confusion[k][j];
        trace += m.confusion[k][k];
        m.per_class[static_cast<size_t>(k)] =
            row == 0 ? 0.0 : static_cast<double>(m.confusion[k][k]) / static_cast<double>(row);
    }
    m.top1 = m.total_clips == 0 ? 0.0 : static_cast<double>(trace) / static_cast<double>(m.total_clips);
    return m;
}

}  // namespace

Metrics evaluate(TrainState& state, const DatasetManifest& manifest) {
    MSAT_REQUIRE(state.num_classes == manifest.num_classes, "evaluate: checkpoint has ",
                 state.num_classes, " classes but manifest has ", manifest.num_classes);
    const ClipStore store = ClipStore::load(manifest);
    const auto probs = predict_probabilities(state, store);

    std::vector<int> truth, predicted;
    for (size_t i = 0; i < store.clips.size(); ++i) {
        truth.push_back(store.clips[i].label);
        predicted.push_back(static_cast<int>(argmax(probs[i])));
    }
    return score_predictions(truth, predicted, manifest.num_classes);
}

Metrics evaluate_checkpoint(const std::string& checkpoint_path,
                            const DatasetManifest& manifest) {
    TrainState state = load_checkpoint(checkpoint_path);
    return evaluate(state, manifest);
}

Metrics fuse_streams(TrainState& spatial_state, TrainState& temporal_state,
                     const DatasetManifest& manifest, float weight_spatial,
                     float weight_temporal) {
    MSAT_REQUIRE(spatial_state.num_classes == temporal_state.num_classes,
                 "fuse: class count mismatch between streams");
    MSAT_REQUIRE(spatial_state.num_classes == manifest.num_classes,
                 "fuse: checkpoints have ", spatial_state.num_classes,
                 " classes but manifest has ", manifest.num_classes);
    MSAT_REQUIRE(weight_spatial >= 0.0f && weight_temporal >= 0.0f &&
                     weight_spatial + weight_temporal > 0.0f,
                 "fuse: weights must be non-negative and not both zero");

    const ClipStore store = ClipStore::load(manifest);
    const auto ps = predict_probabilities(spatial_state, store);
    const auto pt = predict_probabilities(temporal_state, store);

    std::vector<int> truth, predicted;
    for (size_t i = 0; i < store.clips.size(); ++i) {
        std::vector<float> combined(ps[i].size());
        for (size_t k = 0; k < combined.size(); ++k)
            combined[k] = weight_spatial * ps[i][k] + weight_temporal * pt[i][k];
        truth.push_back(store.clips[i].label);
        predicted.push_back(static_cast<int>(argmax(combined)));
    }
    return score_predictions(truth, predicted, manifest.num_classes);
}

void write_loss_log_csv(const std::vector<LossLogRow>& rows, const std::string& path) {
    std::ofstream out(path);
    MSAT_REQUIRE(out.good(), path, ": cannot open for writing");
    out << "step,epoch,L_cls,L_adv_d,L_adv_g,L_total\n";
    for (const auto& r : rows)
        out << r.step << "," << r.epoch << "," << float_csv(r.cls) << "," << float_csv(r.adv_d)
            << "," << float_csv(r.adv_g) << "," << float_csv(r.total) << "\n";
    MSAT_REQUIRE(out.good(), path, ": write failed");
}

void emit_reports(const Metrics& metrics, const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    MSAT_REQUIRE(!ec && fs::is_directory(out_dir), out_dir, ": cannot create output directory");
    const int k = static_cast<int>(metrics.confusion.size());

    {
        std::ofstream out(fs::path(out_dir) / "confusion.csv");
        MSAT_REQUIRE(out.good(), out_dir, "/confusion.csv: cannot open for writing");
        for (int j = 0; j < k; ++j) out << (j ? "," : "") << j;
        out << "\n";
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) out << (j ? "," : "") << metrics.confusion[i][j];
            out << "\n";
        }
    }
    {
        json per_class = json::array();
        for (double a : metrics.per_class) per_class.push_back(a);
        const json doc = {{"top1", metrics.top1},
                          {"per_class", per_class},
                          {"num_classes", k},
                          {"num_clips", metrics.total_clips}};
        std::ofstream out(fs::path(out_dir) / "metrics.json");
        MSAT_REQUIRE(out.good(), out_dir, "/metrics.json: cannot open for writing");
        out << doc.dump(2) << "\n";
    }
    {
        // One pixel per matrix cell, rows normalized to their clip counts.
        std::ofstream out(fs::path(out_dir) / "confusion.ppm", std::ios::binary);
        MSAT_REQUIRE(out.good(), out_dir, "/confusion.ppm: cannot open for writing");
        out << "P6\n" << k << " " << k << "\n255\n";
        for (int i = 0; i < k; ++i) {
            int64_t row = 0;
            for (int j = 0; j < k; ++j) row += metrics.confusion[i][j];
            for (int j = 0; j < k; ++j) {
                const double frac = row == 0 ? 0.0
                                             : static_cast<double>(metrics.confusion[i][j]) /
                                                   static_cast<double>(row);
                const unsigned char v = static_cast<unsigned char>(std::lround(255.0 * frac));
                const unsigned char px[3] = {v, v, v};
                out.write(reinterpret_cast<const char*>(px), 3);
            }
        }
    }
    if (!metrics.loss_curves.empty())
        write_loss_log_csv(metrics.loss_curves, (fs::path(out_dir) / "loss_log.csv").string());
}

std::vector<std::vector<int64_t>> read_confusion_csv(const std::string& path) {
    std::ifstream in(path);
    MSAT_REQUIRE(in.good(), path, ": cannot open");
    std::string line;
    MSAT_REQUIRE(static_cast<bool>(std::getline(in, line)), path, ": missing header");
    std::vector<std::vector<int64_t>> matrix;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<int64_t> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stoll(cell));
        matrix.push_back(std::move(row));
    }
    return matrix;
}

}  // namespace msat

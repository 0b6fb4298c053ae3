#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "msat/gradcheck.hpp"
#include "msat/semantic_encoder.hpp"
#include "msat/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::pair<int, int> parse_size(const std::string& size) {
    const auto x = size.find('x');
    if (x == std::string::npos)
        throw CLI::ValidationError("--size", "expected HxW, got '" + size + "'");
    return {std::stoi(size.substr(0, x)), std::stoi(size.substr(x + 1))};
}

std::pair<float, float> parse_weights(const std::string& weights) {
    const auto c = weights.find(',');
    if (c == std::string::npos)
        throw CLI::ValidationError("--weights", "expected ws,wt, got '" + weights + "'");
    return {std::stof(weights.substr(0, c)), std::stof(weights.substr(c + 1))};
}

msat::DatasetManifest load_split(const std::string& data_dir, const std::string& split) {
    return msat::load_manifest((fs::path(data_dir) / msat::manifest_filename(split)).string());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stream video classifier with pyramid attention and semantic "
                 "adversarial training"};
    app.require_subcommand(1);

    // gen-data
    std::string gd_out, gd_task = "joint";
    int gd_classes = 8, gd_clips = 50, gd_frames = 16, gd_test_clips = -1;
    std::string gd_size = "32x32";
    uint64_t gd_seed = 0;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic moving-shape dataset");
    gen->add_option("--out", gd_out, "Output directory")->required();
    gen->add_option("--task", gd_task, "spatial|temporal-only|joint")->required();
    gen->add_option("--classes", gd_classes, "Number of classes")->required();
    gen->add_option("--clips-per-class", gd_clips, "Training clips per class")->required();
    gen->add_option("--frames", gd_frames, "Frames per clip");
    gen->add_option("--size", gd_size, "Frame size HxW");
    gen->add_option("--seed", gd_seed, "RNG seed");
    gen->add_option("--test-clips-per-class", gd_test_clips,
                    "Held-out clips per class (default max(5, N/5))");

    // train-encoder
    int te_classes = 8, te_code_dim = 64, te_epochs = 2000;
    float te_lr = 0.01f;
    uint64_t te_seed = 0;
    std::string te_out;
    auto* tenc = app.add_subcommand("train-encoder", "Train and freeze the semantic encoder");
    tenc->add_option("--classes", te_classes)->required();
    tenc->add_option("--code-dim", te_code_dim);
    tenc->add_option("--epochs", te_epochs);
    tenc->add_option("--lr", te_lr);
    tenc->add_option("--seed", te_seed);
    tenc->add_option("--out", te_out, "Checkpoint path")->required();

    // train
    std::string tr_stream, tr_data, tr_encoder, tr_config, tr_out, tr_resume;
    auto* train = app.add_subcommand("train", "Train one stream");
    train->add_option("--stream", tr_stream, "spatial|temporal")->required();
    train->add_option("--data", tr_data, "Dataset directory")->required();
    train->add_option("--encoder", tr_encoder, "Frozen encoder checkpoint");
    train->add_option("--config", tr_config, "key=value config file")->required();
    train->add_option("--out", tr_out, "Output checkpoint path")->required();
    train->add_option("--resume", tr_resume, "Checkpoint to resume from");

    // eval
    std::string ev_ckpt, ev_data, ev_out, ev_split = "test";
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--ckpt", ev_ckpt)->required();
    eval_cmd->add_option("--data", ev_data)->required();
    eval_cmd->add_option("--out", ev_out, "Report directory")->required();
    eval_cmd->add_option("--split", ev_split, "Manifest split to evaluate");

    // fuse
    std::string fu_spatial, fu_temporal, fu_data, fu_out, fu_weights = "1,1", fu_split = "test";
    auto* fuse = app.add_subcommand("fuse", "Fuse spatial and temporal stream scores");
    fuse->add_option("--spatial", fu_spatial)->required();
    fuse->add_option("--temporal", fu_temporal)->required();
    fuse->add_option("--data", fu_data)->required();
    fuse->add_option("--weights", fu_weights, "ws,wt");
    fuse->add_option("--out", fu_out, "Report directory")->required();
    fuse->add_option("--split", fu_split, "Manifest split to evaluate");

    // gradcheck
    uint64_t gc_seed = 0;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    gradcheck->add_option("--seed", gc_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            msat::DatasetSpec spec;
            spec.task = msat::task_from_name(gd_task);
            spec.num_classes = gd_classes;
            spec.clips_per_class = gd_clips;
            spec.frames = gd_frames;
            std::tie(spec.height, spec.width) = parse_size(gd_size);
            spec.seed = gd_seed;
            spec.split = "train";
            msat::generate_synthetic_dataset(gd_out, spec);
            spec.split = "test";
            spec.clips_per_class = gd_test_clips > 0 ? gd_test_clips
                                                     : std::max(5, gd_clips / 5);
            msat::generate_synthetic_dataset(gd_out, spec);
            std::cout << "wrote " << gd_out << "/" << msat::manifest_filename("train")
                      << " and " << msat::manifest_filename("test") << "\n";
        } else if (tenc->parsed()) {
            const auto encoder =
                msat::train_autoencoder(te_classes, te_code_dim, te_epochs, te_lr, te_seed);
            msat::save_semantic_encoder(encoder, te_out);
            std::cout << "encoder frozen at 100% label reconstruction -> " << te_out << "\n";
        } else if (train->parsed()) {
            msat::TrainConfig cfg = msat::parse_config_file(tr_config);
            cfg.stream = msat::stream_from_name(tr_stream);
            if (!tr_encoder.empty()) cfg.encoder_path = tr_encoder;
            const auto manifest = load_split(tr_data, "train");
            const auto result = msat::train_stream(manifest, cfg, tr_out, tr_resume);
            std::cout << "trained " << cfg.epochs << " epochs, " << result.log.size()
                      << " steps -> " << result.checkpoint_path << "\n";
        } else if (eval_cmd->parsed()) {
            const auto manifest = load_split(ev_data, ev_split);
            const auto metrics = msat::evaluate_checkpoint(ev_ckpt, manifest);
            msat::emit_reports(metrics, ev_out);
            std::cout << "top-1 accuracy " << metrics.top1 << " over " << metrics.total_clips
                      << " clips -> " << ev_out << "\n";
        } else if (fuse->parsed()) {
            const auto manifest = load_split(fu_data, fu_split);
            auto spatial_state = msat::load_checkpoint(fu_spatial);
            auto temporal_state = msat::load_checkpoint(fu_temporal);
            const auto [ws, wt] = parse_weights(fu_weights);
            const auto metrics =
                msat::fuse_streams(spatial_state, temporal_state, manifest, ws, wt);
            msat::emit_reports(metrics, fu_out);
            std::cout << "fused top-1 accuracy " << metrics.top1 << " over "
                      << metrics.total_clips << " clips -> " << fu_out << "\n";
        } else if (gradcheck->parsed()) {
            const auto reports = msat::gradcheck_suite(gc_seed, &std::cout);
            if (!msat::gradcheck_all_passed(reports)) {
                std::cerr << "gradient check FAILED\n";
                return 1;
            }
            std::cout << "all " << reports.size() << " op families passed\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

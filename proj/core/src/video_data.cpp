#include "msat/video_data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "msat/serialize.hpp"

namespace msat {

namespace fs = std::filesystem;
using nlohmann::json;

const char* stream_name(Stream s) { return s == Stream::spatial ? "spatial" : "temporal"; }

Stream stream_from_name(const std::string& name) {
    if (name == "spatial") return Stream::spatial;
    if (name == "temporal") return Stream::temporal;
    detail::fail("unknown stream '", name, "' (expected spatial|temporal)");
}

TaskKind task_from_name(const std::string& name) {
    if (name == "spatial" || name == "spatial-only") return TaskKind::spatial_only;
    if (name == "temporal-only") return TaskKind::temporal_only;
    if (name == "joint") return TaskKind::joint;
    detail::fail("unknown task '", name, "' (expected spatial|temporal-only|joint)");
}

namespace {

void check_clip(const VideoClip& clip) {
    MSAT_REQUIRE(clip.frames.defined() && clip.frames.rank() == 4,
                 "clip '", clip.clip_id, "': frames must be [T,3,H,W]");
    MSAT_REQUIRE(clip.frames.dim(1) == 3, "clip '", clip.clip_id, "': expected 3 channels");
    MSAT_REQUIRE(clip.frames.dim(0) >= 2, "clip '", clip.clip_id,
                 "': needs at least 2 frames, got ", clip.frames.dim(0));
}

// Near-equal contiguous partition boundaries of [0, len) into n segments.
int segment_start(int i, int len, int n) {
    return static_cast<int>((static_cast<int64_t>(i) * len) / n);
}

}  // namespace

std::vector<int> sample_segments(const VideoClip& clip, const SegmentSampler& sampler,
                                 Stream stream, std::mt19937* rng) {
    check_clip(clip);
    MSAT_REQUIRE(sampler.num_segments >= 1, "sampler: num_segments must be positive");
    const int len = stream == Stream::spatial ? clip.num_frames() : clip.num_frames() - 1;
    MSAT_REQUIRE(len >= sampler.num_segments, "clip '", clip.clip_id, "': ", len,
                 " candidate indices cannot fill ", sampler.num_segments, " segments");
    MSAT_REQUIRE(sampler.mode == SampleMode::test || rng != nullptr,
                 "train-mode sampling needs an RNG");

    std::vector<int> indices(sampler.num_segments);
    for (int i = 0; i < sampler.num_segments; ++i) {
        const int start = segment_start(i, len, sampler.num_segments);
        const int end = segment_start(i + 1, len, sampler.num_segments) - 1;
        if (sampler.mode == SampleMode::test) {
            indices[i] = start + (end - start + 1) / 2;  // ties to the upper index
        } else {
            std::uniform_int_distribution<int> pick(start, end);
            indices[i] = pick(*rng);
        }
    }
    return indices;
}

Tensor compute_diff(const VideoClip& clip, int index) {
    check_clip(clip);
    const int t = clip.num_frames();
    MSAT_REQUIRE(index >= 0 && index <= t - 2, "compute_diff: index ", index,
                 " out of range [0,", t - 2, "]");
    const int64_t frame_size = static_cast<int64_t>(3) * clip.height() * clip.width();
    const float* cur = clip.frames.data().data() + index * frame_size;
    const float* next = cur + frame_size;
    std::vector<float> out(static_cast<size_t>(frame_size));
    for (int64_t i = 0; i < frame_size; ++i) out[static_cast<size_t>(i)] = next[i] - cur[i];
    return Tensor::from_data({3, clip.height(), clip.width()}, std::move(out));
}

Tensor normalize_frames(const Tensor& raw, Stream stream) {
    std::vector<float> out(raw.data());
    if (stream == Stream::spatial) {
        for (auto& v : out) {
            MSAT_REQUIRE(v >= 0.0f && v <= 1.0f,
                         "normalize: spatial value ", v, " outside [0,1]");
            v = 2.0f * v - 1.0f;
        }
    } else {
        for (float v : out)
            MSAT_REQUIRE(v >= -1.0f && v <= 1.0f,
                         "normalize: temporal value ", v, " outside [-1,1]");
    }
    return Tensor::from_data(raw.shape(), std::move(out));
}

SnippetBatch make_batch(const std::vector<const VideoClip*>& clips,
                        const SegmentSampler& sampler, Stream stream, std::mt19937* rng) {
    MSAT_REQUIRE(!clips.empty(), "make_batch: empty clip list");
    const int h = clips[0]->height(), w = clips[0]->width();
    const int n = sampler.num_segments;
    const int64_t frame_size = static_cast<int64_t>(3) * h * w;

    std::vector<float> raw;
    raw.reserve(static_cast<size_t>(clips.size()) * n * frame_size);
    std::vector<int> labels;
    for (const VideoClip* clip : clips) {
        MSAT_REQUIRE(clip->height() == h && clip->width() == w,
                     "make_batch: clip '", clip->clip_id, "' extent mismatch");
        labels.push_back(clip->label);
        const auto indices = sample_segments(*clip, sampler, stream, rng);
        for (int idx : indices) {
            if (stream == Stream::spatial) {
                const float* f = clip->frames.data().data() + idx * frame_size;
                raw.insert(raw.end(), f, f + frame_size);
            } else {
                const Tensor diff = compute_diff(*clip, idx);
                raw.insert(raw.end(), diff.data().begin(), diff.data().end());
            }
        }
    }
    const Shape shape{static_cast<int>(clips.size()) * n, 3, h, w};
    SnippetBatch batch;
    batch.data = normalize_frames(Tensor::from_data(shape, std::move(raw)), stream);
    batch.labels = std::move(labels);
    batch.stream = stream;
    batch.num_segments = n;
    return batch;
}

std::string manifest_filename(const std::string& split) { return split + "_manifest.json"; }

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    json entries = json::array();
    for (const auto& e : manifest.entries) {
        entries.push_back({{"clip_id", e.clip_id},
                           {"path", e.path},
                           {"label", e.label},
                           {"T", e.frames},
                           {"H", e.height},
                           {"W", e.width}});
    }
    const json doc = {{"num_classes", manifest.num_classes},
                      {"split", manifest.split},
                      {"entries", entries}};
    std::ofstream out(path);
    MSAT_REQUIRE(out.good(), path, ": cannot open for writing");
    out << doc.dump(2) << "\n";
    MSAT_REQUIRE(out.good(), path, ": write failed");
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    MSAT_REQUIRE(in.good(), path, ": cannot open");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        detail::fail(path, ": invalid manifest JSON: ", e.what());
    }

    DatasetManifest m;
    m.root = fs::path(path).parent_path().string();
    if (m.root.empty()) m.root = ".";
    m.num_classes = doc.at("num_classes").get<int>();
    m.split = doc.at("split").get<std::string>();
    MSAT_REQUIRE(m.num_classes >= 1, path, ": num_classes must be positive");

    std::vector<int64_t> histogram(static_cast<size_t>(m.num_classes), 0);
    for (const auto& je : doc.at("entries")) {
        ManifestEntry e;
        e.clip_id = je.at("clip_id").get<std::string>();
        e.path = je.at("path").get<std::string>();
        e.label = je.at("label").get<int>();
        e.frames = je.at("T").get<int>();
        e.height = je.at("H").get<int>();
        e.width = je.at("W").get<int>();
        MSAT_REQUIRE(e.label >= 0 && e.label < m.num_classes, path, ": entry '", e.clip_id,
                     "' label ", e.label, " outside [0,", m.num_classes, ")");
        ++histogram[static_cast<size_t>(e.label)];

        const std::string file = (fs::path(m.root) / e.path).string();
        const Shape header = read_tensor_header(file);
        const Shape expected{e.frames, 3, e.height, e.width};
        MSAT_REQUIRE(header == expected, file, ": header shape ", shape_str(header),
                     " does not match manifest entry ", shape_str(expected));
        m.entries.push_back(std::move(e));
    }
    if (m.split == "train") {
        for (int k = 0; k < m.num_classes; ++k)
            MSAT_REQUIRE(histogram[static_cast<size_t>(k)] > 0, path,
                         ": train split has no clip of class ", k);
    }
    return m;
}

void save_clip(const VideoClip& clip, const std::string& path) {
    check_clip(clip);
    for (float v : clip.frames.data())
        MSAT_REQUIRE(v >= 0.0f && v <= 1.0f, "clip '", clip.clip_id, "': pixel value ", v,
                     " outside [0,1]");
    save_tensor_file(path, clip.frames);
}

VideoClip load_clip(const DatasetManifest& manifest, size_t entry_index) {
    MSAT_REQUIRE(entry_index < manifest.entries.size(), "load_clip: entry index ",
                 entry_index, " out of range");
    const ManifestEntry& e = manifest.entries[entry_index];
    const std::string file = (fs::path(manifest.root) / e.path).string();
    VideoClip clip;
    clip.clip_id = e.clip_id;
    clip.label = e.label;
    clip.frames = load_tensor_file(file);
    const Shape expected{e.frames, 3, e.height, e.width};
    MSAT_REQUIRE(clip.frames.shape() == expected, file, ": tensor shape ",
                 shape_str(clip.frames.shape()), " does not match manifest entry ",
                 shape_str(expected));
    for (float v : clip.frames.data())
        MSAT_REQUIRE(v >= 0.0f && v <= 1.0f, file, ": pixel value ", v, " outside [0,1]");
    return clip;
}

void joint_task_factors(int num_classes, int* colors, int* directions) {
    if (num_classes % 4 == 0 && num_classes / 4 >= 2) {
        *directions = 4;
    } else if (num_classes % 2 == 0 && num_classes / 2 >= 2) {
        *directions = 2;
    } else {
        detail::fail("joint task needs K = colors x directions with at least 2 of each; got K=",
                     num_classes);
    }
    *colors = num_classes / *directions;
}

namespace {

struct Rgb {
    float r, g, b;
};

Rgb hsv_to_rgb(float h, float s, float v) {
    const float c = v * s;
    const float hp = h * 6.0f;
    const float x = c * (1.0f - std::abs(std::fmod(hp, 2.0f) - 1.0f));
    float r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const float m = v - c;
    return {r + m, g + m, b + m};
}

std::vector<Rgb> make_palette(int n) {
    std::vector<Rgb> palette;
    for (int i = 0; i < n; ++i)
        palette.push_back(hsv_to_rgb(static_cast<float>(i) / static_cast<float>(n), 0.9f, 1.0f));
    return palette;
}

// Coverage-weighted (antialiased) blend of an axis-aligned square at a
// subpixel position onto a static background, with toroidal wrap.
void render_square(std::vector<float>& frame, int h, int w, float y0, float x0, float side,
                   const Rgb& color) {
    const int y_lo = static_cast<int>(std::floor(y0));
    const int x_lo = static_cast<int>(std::floor(x0));
    const int span = static_cast<int>(std::ceil(side)) + 1;
    for (int yi = y_lo; yi < y_lo + span; ++yi) {
        const float cov_y = std::max(0.0f, std::min(static_cast<float>(yi) + 1.0f, y0 + side) -
                                               std::max(static_cast<float>(yi), y0));
        if (cov_y <= 0.0f) continue;
        const int y = ((yi % h) + h) % h;
        for (int xi = x_lo; xi < x_lo + span; ++xi) {
            const float cov_x = std::max(0.0f, std::min(static_cast<float>(xi) + 1.0f, x0 + side) -
                                                   std::max(static_cast<float>(xi), x0));
            if (cov_x <= 0.0f) continue;
            const int x = ((xi % w) + w) % w;
            const float cov = cov_y * cov_x;
            const int64_t plane = static_cast<int64_t>(h) * w;
            const int64_t at = static_cast<int64_t>(y) * w + x;
            float* r = frame.data() + at;
            const float rgb[3] = {color.r, color.g, color.b};
            for (int ch = 0; ch < 3; ++ch)
                r[ch * plane] += cov * (rgb[ch] - r[ch * plane]);
        }
    }
}

std::string pad_int(int v, int width) {
    std::ostringstream os;
    os << std::setw(width) << std::setfill('0') << v;
    return os.str();
}

}  // namespace

DatasetManifest generate_synthetic_dataset(const std::string& root_dir,
                                           const DatasetSpec& spec) {
    MSAT_REQUIRE(spec.num_classes >= 2, "generate: need at least 2 classes");
    MSAT_REQUIRE(spec.clips_per_class >= 1, "generate: need at least 1 clip per class");
    MSAT_REQUIRE(spec.frames >= 2, "generate: need at least 2 frames per clip");
    MSAT_REQUIRE(spec.height >= 8 && spec.width >= 8, "generate: frames too small");

    int colors = 0, directions = 0;
    switch (spec.task) {
        case TaskKind::spatial_only:
            colors = spec.num_classes;
            directions = 0;  // direction drawn at random per clip
            break;
        case TaskKind::temporal_only:
            MSAT_REQUIRE(spec.num_classes == 2 || spec.num_classes == 4,
                         "temporal-only task supports K in {2,4} motion directions, got K=",
                         spec.num_classes);
            colors = 4;  // class-independent color pool
            directions = spec.num_classes;
            break;
        case TaskKind::joint:
            joint_task_factors(spec.num_classes, &colors, &directions);
            break;
    }
    const auto palette = make_palette(colors);

    fs::create_directories(fs::path(root_dir) / "clips");
    DatasetManifest manifest;
    manifest.root = root_dir;
    manifest.num_classes = spec.num_classes;
    manifest.split = spec.split;

    const float side = std::max(4.0f, std::round(0.3f * static_cast<float>(
                                                            std::min(spec.height, spec.width))));
    const float speed = 2.0f;
    const int64_t plane = static_cast<int64_t>(spec.height) * spec.width;

    for (int label = 0; label < spec.num_classes; ++label) {
        for (int k = 0; k < spec.clips_per_class; ++k) {
            std::mt19937 rng(static_cast<std::mt19937::result_type>(
                hash_mix(hash_mix(spec.seed, fnv1a(spec.split.data(), spec.split.size())),
                         (static_cast<uint64_t>(label) << 32) | static_cast<uint64_t>(k))));
            std::uniform_real_distribution<float> unit(0.0f, 1.0f);

            // Static textured background; motionless, so frame differences
            // cancel it exactly.
            std::vector<float> background(static_cast<size_t>(3) * plane);
            for (auto& v : background) v = 0.35f + 0.3f * unit(rng);

            int color_idx = 0;
            float angle = 0.0f;
            switch (spec.task) {
                case TaskKind::spatial_only:
                    color_idx = label;
                    angle = 2.0f * static_cast<float>(M_PI) * unit(rng);
                    break;
                case TaskKind::temporal_only:
                    color_idx = std::min(colors - 1, static_cast<int>(unit(rng) * colors));
                    angle = 2.0f * static_cast<float>(M_PI) * label / directions;
                    break;
                case TaskKind::joint:
                    color_idx = label / directions;
                    angle = 2.0f * static_cast<float>(M_PI) * (label % directions) / directions;
                    break;
            }
            const float vx = speed * std::cos(angle);
            const float vy = -speed * std::sin(angle);
            float px = unit(rng) * spec.width;
            float py = unit(rng) * spec.height;

            std::vector<float> frames;
            frames.reserve(static_cast<size_t>(spec.frames) * 3 * plane);
            for (int t = 0; t < spec.frames; ++t) {
                std::vector<float> frame = background;
                render_square(frame, spec.height, spec.width, py, px, side,
                              palette[static_cast<size_t>(color_idx)]);
                for (auto& v : frame) v = std::min(1.0f, std::max(0.0f, v));
                frames.insert(frames.end(), frame.begin(), frame.end());
                px = std::fmod(px + vx + spec.width, static_cast<float>(spec.width));
                py = std::fmod(py + vy + spec.height, static_cast<float>(spec.height));
            }

            VideoClip clip;
            clip.clip_id = spec.split + "_c" + pad_int(label, 3) + "_" + pad_int(k, 4);
            clip.label = label;
            clip.frames = Tensor::from_data({spec.frames, 3, spec.height, spec.width},
                                            std::move(frames));

            ManifestEntry entry;
            entry.clip_id = clip.clip_id;
            entry.path = "clips/" + clip.clip_id + ".msat";
            entry.label = label;
            entry.frames = spec.frames;
            entry.height = spec.height;
            entry.width = spec.width;
            save_clip(clip, (fs::path(root_dir) / entry.path).string());
            manifest.entries.push_back(std::move(entry));
        }
    }
    save_manifest(manifest, (fs::path(root_dir) / manifest_filename(spec.split)).string());
    return manifest;
}

ClipStore ClipStore::load(const DatasetManifest& manifest) {
    ClipStore store;
    store.num_classes = manifest.num_classes;
    store.clips.reserve(manifest.entries.size());
    for (size_t i = 0; i < manifest.entries.size(); ++i)
        store.clips.push_back(load_clip(manifest, i));
    return store;
}

}  // namespace msat

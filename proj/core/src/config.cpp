#include "msat/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace msat {

TrainConfig TrainConfig::desk_defaults(Stream stream) {
    TrainConfig cfg;
    cfg.stream = stream;
    if (stream == Stream::temporal) {
        cfg.epochs = 40;
        cfg.grad_clip = 40.0f;
    }
    return cfg;
}

TrainConfig TrainConfig::paper_scale(Stream stream) {
    TrainConfig cfg = desk_defaults(stream);
    cfg.batch_size = 64;
    cfg.epochs = stream == Stream::temporal ? 120 : 80;
    return cfg;
}

NetworkConfig TrainConfig::network_config(int in_channels, int input_h, int input_w) const {
    NetworkConfig net;
    net.stage_channels = stage_channels;
    net.embed_dim = embed_dim;
    net.mpa_bins = mpa_bins;
    net.residual_attention = residual_attention;
    net.use_mpa = use_mpa;
    net.in_channels = in_channels;
    net.input_height = input_h;
    net.input_width = input_w;
    return net;
}

float TrainConfig::lr_at_epoch(int epoch) const {
    MSAT_REQUIRE(epoch >= 0, "lr_at_epoch: negative epoch");
    const int drops = epoch / lr_decay_every;
    return lr * static_cast<float>(std::pow(static_cast<double>(lr_decay_factor), drops));
}

namespace {

std::string fmt_float(float v) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<float>::max_digits10) << v;
    return os.str();
}

std::string fmt_ints(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const int v = std::stoi(value, &pos);
        MSAT_REQUIRE(pos == value.size(), "config: bad integer for ", key, ": '", value, "'");
        return v;
    } catch (const std::logic_error&) {
        detail::fail("config: bad integer for ", key, ": '", value, "'");
    }
}

float parse_float(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const float v = std::stof(value, &pos);
        MSAT_REQUIRE(pos == value.size(), "config: bad number for ", key, ": '", value, "'");
        return v;
    } catch (const std::logic_error&) {
        detail::fail("config: bad number for ", key, ": '", value, "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const uint64_t v = std::stoull(value, &pos);
        MSAT_REQUIRE(pos == value.size(), "config: bad integer for ", key, ": '", value, "'");
        return v;
    } catch (const std::logic_error&) {
        detail::fail("config: bad integer for ", key, ": '", value, "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    detail::fail("config: bad boolean for ", key, ": '", value, "' (expected true|false)");
}

std::vector<int> parse_ints(const std::string& key, const std::string& value) {
    std::vector<int> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_int(key, item));
    MSAT_REQUIRE(!out.empty(), "config: empty list for ", key);
    return out;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::string config_to_text(const TrainConfig& cfg) {
    std::ostringstream os;
    os << "stream=" << stream_name(cfg.stream) << "\n"
       << "batch_size=" << cfg.batch_size << "\n"
       << "lr=" << fmt_float(cfg.lr) << "\n"
       << "momentum=" << fmt_float(cfg.momentum) << "\n"
       << "lr_decay_factor=" << fmt_float(cfg.lr_decay_factor) << "\n"
       << "lr_decay_every=" << cfg.lr_decay_every << "\n"
       << "epochs=" << cfg.epochs << "\n"
       << "grad_clip=" << fmt_float(cfg.grad_clip) << "\n"
       << "num_segments=" << cfg.num_segments << "\n"
       << "lambda_adv=" << fmt_float(cfg.lambda_adv) << "\n"
       << "seed=" << cfg.seed << "\n"
       << "encoder=" << cfg.encoder_path << "\n"
       << "adam_lr_d=" << fmt_float(cfg.adam_lr_d) << "\n"
       << "eps_clamp=" << fmt_float(cfg.eps_clamp) << "\n"
       << "stage_channels=" << fmt_ints(cfg.stage_channels) << "\n"
       << "embed_dim=" << cfg.embed_dim << "\n"
       << "mpa_bins=" << fmt_ints(cfg.mpa_bins) << "\n"
       << "residual_attention=" << (cfg.residual_attention ? "true" : "false") << "\n"
       << "use_mpa=" << (cfg.use_mpa ? "true" : "false") << "\n";
    return os.str();
}

TrainConfig parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        MSAT_REQUIRE(eq != std::string::npos, "config: line ", line_no,
                     " is not key=value: '", stripped, "'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        MSAT_REQUIRE(!kv.count(key), "config: duplicate key '", key, "'");
        kv[key] = value;
    }

    // Stream first: it selects the desk defaults the rest override.
    Stream stream = Stream::spatial;
    if (kv.count("stream")) stream = stream_from_name(kv["stream"]);
    TrainConfig cfg = TrainConfig::desk_defaults(stream);

    for (const auto& [key, value] : kv) {
        if (key == "stream") {
        } else if (key == "batch_size") {
            cfg.batch_size = parse_int(key, value);
        } else if (key == "lr") {
            cfg.lr = parse_float(key, value);
        } else if (key == "momentum") {
            cfg.momentum = parse_float(key, value);
        } else if (key == "lr_decay_factor") {
            cfg.lr_decay_factor = parse_float(key, value);
        } else if (key == "lr_decay_every") {
            cfg.lr_decay_every = parse_int(key, value);
        } else if (key == "epochs") {
            cfg.epochs = parse_int(key, value);
        } else if (key == "grad_clip") {
            cfg.grad_clip = parse_float(key, value);
        } else if (key == "num_segments") {
            cfg.num_segments = parse_int(key, value);
        } else if (key == "lambda_adv") {
            cfg.lambda_adv = parse_float(key, value);
        } else if (key == "seed") {
            cfg.seed = parse_u64(key, value);
        } else if (key == "encoder") {
            cfg.encoder_path = value;
        } else if (key == "adam_lr_d") {
            cfg.adam_lr_d = parse_float(key, value);
        } else if (key == "eps_clamp") {
            cfg.eps_clamp = parse_float(key, value);
        } else if (key == "stage_channels") {
            cfg.stage_channels = parse_ints(key, value);
        } else if (key == "embed_dim") {
            cfg.embed_dim = parse_int(key, value);
        } else if (key == "mpa_bins") {
            cfg.mpa_bins = parse_ints(key, value);
        } else if (key == "residual_attention") {
            cfg.residual_attention = parse_bool(key, value);
        } else if (key == "use_mpa") {
            cfg.use_mpa = parse_bool(key, value);
        } else {
            detail::fail("config: unknown key '", key, "'");
        }
    }

    MSAT_REQUIRE(cfg.batch_size >= 1, "config: batch_size must be positive");
    MSAT_REQUIRE(cfg.lr >= 0.0f, "config: lr must be non-negative");
    MSAT_REQUIRE(cfg.momentum >= 0.0f, "config: momentum must be non-negative");
    MSAT_REQUIRE(cfg.lr_decay_factor > 0.0f, "config: lr_decay_factor must be positive");
    MSAT_REQUIRE(cfg.lr_decay_every >= 1, "config: lr_decay_every must be positive");
    MSAT_REQUIRE(cfg.epochs >= 1, "config: epochs must be positive");
    MSAT_REQUIRE(cfg.grad_clip > 0.0f, "config: grad_clip must be positive");
    MSAT_REQUIRE(cfg.num_segments >= 1, "config: num_segments must be positive");
    MSAT_REQUIRE(cfg.lambda_adv >= 0.0f, "config: lambda_adv must be non-negative");
    MSAT_REQUIRE(cfg.adam_lr_d >= 0.0f, "config: adam_lr_d must be non-negative");
    MSAT_REQUIRE(cfg.eps_clamp > 0.0f && cfg.eps_clamp < 0.5f,
                 "config: eps_clamp must lie in (0, 0.5)");
    MSAT_REQUIRE(cfg.embed_dim >= 1, "config: embed_dim must be positive");
    return cfg;
}

TrainConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    MSAT_REQUIRE(in.good(), path, ": cannot open");
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_config_text(buffer.str());
    } catch (const std::runtime_error& e) {
        detail::fail(path, ": ", e.what());
    }
}

void write_config_file(const TrainConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    MSAT_REQUIRE(out.good(), path, ": cannot open for writing");
    out << config_to_text(cfg);
    MSAT_REQUIRE(out.good(), path, ": write failed");
}

}  // namespace msat

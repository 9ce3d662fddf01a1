#include "dualcam/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "dualcam/errors.hpp"

namespace dcam::config {

namespace {

struct Field {
    const char* key;  // "section.name"
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

long to_long(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long out = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("invalid integer for " + key + ": " + v);
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("invalid number for " + key + ": " + v);
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("invalid boolean for " + key + ": " + v);
}

#define INT_FIELD(key, member)                                                       \
    Field{key, [](const RunConfig& c) { return std::to_string(c.member); },          \
          [](RunConfig& c, const std::string& v) {                                   \
              c.member = static_cast<int>(to_long(key, v));                          \
          }}
#define U64_FIELD(key, member)                                                       \
    Field{key, [](const RunConfig& c) { return std::to_string(c.member); },          \
          [](RunConfig& c, const std::string& v) {                                   \
              c.member = static_cast<uint64_t>(to_long(key, v));                     \
          }}
#define DBL_FIELD(key, member)                                                       \
    Field{key, [](const RunConfig& c) { return fmt_double(c.member); },              \
          [](RunConfig& c, const std::string& v) { c.member = to_double(key, v); }}
#define STR_FIELD(key, member)                                                       \
    Field{key, [](const RunConfig& c) { return c.member; },                          \
          [](RunConfig& c, const std::string& v) { c.member = v; }}
#define BOOL_FIELD(key, member)                                                      \
    Field{key, [](const RunConfig& c) { return c.member ? "true" : "false"; },       \
          [](RunConfig& c, const std::string& v) { c.member = to_bool(key, v); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        U64_FIELD("run.seed", seed),
        STR_FIELD("dataset.root", data_root),
        INT_FIELD("dataset.clips", clips),
        INT_FIELD("dataset.frames", frames),
        INT_FIELD("dataset.width", width),
        INT_FIELD("dataset.height", height),
        STR_FIELD("dataset.holdout_root", holdout_root),
        INT_FIELD("dataset.holdout_clips", holdout_clips),
        STR_FIELD("codec.mode", codec_mode),
        INT_FIELD("codec.channels", codec_channels),
        U64_FIELD("codec.projection_seed", projection_seed),
        STR_FIELD("model.profile", profile),
        BOOL_FIELD("model.no_depth", no_depth),
        STR_FIELD("model.rgb_to_depth", rgb_to_depth),
        STR_FIELD("model.depth_to_rgb", depth_to_rgb),
        INT_FIELD("train.batch", batch),
        DBL_FIELD("train.lr", lr),
        DBL_FIELD("train.lambda", lambda),
        DBL_FIELD("train.beta1", beta1),
        DBL_FIELD("train.beta2", beta2),
        DBL_FIELD("train.adam_eps", adam_eps),
        INT_FIELD("train.stage1_steps", stage1_steps),
        INT_FIELD("train.stage2_steps", stage2_steps),
        INT_FIELD("train.checkpoint_every", checkpoint_every),
        INT_FIELD("sample.steps", sample_steps),
        BOOL_FIELD("sample.staged", staged),
        INT_FIELD("sample.base_steps", base_steps),
        INT_FIELD("sample.delta", delta),
        STR_FIELD("sample.delta_stage", delta_stage),
        STR_FIELD("sample.descriptor", descriptor),
        INT_FIELD("analyze.probe_clips", probe_clips),
        STR_FIELD("analyze.deltas", deltas),
        STR_FIELD("analyze.sweep_stages", sweep_stages),
        INT_FIELD("analyze.sweep_seeds", sweep_seeds),
        BOOL_FIELD("analyze.plots", plots),
    };
    return f;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const Field& f : fields())
        if (key == f.key) {
            f.set(cfg, value);
            return;
        }
    throw ConfigError("unknown configuration key: " + key);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (section.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": key outside a section");
        set_key(cfg, section + "." + key, value);
    }
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream out;
    std::string section;
    for (const Field& f : fields()) {
        std::string key = f.key;
        size_t dot = key.find('.');
        std::string sec = key.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out << "\n";
            out << "[" << sec << "]\n";
            section = sec;
        }
        out << key.substr(dot + 1) << " = " << f.get(cfg) << "\n";
    }
    return out.str();
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must be section.key=value: " + assignment);
    set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string resolved_config(const RunConfig& cfg) {
    std::ostringstream out;
    out << "# " << kToolVersion << "\n# seed " << cfg.seed << "\n" << serialize_config(cfg);
    return out.str();
}

}  // namespace dcam::config

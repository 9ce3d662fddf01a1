#include "dualcam/checkpoint.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>

#include "dualcam/errors.hpp"

namespace dcam::nn {

namespace fs = std::filesystem;

static void write_u32(std::ostream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
static void write_i64(std::ostream& out, int64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
static uint32_t read_u32(std::istream& in, const std::string& path) {
    uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw IoError("truncated checkpoint: " + path);
    return v;
}
static int64_t read_i64(std::istream& in, const std::string& path) {
    int64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw IoError("truncated checkpoint: " + path);
    return v;
}

static void write_records(std::ostream& out, const ParamStore& params, bool with_moments) {
    write_u32(out, static_cast<uint32_t>(params.entries.size()));
    for (const auto& e : params.entries) {
        write_u32(out, static_cast<uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_u32(out, static_cast<uint32_t>(e.shape.size()));
        for (long d : e.shape) write_i64(out, d);
        out.write(reinterpret_cast<const char*>(e.value.data()),
                  static_cast<std::streamsize>(e.value.size() * sizeof(float)));
        if (with_moments) {
            out.write(reinterpret_cast<const char*>(e.m.data()),
                      static_cast<std::streamsize>(e.m.size() * sizeof(float)));
            out.write(reinterpret_cast<const char*>(e.v.data()),
                      static_cast<std::streamsize>(e.v.size() * sizeof(float)));
        }
    }
}

static void read_records(std::istream& in, ParamStore& params, bool with_moments,
                         const std::string& path) {
    params.entries.clear();
    params.index.clear();
    uint32_t count = read_u32(in, path);
    for (uint32_t r = 0; r < count; ++r) {
        uint32_t name_len = read_u32(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw IoError("truncated checkpoint: " + path);
        uint32_t ndim = read_u32(in, path);
        std::vector<long> shape(ndim);
        long n = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            shape[d] = static_cast<long>(read_i64(in, path));
            n *= shape[d];
        }
        std::vector<float> value(static_cast<size_t>(n));
        if (!in.read(reinterpret_cast<char*>(value.data()),
                     static_cast<std::streamsize>(value.size() * sizeof(float))))
            throw IoError("truncated checkpoint: " + path);
        int idx = params.add(name, shape, std::move(value));
        if (with_moments) {
            auto& e = params.entries[static_cast<size_t>(idx)];
            if (!in.read(reinterpret_cast<char*>(e.m.data()),
                         static_cast<std::streamsize>(e.m.size() * sizeof(float))) ||
                !in.read(reinterpret_cast<char*>(e.v.data()),
                         static_cast<std::streamsize>(e.v.size() * sizeof(float))))
                throw IoError("truncated checkpoint: " + path);
        }
    }
}

static void atomic_write(const std::string& path,
                         const std::function<void(std::ostream&)>& body) {
    fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write checkpoint: " + tmp.string());
        body(out);
        if (!out) throw IoError("write failure: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot rename checkpoint into place: " + path);
}

void save_checkpoint(const ParamStore& params, const std::string& path,
                     const std::string& config_text) {
    atomic_write(path, [&](std::ostream& out) {
        out.write("DCKP", 4);
        write_u32(out, 1);
        write_records(out, params, false);
    });
    if (!config_text.empty()) {
        std::ofstream cfg(path + ".cfg", std::ios::binary);
        if (!cfg) throw IoError("cannot write checkpoint config: " + path + ".cfg");
        cfg << config_text;
    }
}

void load_checkpoint(ParamStore& params, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != "DCKP")
        throw IoError("not a checkpoint file: " + path);
    uint32_t version = read_u32(in, path);
    if (version != 1) throw IoError("unsupported checkpoint version in " + path);
    read_records(in, params, false, path);
}

void save_trainer_state(const ParamStore& params, long step, const std::string& path) {
    atomic_write(path, [&](std::ostream& out) {
        out.write("DCST", 4);
        write_u32(out, 1);
        write_i64(out, step);
        write_records(out, params, true);
    });
}

long load_trainer_state(ParamStore& params, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open trainer state: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != "DCST")
        throw IoError("not a trainer state file: " + path);
    uint32_t version = read_u32(in, path);
    if (version != 1) throw IoError("unsupported trainer state version in " + path);
    long step = static_cast<long>(read_i64(in, path));
    read_records(in, params, true, path);
    return step;
}

}  // namespace dcam::nn

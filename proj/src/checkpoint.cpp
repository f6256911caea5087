#include "mvseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "mvseg/config.hpp"
#include "mvseg/errors.hpp"

namespace mvseg {

namespace {

constexpr char kMagic[8] = {'M', 'V', 'S', 'E', 'G', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_i64(std::ostream& os, int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw DataError("checkpoint truncated");
    return v;
}

uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw DataError("checkpoint truncated");
    return v;
}

int64_t read_i64(std::istream& is) {
    int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw DataError("checkpoint truncated");
    return v;
}

void write_str(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& is) {
    uint64_t n = read_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw DataError("checkpoint truncated");
    return s;
}

void load_params(std::istream& is, SegModel& model) {
    nn::ParamList params = model.named_params();
    uint64_t count = read_u64(is);
    if (count != params.size())
        throw DataError("checkpoint parameter count " + std::to_string(count) +
                        " does not match model (" + std::to_string(params.size()) + ")");
    for (auto& [name, var] : params) {
        std::string stored_name = read_str(is);
        if (stored_name != name)
            throw DataError("checkpoint parameter order mismatch: expected '" + name +
                            "', found '" + stored_name + "'");
        uint32_t ndim = read_u32(is);
        std::vector<int64_t> shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = read_i64(is);
        if (shape != var.value().shape())
            throw DataError("checkpoint shape mismatch for '" + name + "': stored " +
                            Tensor::shape_str(shape) + ", model " + var.value().shape_str());
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(t.numel())));
        if (!is) throw DataError("checkpoint truncated in blob '" + name + "'");
        uint64_t stored_sum = read_u64(is);
        uint64_t sum = fnv1a64(t.data(), sizeof(double) * static_cast<size_t>(t.numel()));
        if (sum != stored_sum)
            throw DataError("checkpoint checksum mismatch for '" + name + "'");
        var.value_mut() = t;
    }
}

std::string read_header_config(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("not a checkpoint file (bad magic)");
    uint32_t version = read_u32(is);
    if (version != kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    return read_str(is);
}

} // namespace

uint64_t fnv1a64(const void* data, size_t n) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    uint64_t h = 1469598103934665603ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

void save_checkpoint(const SegModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    write_str(os, serialize_model_config(model.config()));
    nn::ParamList params = model.named_params();
    write_u64(os, params.size());
    for (const auto& [name, var] : params) {
        write_str(os, name);
        const Tensor& t = var.value();
        write_u32(os, static_cast<uint32_t>(t.ndim()));
        for (size_t d = 0; d < t.ndim(); ++d) write_i64(os, t.dim(d));
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(t.numel())));
        write_u64(os, fnv1a64(t.data(), sizeof(double) * static_cast<size_t>(t.numel())));
    }
    if (!os) throw DataError("failed writing checkpoint: " + path);
}

SegModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    std::string config_text = read_header_config(is);
    SegModel model(model_config_from_text(config_text));
    load_params(is, model);
    return model;
}

void load_checkpoint_into(SegModel& model, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    std::string stored = read_header_config(is);
    std::string current = serialize_model_config(model.config());
    if (stored != current) {
        // Report the first differing key.
        std::stringstream a(stored), b(current);
        std::string la, lb;
        while (std::getline(a, la) && std::getline(b, lb)) {
            if (la != lb)
                throw DataError("checkpoint config mismatch: stored '" + la + "' vs model '" +
                                lb + "'");
        }
        throw DataError("checkpoint config mismatch (different key sets)");
    }
    load_params(is, model);
}

} // namespace mvseg

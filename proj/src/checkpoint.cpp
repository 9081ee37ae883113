#include "vmct/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <vector>

#include "vmct/errors.hpp"
#include "vmct/json_util.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace vmct {

namespace {

constexpr char kMagic[4] = {'V', 'M', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

struct NamedTensor {
    std::string name;
    std::vector<int> dims;
    const std::vector<float>* values;
};

// Canonical tensor list: trainable parameters, then BN running stats.
std::vector<NamedTensor> tensor_list(UnifiedModel& model) {
    std::vector<NamedTensor> out;
    for (ParamArray* p : model.params()) out.push_back({p->name, p->dims, &p->values});
    for (BnLayerT<float>* bn : model.bn_layers()) {
        const int c = bn->gamma.dim(0);
        out.push_back({bn->name + ".running_mean", {c}, &bn->state.running_mean});
        out.push_back({bn->name + ".running_var", {c}, &bn->state.running_var});
    }
    return out;
}

std::string model_json(const UnifiedModel& model) {
    Json j;
    j["arch"] = arch_to_json(model.cfg);
    j["mode"] = mode_name(model.mode);
    return j.dump();
}

void write_bytes(std::ofstream& f, const void* data, std::size_t len) {
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
}

template <typename U>
void write_scalar(std::ofstream& f, U v) {
    write_bytes(f, &v, sizeof(U));
}

// Reader that tracks its offset so format errors can report where.
struct Reader {
    std::vector<char> data;
    std::size_t pos = 0;
    std::string path;

    void need(std::size_t n, const char* what) const {
        if (pos + n > data.size())
            throw FormatError(path + ": truncated " + what + " at offset " + std::to_string(pos) +
                              " (need " + std::to_string(n) + " bytes, have " +
                              std::to_string(data.size() - pos) + ")");
    }
    template <typename U>
    U scalar(const char* what) {
        need(sizeof(U), what);
        U v;
        std::memcpy(&v, data.data() + pos, sizeof(U));
        pos += sizeof(U);
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(data.data() + pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

std::size_t checkpoint_byte_size(UnifiedModel& model) {
    std::size_t total = 4 + 4;                      // magic + version
    total += 4 + model_json(model).size();           // JSON block
    total += 4;                                      // tensor count
    for (const NamedTensor& t : tensor_list(model)) {
        total += 2 + t.name.size() + 1 + 4 * t.dims.size();
        total += 4 * t.values->size();
    }
    return total;
}

void save_checkpoint(UnifiedModel& model, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    write_bytes(f, kMagic, 4);
    write_scalar<std::uint32_t>(f, kVersion);
    const std::string js = model_json(model);
    write_scalar<std::uint32_t>(f, static_cast<std::uint32_t>(js.size()));
    write_bytes(f, js.data(), js.size());

    const std::vector<NamedTensor> tensors = tensor_list(model);
    write_scalar<std::uint32_t>(f, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedTensor& t : tensors) {
        if (t.name.size() > 0xFFFF) throw ContractError("tensor name too long: " + t.name);
        write_scalar<std::uint16_t>(f, static_cast<std::uint16_t>(t.name.size()));
        write_bytes(f, t.name.data(), t.name.size());
        write_scalar<std::uint8_t>(f, static_cast<std::uint8_t>(t.dims.size()));
        for (int d : t.dims) write_scalar<std::uint32_t>(f, static_cast<std::uint32_t>(d));
        write_bytes(f, t.values->data(), 4 * t.values->size());
    }
    f.flush();
    if (!f) throw IoError("write failed for '" + path + "'");
}

UnifiedModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open '" + path + "' for reading");
    Reader r;
    r.path = path;
    r.data.resize(static_cast<std::size_t>(f.tellg()));
    f.seekg(0);
    f.read(r.data.data(), static_cast<std::streamsize>(r.data.size()));
    if (!f) throw IoError("read failed for '" + path + "'");

    const std::string magic = r.str(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw FormatError(path + ": bad magic (expected VMCK) at offset 0");
    const auto version = r.scalar<std::uint32_t>("version");
    if (version != kVersion)
        throw FormatError(path + ": unsupported version " + std::to_string(version));

    const auto json_len = r.scalar<std::uint32_t>("config length");
    const std::string js = r.str(json_len, "config block");
    Json j;
    try {
        j = Json::parse(js);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": bad config JSON: " + e.what());
    }
    check_keys(j, "checkpoint", {"arch", "mode"});
    if (!j.contains("arch") || !j.contains("mode"))
        throw FormatError(path + ": config block missing arch/mode");
    ArchConfig cfg;
    ModelMode mode;
    try {
        cfg = arch_from_json(j.at("arch"), "checkpoint.arch");
        mode = mode_from_name(j.at("mode").get<std::string>());
    } catch (const ConfigError& e) {
        throw FormatError(path + ": " + e.what());
    }

    UnifiedModel model = build_model<float>(cfg, mode, 0);

    std::map<std::string, std::pair<std::vector<int>, std::vector<float>>> loaded;
    const auto count = r.scalar<std::uint32_t>("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.scalar<std::uint16_t>("tensor name length");
        const std::string name = r.str(name_len, "tensor name");
        const auto rank = r.scalar<std::uint8_t>("tensor rank");
        std::vector<int> dims(rank);
        std::size_t numel = 1;
        for (int d = 0; d < rank; ++d) {
            const auto v = r.scalar<std::uint32_t>("tensor dim");
            if (v == 0 || v > (1u << 28)) throw FormatError(path + ": implausible dim in " + name);
            dims[d] = static_cast<int>(v);
            numel *= v;
        }
        r.need(4 * numel, "tensor payload");
        std::vector<float> vals(numel);
        std::memcpy(vals.data(), r.data.data() + r.pos, 4 * numel);
        r.pos += 4 * numel;
        if (!loaded.emplace(name, std::make_pair(std::move(dims), std::move(vals))).second)
            throw FormatError(path + ": duplicate tensor '" + name + "'");
    }
    if (r.pos != r.data.size())
        throw FormatError(path + ": " + std::to_string(r.data.size() - r.pos) +
                          " trailing bytes at offset " + std::to_string(r.pos));

    std::size_t used = 0;
    auto take = [&](const std::string& name, const std::vector<int>& want_dims,
                    std::vector<float>& dst) {
        auto it = loaded.find(name);
        if (it == loaded.end()) throw FormatError(path + ": missing tensor '" + name + "'");
        if (it->second.first != want_dims)
            throw FormatError(path + ": tensor '" + name + "' has wrong dims");
        dst = it->second.second;
        ++used;
    };
    for (ParamArray* p : model.params()) take(p->name, p->dims, p->values);
    for (BnLayerT<float>* bn : model.bn_layers()) {
        const std::vector<int> dims = {bn->gamma.dim(0)};
        take(bn->name + ".running_mean", dims, bn->state.running_mean);
        take(bn->name + ".running_var", dims, bn->state.running_var);
    }
    if (used != loaded.size()) throw FormatError(path + ": file contains unknown tensors");
    return model;
}

}  // namespace vmct

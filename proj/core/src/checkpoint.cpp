#include "contrastad/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace contrastad::training {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'A', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

// all integers little-endian
void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
    for (double d : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        put_u64(out, bits);
    }
}

void get_doubles(std::istream& in, std::vector<double>& v) {
    for (double& d : v) {
        std::uint64_t bits = get_u64(in);
        std::memcpy(&d, &bits, 8);
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const model::Model& m, const TrainConfig& cfg,
                     std::uint32_t epoch) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data::DataError("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    put_u32(out, kVersion);
    put_u32(out, epoch);
    put_u32(out, static_cast<std::uint32_t>(m.cfg.n_features));
    std::string cfg_json = config_to_json(cfg);
    put_u64(out, cfg_json.size());
    out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
    put_u32(out, static_cast<std::uint32_t>(m.params.items().size()));
    for (const auto& item : m.params.items()) {
        put_u32(out, static_cast<std::uint32_t>(item.name.size()));
        out.write(item.name.data(), static_cast<std::streamsize>(item.name.size()));
        put_u32(out, static_cast<std::uint32_t>(item.tensor.shape.size()));
        for (std::size_t d : item.tensor.shape) put_u64(out, d);
        put_doubles(out, item.tensor.values);
    }
    if (!out) throw data::DataError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data::DataError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw data::DataError("not a checkpoint file: " + path);
    std::uint32_t version = get_u32(in);
    if (version != kVersion)
        throw data::DataError("unsupported checkpoint version " + std::to_string(version));

    LoadedCheckpoint loaded;
    loaded.epoch = get_u32(in);
    loaded.n_features = get_u32(in);
    std::uint64_t cfg_len = get_u64(in);
    std::string cfg_json(cfg_len, '\0');
    in.read(cfg_json.data(), static_cast<std::streamsize>(cfg_len));
    loaded.config = config_from_json(cfg_json);

    // rebuild the parameter layout, then overwrite values from the file
    loaded.model = model::init_model(loaded.config.model_config(loaded.n_features), 0);
    std::uint32_t n_tensors = get_u32(in);
    if (n_tensors != loaded.model.params.items().size())
        throw data::DataError("checkpoint tensor count mismatch in " + path);
    for (std::uint32_t t = 0; t < n_tensors; ++t) {
        std::uint32_t name_len = get_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        diff::Tensor& tensor = loaded.model.params.at(name);
        std::uint32_t rank = get_u32(in);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = get_u64(in);
        if (shape != tensor.shape)
            throw data::DataError("checkpoint shape mismatch for '" + name + "' in " + path);
        get_doubles(in, tensor.values);
    }
    if (!in) throw data::DataError("truncated checkpoint: " + path);
    return loaded;
}

}  // namespace contrastad::training

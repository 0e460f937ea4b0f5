#include "rashvit/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "rashvit/config_json.hpp"
#include "rashvit/errors.hpp"

namespace rashvit::checkpoint {

namespace {

constexpr char kMagic[8] = {'R', 'A', 'S', 'H', 'V', 'I', 'T', '1'};

void write_atomic(const std::string& path, const std::string& bytes) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("checkpoint: cannot write " + tmp);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

void save(const std::string& path, const model::RaShvitNet<float>& net) {
    nlohmann::json header;
    header["config"] = net.config();
    nlohmann::json table = nlohmann::json::array();
    std::vector<const Tensor<float>*> blobs;
    uint64_t offset = 0;
    auto add = [&](const std::string& name, const Tensor<float>& t) {
        table.push_back({{"name", name}, {"dtype", "f32"}, {"shape", t.shape}, {"offset", offset}});
        blobs.push_back(&t);
        offset += static_cast<uint64_t>(t.numel()) * sizeof(float);
    };
    for (const auto& [name, p] : net.store().params) add(name, p->value);
    for (const auto& [name, b] : net.store().buffers) add(name, *b);
    header["tensors"] = table;

    std::string hdr = header.dump();
    if (hdr.size() > 0xffffffffu) throw DataError("checkpoint: header too large");
    std::string bytes;
    bytes.reserve(sizeof(kMagic) + 4 + hdr.size() + offset);
    bytes.append(kMagic, sizeof(kMagic));
    uint32_t len = static_cast<uint32_t>(hdr.size());
    char len_le[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                      static_cast<char>((len >> 16) & 0xff), static_cast<char>((len >> 24) & 0xff)};
    bytes.append(len_le, 4);
    bytes.append(hdr);
    for (const auto* t : blobs)
        bytes.append(reinterpret_cast<const char*>(t->data.data()), t->data.size() * sizeof(float));
    write_atomic(path, bytes);
}

LoadedCheckpoint load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("checkpoint: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0) throw DataError("checkpoint: bad magic in " + path);
    unsigned char len_le[4];
    f.read(reinterpret_cast<char*>(len_le), 4);
    if (!f) throw DataError("checkpoint: truncated header length");
    uint32_t len = static_cast<uint32_t>(len_le[0]) | (static_cast<uint32_t>(len_le[1]) << 8) |
                   (static_cast<uint32_t>(len_le[2]) << 16) | (static_cast<uint32_t>(len_le[3]) << 24);
    std::string hdr(len, '\0');
    f.read(hdr.data(), static_cast<std::streamsize>(len));
    if (!f) throw DataError("checkpoint: truncated header");
    nlohmann::json header = nlohmann::json::parse(hdr, nullptr, false);
    if (header.is_discarded()) throw DataError("checkpoint: malformed header JSON");

    LoadedCheckpoint out;
    out.config = header.at("config").get<model::ModelConfig>();
    std::streampos data_start = f.tellg();
    for (const auto& e : header.at("tensors")) {
        std::string name = e.at("name").get<std::string>();
        if (e.at("dtype").get<std::string>() != "f32") throw DataError("checkpoint: unsupported dtype for " + name);
        std::vector<int64_t> shape = e.at("shape").get<std::vector<int64_t>>();
        uint64_t off = e.at("offset").get<uint64_t>();
        Tensor<float> t(shape);
        f.seekg(data_start + static_cast<std::streamoff>(off));
        f.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        if (!f) throw DataError("checkpoint: truncated tensor data for " + name);
        out.tensors.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

void apply(model::RaShvitNet<float>& net, const LoadedCheckpoint& ckpt) {
    auto take = [&](const std::string& name, Tensor<float>& dst) {
        for (const auto& [n, t] : ckpt.tensors)
            if (n == name) {
                if (t.shape != dst.shape)
                    throw DataError("checkpoint: shape mismatch for " + name + ": " + shape_str(t.shape) +
                                    " vs " + shape_str(dst.shape));
                dst = t;
                return;
            }
        throw DataError("checkpoint: missing tensor " + name);
    };
    for (auto& [name, p] : net.store().params) take(name, p->value);
    for (auto& [name, b] : net.store().buffers) take(name, *b);
}

model::RaShvitNet<float> restore(const std::string& path) {
    auto ckpt = load(path);
    model::RaShvitNet<float> net(ckpt.config);
    apply(net, ckpt);
    return net;
}

}  // namespace checkpoint

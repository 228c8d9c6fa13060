#include "mapnet/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace mapnet {

namespace {

constexpr char kMagic[8] = {'M', 'A', 'P', 'N', 'E', 'T', 'P', '1'};

void write_u32(std::ofstream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::ifstream& in, const std::string& what) {
    uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw DataError("checkpoint: truncated while reading " + what);
    return v;
}

struct ArchiveEntry {
    std::string name;
    Tensor tensor;
};

std::vector<ArchiveEntry> read_params_bin(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    const uint32_t count = read_u32(in, "entry count");
    std::vector<ArchiveEntry> entries;
    entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = read_u32(in, "name length");
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw DataError("checkpoint: truncated name");
        const uint32_t rank = read_u32(in, "rank");
        if (rank == 0 || rank > 8) throw DataError("checkpoint: implausible rank");
        std::vector<int> shape(rank);
        size_t total = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<int>(read_u32(in, "dimension"));
            total *= static_cast<size_t>(shape[d]);
        }
        std::vector<double> data(total);
        if (!in.read(reinterpret_cast<char*>(data.data()),
                     static_cast<std::streamsize>(total * sizeof(double))))
            throw DataError("checkpoint: truncated tensor data for " + name);
        entries.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
    }
    return entries;
}

}  // namespace

void save_checkpoint(const std::string& dir, const Model& model, const nlohmann::json& extra) {
    fs::create_directories(dir);

    nlohmann::json manifest;
    manifest["format_version"] = 1;
    manifest["model"] = model_config_to_json(model.cfg);
    manifest["parameters"] = model.params.size();
    manifest["extra"] = extra;
    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw DataError("checkpoint: cannot write manifest in " + dir);
    mf << manifest.dump(2) << "\n";

    std::ofstream out(fs::path(dir) / "params.bin", std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot write params.bin in " + dir);
    out.write(kMagic, 8);
    write_u32(out, static_cast<uint32_t>(model.params.size()));
    for (const auto& name : model.params.names()) {
        const Tensor& t = model.params.get(name);
        write_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, static_cast<uint32_t>(t.rank()));
        for (int d = 0; d < t.rank(); ++d) write_u32(out, static_cast<uint32_t>(t.dim(d)));
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(static_cast<size_t>(t.size()) * sizeof(double)));
    }
    if (!out) throw DataError("checkpoint: short write in " + dir);
}

nlohmann::json load_manifest(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw DataError("checkpoint: missing manifest.json in " + dir);
    try {
        return nlohmann::json::parse(mf);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint: invalid manifest.json in " + dir + ": " + e.what());
    }
}

Model load_checkpoint(const std::string& dir) {
    const nlohmann::json manifest = load_manifest(dir);
    if (!manifest.contains("model"))
        throw DataError("checkpoint: manifest lacks a model section in " + dir);
    Model model;
    model.cfg = model_config_from_json(manifest.at("model"));
    model.register_only();

    auto entries = read_params_bin((fs::path(dir) / "params.bin").string());
    if (entries.size() != model.params.size())
        throw DataError("checkpoint: parameter count mismatch in " + dir);
    for (auto& e : entries) {
        if (!model.params.has(e.name))
            throw DataError("checkpoint: unexpected parameter " + e.name);
        Tensor& dst = model.params.get(e.name);
        if (!dst.same_shape(e.tensor))
            throw DataError("checkpoint: shape mismatch for " + e.name);
        dst = std::move(e.tensor);
    }
    return model;
}

int import_params(Model& model, const std::string& dir, const std::string& prefix) {
    auto entries = read_params_bin((fs::path(dir) / "params.bin").string());
    int imported = 0;
    for (auto& e : entries) {
        if (e.name.rfind(prefix, 0) != 0) continue;
        if (!model.params.has(e.name))
            throw DataError("import: model has no parameter named " + e.name);
        Tensor& dst = model.params.get(e.name);
        if (!dst.same_shape(e.tensor)) throw DataError("import: shape mismatch for " + e.name);
        dst = std::move(e.tensor);
        ++imported;
    }
    return imported;
}

}  // namespace mapnet

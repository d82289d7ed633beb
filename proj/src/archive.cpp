#include "gridcast/archive.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace gridcast {

namespace fs = std::filesystem;
using nlohmann::json;

void TensorArchive::add(const std::string& name, const ad::Tensor& t) {
    tensors.emplace_back(name, t);
}

const ad::Tensor& TensorArchive::get(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw std::runtime_error("tensor archive: missing tensor " + name);
}

bool TensorArchive::has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

void save_tensors(const std::string& dir, const TensorArchive& archive) {
    fs::create_directories(dir);
    json entries = json::array();
    std::vector<double> flat;
    for (const auto& [name, t] : archive.tensors) {
        entries.push_back({{"name", name},
                           {"shape", t.shape()},
                           {"offset", flat.size()},
                           {"count", t.size()}});
        flat.insert(flat.end(), t.vec().begin(), t.vec().end());
    }
    json manifest = {{"format", "gridcast-tensors"},
                     {"version", 1},
                     {"tensors", entries},
                     {"values_file", "values.bin"},
                     {"meta", archive.meta}};
    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("cannot write manifest in " + dir);
    mf << manifest.dump(2) << "\n";
    std::ofstream vf(fs::path(dir) / "values.bin", std::ios::binary);
    vf.write(reinterpret_cast<const char*>(flat.data()),
             static_cast<std::streamsize>(flat.size() * sizeof(double)));
}

TensorArchive load_tensors(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("cannot open " + dir + "/manifest.json");
    json manifest = json::parse(mf);
    if (manifest.value("format", "") != "gridcast-tensors")
        throw std::runtime_error(dir + ": not a tensor archive");
    TensorArchive archive;
    archive.meta = manifest.value("meta", json::object());
    std::ifstream vf(fs::path(dir) / manifest.at("values_file").get<std::string>(),
                     std::ios::binary);
    if (!vf) throw std::runtime_error("cannot open values file in " + dir);
    for (const auto& e : manifest.at("tensors")) {
        auto shape = e.at("shape").get<std::vector<int>>();
        std::size_t count = e.at("count").get<std::size_t>();
        std::vector<double> data(count);
        vf.seekg(static_cast<std::streamoff>(e.at("offset").get<std::size_t>() *
                                             sizeof(double)));
        vf.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (static_cast<std::size_t>(vf.gcount()) != count * sizeof(double))
            throw std::runtime_error("short read in tensor archive " + dir);
        archive.tensors.emplace_back(e.at("name").get<std::string>(),
                                     ad::Tensor(shape, std::move(data)));
    }
    return archive;
}

}  // namespace gridcast

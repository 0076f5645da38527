#include "core/tensor_file.hpp"

#include <cstdint>
#include <fstream>

#include "core/errors.hpp"

namespace emseg::nn {

namespace {

constexpr char kMagic[8] = {'E', 'M', 'S', 'G', 'T', 'N', 'S', '1'};

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("tensor file: truncated stream");
    return v;
}

} // namespace

void save_tensors(const std::string& path, const std::map<std::string, Tensor>& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("tensor file: cannot open for write: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.ndim()));
        for (int d : t.shape()) write_pod<std::int32_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(t.numel())));
    }
    if (!os) throw IoError("tensor file: write failed: " + path);
}

std::map<std::string, Tensor> load_tensors(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("tensor file: cannot open: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::string(magic, 8) != std::string(kMagic, 8))
        throw IoError("tensor file: bad magic in " + path);
    const auto count = read_pod<std::uint32_t>(is);
    std::map<std::string, Tensor> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto ndim = read_pod<std::uint32_t>(is);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = read_pod<std::int32_t>(is);
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(t.numel())));
        if (!is) throw IoError("tensor file: truncated tensor " + name + " in " + path);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

} // namespace emseg::nn

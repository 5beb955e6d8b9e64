#include "core/weight_bundle.hpp"

#include <cstdint>
#include <fstream>

#include "core/check.hpp"

namespace prism {

namespace {
constexpr char kMagic[] = "PRWB1\n";

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError("truncated weight bundle: " + path);
    return static_cast<std::uint32_t>(b[0]) | (b[1] << 8) | (b[2] << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}
} // namespace

void save_weight_bundle(const std::string& path, const WeightBundle& bundle) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write weight bundle: " + path);
    out.write(kMagic, sizeof(kMagic) - 1);
    write_u32(out, static_cast<std::uint32_t>(bundle.size()));
    for (const auto& [name, tensor] : bundle) {
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (int d : tensor.dims()) write_u32(out, static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing weight bundle: " + path);
}

WeightBundle load_weight_bundle(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weight bundle: " + path);
    char magic[sizeof(kMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::string(magic, sizeof(magic)) != std::string(kMagic, sizeof(magic)))
        throw IoError("not a weight bundle (bad magic): " + path);
    const std::uint32_t count = read_u32(in, path);
    WeightBundle bundle;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = read_u32(in, path);
        PRISM_CHECK(name_len < 4096, "weight bundle name too long");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const std::uint32_t rank = read_u32(in, path);
        PRISM_CHECK(rank <= 4, "weight bundle tensor rank > 4");
        std::vector<int> dims;
        std::int64_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            dims.push_back(static_cast<int>(read_u32(in, path)));
            numel *= dims.back();
        }
        std::vector<double> data(static_cast<size_t>(numel));
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!in) throw IoError("truncated weight bundle: " + path);
        bundle.emplace(std::move(name), Tensor::from(std::move(dims), std::move(data)));
    }
    return bundle;
}

} // namespace prism

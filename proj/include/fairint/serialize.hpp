#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

#include "fairint/autodiff.hpp"
#include "fairint/error.hpp"

namespace fairint {

// Model file layout (all integers little-endian):
//
//   magic        8 bytes  "FAIRINT\0"
//   version      u32      currently 1
//   meta_len     u64      length of the metadata blob
//   meta         bytes    UTF-8 JSON (model config, schema, encoders)
//   param_count  u32
//   param_count records of:
//     name_len   u32
//     name       bytes
//     rank       u32
//     extents    rank x u64
//     values     prod(extents) x f64 (IEEE-754 binary64, little-endian)
//
// Doubles are copied bit-for-bit, so a save/load round trip is exact.

inline constexpr std::array<char, 8> kModelMagic{'F', 'A', 'I', 'R', 'I', 'N', 'T', '\0'};
inline constexpr std::uint32_t kModelVersion = 1;

struct ModelFile {
    std::string metadata;
    ParameterStore params;
};

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xffu));
    }
}

inline void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get_le() {
        need(sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }

    double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s(bytes_.substr(pos_, n));
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw DataError("model file truncated at byte " + std::to_string(pos_));
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::string encode_model(const std::string& metadata, const ParameterStore& params) {
    std::string out(kModelMagic.begin(), kModelMagic.end());
    detail::put_le<std::uint32_t>(out, kModelVersion);
    detail::put_le<std::uint64_t>(out, metadata.size());
    out += metadata;
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out += p.name;
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
        for (auto e : p.value.shape()) {
            detail::put_le<std::uint64_t>(out, e);
        }
        for (double v : p.value.values()) {
            detail::put_f64(out, v);
        }
    }
    return out;
}

inline ModelFile decode_model(std::string_view bytes) {
    detail::Reader in(bytes);
    if (in.get_bytes(kModelMagic.size()) != std::string(kModelMagic.begin(), kModelMagic.end())) {
        throw DataError("not a model file (bad magic)");
    }
    const auto version = in.get_le<std::uint32_t>();
    if (version != kModelVersion) {
        throw DataError("unsupported model file version " + std::to_string(version));
    }
    ModelFile file;
    file.metadata = in.get_bytes(in.get_le<std::uint64_t>());
    const auto count = in.get_le<std::uint32_t>();
    for (std::uint32_t k = 0; k < count; ++k) {
        std::string name = in.get_bytes(in.get_le<std::uint32_t>());
        const auto rank = in.get_le<std::uint32_t>();
        if (rank == 0 || rank > 8) {
            throw DataError("parameter '" + name + "' has invalid rank " + std::to_string(rank));
        }
        Shape shape(rank);
        for (auto& e : shape) {
            e = in.get_le<std::uint64_t>();
            if (e == 0 || e > (std::uint64_t{1} << 32)) {
                throw DataError("parameter '" + name + "' has invalid extent");
            }
        }
        std::vector<double> values(shape_numel(shape));
        for (auto& v : values) {
            v = in.get_f64();
        }
        file.params.add(name, Tensor(std::move(shape), std::move(values)));
    }
    if (!in.done()) {
        throw DataError("trailing bytes after model records");
    }
    return file;
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) {
        throw IoError("failed writing '" + path + "'");
    }
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open '" + path + "' for reading");
    }
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

inline void save_model(const std::string& path, const std::string& metadata, const ParameterStore& params) {
    write_file_bytes(path, encode_model(metadata, params));
}

inline ModelFile load_model(const std::string& path) { return decode_model(read_file_bytes(path)); }

} // namespace fairint

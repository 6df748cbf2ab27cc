#pragma once

// Shared plumbing: flat row-major matrices, seed-stream derivation,
// little-endian binary IO, error types, atomic file writes.

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lenslab {

// Error taxonomy mirrored by the CLI exit codes: config 2, stage 3, io 4.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct StageError : std::runtime_error {
    StageError(const std::string& stage, const std::string& msg)
        : std::runtime_error("stage '" + stage + "': " + msg), stage_name(stage) {}
    std::string stage_name;
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Reserved token ids, fixed across every vocabulary this project builds.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;

// 64-byte-aligned storage for every numeric tensor. Heap addresses otherwise
// vary run to run, and vectorized kernels that peel to an alignment boundary
// would then sum in a different order — breaking bit-reproducibility.
template <typename T, size_t Align = 64>
struct AlignedAllocator {
    using value_type = T;
    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U, Align>&) {}
    T* allocate(size_t n) {
        const size_t bytes = (n * sizeof(T) + Align - 1) / Align * Align;
        void* p = std::aligned_alloc(Align, bytes);
        if (!p) throw std::bad_alloc();
        return static_cast<T*>(p);
    }
    void deallocate(T* p, size_t) noexcept { std::free(p); }
    template <typename U>
    struct rebind {
        using other = AlignedAllocator<U, Align>;
    };
    bool operator==(const AlignedAllocator&) const { return true; }
    bool operator!=(const AlignedAllocator&) const { return false; }
};

template <typename S>
using AVec = std::vector<S, AlignedAllocator<S>>;

// ----------------------------------------------------------------------------
// Flat row-major matrix. The numeric kernels (gemm.hpp) map these into Eigen;
// everything else indexes rows directly.
// ----------------------------------------------------------------------------
template <typename S>
struct Mat {
    int rows{0};
    int cols{0};
    AVec<S> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, S(0)) {}

    S* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const S* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    S& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    S at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return data.size(); }
    void set_zero() { std::fill(data.begin(), data.end(), S(0)); }
};

// ----------------------------------------------------------------------------
// Seed streams. Every random choice in the project draws from an engine
// created by stream_rng(base_seed, name), so independent stages never share
// state and any stage can be replayed in isolation.
// ----------------------------------------------------------------------------
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t derive_seed(uint64_t base, std::string_view stream) {
    return splitmix64(base ^ splitmix64(fnv1a64(stream)));
}

inline std::mt19937_64 stream_rng(uint64_t base, std::string_view stream) {
    return std::mt19937_64(derive_seed(base, stream));
}

// ----------------------------------------------------------------------------
// Little-endian binary IO. File formats in this project are defined as
// little-endian regardless of host order.
// ----------------------------------------------------------------------------
namespace io {

template <typename T>
void put(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

inline void put_f32(std::string& out, float v) { put<float>(out, v); }
inline void put_u16(std::string& out, uint16_t v) { put<uint16_t>(out, v); }
inline void put_u32(std::string& out, uint32_t v) { put<uint32_t>(out, v); }
inline void put_u64(std::string& out, uint64_t v) { put<uint64_t>(out, v); }

struct Reader {
    const std::string& buf;
    size_t pos{0};

    explicit Reader(const std::string& b) : buf(b) {}

    template <typename T>
    T get() {
        if (pos + sizeof(T) > buf.size()) throw IoError("truncated file");
        T v;
        std::memcpy(&v, buf.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
    float f32() { return get<float>(); }
    uint16_t u16() { return get<uint16_t>(); }
    uint32_t u32() { return get<uint32_t>(); }
    uint64_t u64() { return get<uint64_t>(); }
    std::string bytes(size_t n) {
        if (pos + n > buf.size()) throw IoError("truncated file");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    bool eof() const { return pos >= buf.size(); }
};

}  // namespace io

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

// Write-temp-then-rename so a crash never leaves a half-written artifact.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + tmp.string());
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw IoError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

// Fixed-format float for deterministic text artifacts (CSV, SVG).
inline std::string fmt_float(double v, int prec = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    return buf;
}

// shortest decimal that parses back to the exact same double
inline std::string fmt_float_rt(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

}  // namespace lenslab

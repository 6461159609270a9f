#include "invad/model_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "invad/error.hpp"

namespace invad {

namespace {

class Writer {
public:
    void bytes(const char* s, std::size_t n) { out.insert(out.end(), s, s + n); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

    std::uint64_t uint(int width) {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += static_cast<std::size_t>(width);
        return v;
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
    std::uint64_t u64() { return uint(8); }
    double f64() { return std::bit_cast<double>(u64()); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError("model file truncated", bytes_.size());
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::uint32_t crc(std::span<const std::uint8_t> bytes) {
    uLong c = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t done = 0;
    while (done < bytes.size()) {
        const std::size_t n = std::min<std::size_t>(bytes.size() - done, 1u << 30);
        c = crc32(c, bytes.data() + done, static_cast<uInt>(n));
        done += n;
    }
    return static_cast<std::uint32_t>(c);
}

}  // namespace

std::vector<std::uint8_t> encode_model(const NoiseSchedule& schedule, const MlpEpsModel& model) {
    if (schedule.total_steps() != model.total_steps()) throw InvalidArgument("encode_model: schedule/model T mismatch");
    const MlpArch& arch = model.arch();
    Writer w;
    w.bytes("IVAD", 4);
    w.u32(kModelVersion);
    w.u32(static_cast<std::uint32_t>(schedule.total_steps()));
    w.f64(schedule.beta_first());
    w.f64(schedule.beta_last());
    for (std::size_t d : arch.latent_shape) w.u32(static_cast<std::uint32_t>(d));
    w.u32(static_cast<std::uint32_t>(arch.depth));
    w.u32(static_cast<std::uint32_t>(arch.width));
    w.u32(static_cast<std::uint32_t>(arch.cond_dim));
    w.u32(static_cast<std::uint32_t>(arch.time_dim));
    w.u64(model.param_count());
    for (double p : model.params()) w.f32(static_cast<float>(p));
    w.u32(crc(w.out));
    return std::move(w.out);
}

SavedModel decode_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "IVAD", 4) != 0) throw FormatError("model file: bad magic", 0);
    if (bytes.size() < 8) throw FormatError("model file truncated", bytes.size());
    const std::size_t body = bytes.size() - 4;
    Reader r(bytes);
    r.u32();
    const std::uint32_t version = r.u32();
    if (version != kModelVersion) throw FormatError("model file: unsupported version " + std::to_string(version), 4);
    const auto steps = static_cast<int>(r.u32());
    const double beta_first = r.f64();
    const double beta_last = r.f64();
    MlpArch arch;
    arch.latent_shape = {r.u32(), r.u32(), r.u32()};
    arch.depth = static_cast<int>(r.u32());
    arch.width = static_cast<int>(r.u32());
    arch.cond_dim = static_cast<int>(r.u32());
    arch.time_dim = static_cast<int>(r.u32());
    const std::size_t count_offset = r.pos();
    const std::uint64_t count = r.u64();
    if (count > r.remaining() / 4 || r.remaining() != count * 4 + 4) {
        throw FormatError("model file: parameter payload size mismatch", count_offset);
    }
    const std::uint32_t expected = crc(bytes.first(body));
    const std::uint32_t stored = Reader(bytes.subspan(body)).u32();
    if (expected != stored) throw FormatError("model file: checksum mismatch", body);

    try {
        NoiseSchedule schedule = NoiseSchedule::linear(steps, beta_first, beta_last);
        MlpEpsModel model(arch, steps);
        if (model.param_count() != count) {
            throw FormatError("model file: parameter count does not match architecture", count_offset);
        }
        for (double& p : model.params()) p = static_cast<double>(r.f32());
        return {std::move(schedule), std::move(model)};
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("model file: ") + e.what(), 8);
    }
}

void save_model(const std::filesystem::path& path, const NoiseSchedule& schedule, const MlpEpsModel& model) {
    const auto bytes = encode_model(schedule, model);
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open " + path.string() + " for writing");
    file.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!file) throw std::runtime_error("write failed: " + path.string());
}

SavedModel load_model(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    try {
        return decode_model(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.message(), e.offset());
    }
}

MlpEpsModel quantize_params(const MlpEpsModel& model) {
    MlpEpsModel out = model;
    for (double& p : out.params()) p = static_cast<double>(static_cast<float>(p));
    return out;
}

}  // namespace invad

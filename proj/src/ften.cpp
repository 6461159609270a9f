#include "invad/ften.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "invad/error.hpp"

namespace invad {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + static_cast<std::size_t>(i)]) << (8 * i);
    return v;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > 0xFFFFFFFFu) throw InvalidArgument(std::string("FTEN: ") + what + " exceeds u32");
    return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_ften(std::span<const Tensor> tensors) {
    std::vector<std::size_t> shape = {0, 0, 0};
    if (!tensors.empty()) {
        shape = tensors.front().shape();
        if (shape.size() != 3) throw InvalidArgument("FTEN: tensors must be C x h x w, got " + shape_string(shape));
    }
    for (const Tensor& t : tensors) {
        if (t.shape() != shape) throw InvalidArgument("FTEN: inconsistent tensor shapes");
    }
    std::vector<std::uint8_t> out;
    out.reserve(kFtenHeaderBytes + tensors.size() * shape_volume(shape) * 4);
    out.insert(out.end(), {'F', 'T', 'E', 'N'});
    put_u32(out, kFtenVersion);
    put_u32(out, checked_u32(tensors.size(), "N"));
    for (std::size_t d : shape) put_u32(out, checked_u32(d, "dimension"));
    for (const Tensor& t : tensors) {
        for (double v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

std::vector<Tensor> decode_ften(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "FTEN", 4) != 0) {
        throw FormatError(bytes.size() < 4 ? "FTEN: truncated magic" : "FTEN: bad magic", 0);
    }
    if (bytes.size() < kFtenHeaderBytes) throw FormatError("FTEN: truncated header", bytes.size());
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kFtenVersion) throw FormatError("FTEN: unsupported version " + std::to_string(version), 4);
    const std::size_t n = get_u32(bytes, 8);
    const std::vector<std::size_t> shape = {get_u32(bytes, 12), get_u32(bytes, 16), get_u32(bytes, 20)};
    const std::size_t available = bytes.size() - kFtenHeaderBytes;
    // Dimensions are u32, so any single product of two fits in 64 bits.
    const std::size_t plane = shape[1] * shape[2];
    if (plane != 0 && shape[0] > available / 4 / plane) throw FormatError("FTEN: truncated payload", bytes.size());
    const std::size_t per = shape[0] * plane;
    if (per != 0 && n > available / 4 / per) throw FormatError("FTEN: truncated payload", bytes.size());
    const std::size_t payload = n * per * 4;
    if (available < payload) throw FormatError("FTEN: truncated payload", bytes.size());
    if (bytes.size() - kFtenHeaderBytes > payload) {
        throw FormatError("FTEN: trailing bytes after payload", kFtenHeaderBytes + payload);
    }
    std::vector<Tensor> out;
    out.reserve(n);
    std::size_t offset = kFtenHeaderBytes;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> data(per);
        for (double& v : data) {
            v = static_cast<double>(std::bit_cast<float>(get_u32(bytes, offset)));
            offset += 4;
        }
        out.emplace_back(shape, std::move(data));
    }
    return out;
}

void write_ften(const std::filesystem::path& path, std::span<const Tensor> tensors) {
    const auto bytes = encode_ften(tensors);
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open " + path.string() + " for writing");
    file.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!file) throw std::runtime_error("write failed: " + path.string());
}

std::vector<Tensor> read_ften(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    try {
        return decode_ften(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.message(), e.offset());
    }
}

void write_ften_masks(const std::filesystem::path& path, std::span<const Tensor> masks) {
    std::vector<Tensor> stacked;
    stacked.reserve(masks.size());
    for (const Tensor& m : masks) {
        if (m.rank() != 2) throw InvalidArgument("FTEN masks must be 2-D");
        stacked.emplace_back(std::vector<std::size_t>{1, m.dim(0), m.dim(1)}, m.data());
    }
    write_ften(path, stacked);
}

std::vector<Tensor> read_ften_masks(const std::filesystem::path& path) {
    auto stacked = read_ften(path);
    std::vector<Tensor> masks;
    masks.reserve(stacked.size());
    for (const Tensor& t : stacked) {
        if (t.dim(0) != 1) throw FormatError(path.string() + ": mask file must have C = 1", 12);
        masks.emplace_back(std::vector<std::size_t>{t.dim(1), t.dim(2)}, t.data());
    }
    return masks;
}

}  // namespace invad

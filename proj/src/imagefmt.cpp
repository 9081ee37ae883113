#include "vmct/imagefmt.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "vmct/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "VMCT I/O assumes a little-endian host");

namespace vmct {

namespace {

constexpr char kMagic[4] = {'V', 'M', 'C', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 24;

}  // namespace

void write_vmct(const std::string& path, const VmctImage& img) {
    if (img.slices.empty()) throw ArgumentError("write_vmct: no slices");
    const int h = img.slices[0].h, w = img.slices[0].w;
    if (h <= 0 || w <= 0) throw ArgumentError("write_vmct: non-positive dims");
    for (const ImageF& s : img.slices)
        if (s.h != h || s.w != w) throw ShapeError("write_vmct: slice dims differ");
    if (img.phase_code < -1 || img.phase_code > 3)
        throw ArgumentError("write_vmct: phase code must be -1..3");

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    auto put = [&](const void* p, std::size_t n) { f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); };
    put(kMagic, 4);
    const std::uint32_t ver = kVersion, uw = static_cast<std::uint32_t>(w),
                        uh = static_cast<std::uint32_t>(h),
                        ns = static_cast<std::uint32_t>(img.slices.size());
    const std::int32_t pc = img.phase_code;
    put(&ver, 4);
    put(&uw, 4);
    put(&uh, 4);
    put(&ns, 4);
    put(&pc, 4);
    for (const ImageF& s : img.slices) put(s.v.data(), 4 * s.v.size());
    f.flush();
    if (!f) throw IoError("write failed for '" + path + "'");
}

void write_vmct(const std::string& path, const ImageF& slice, int phase_code) {
    VmctImage img;
    img.slices.push_back(slice);
    img.phase_code = phase_code;
    write_vmct(path, img);
}

VmctImage read_vmct(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open '" + path + "' for reading");
    const std::size_t total = static_cast<std::size_t>(f.tellg());
    f.seekg(0);
    if (total < kHeaderBytes)
        throw FormatError(path + ": truncated header (" + std::to_string(total) + " of " +
                          std::to_string(kHeaderBytes) + " bytes)");

    char header[kHeaderBytes];
    f.read(header, kHeaderBytes);
    if (std::memcmp(header, kMagic, 4) != 0)
        throw FormatError(path + ": bad magic (expected VMCT)");
    std::uint32_t ver, w, h, ns;
    std::int32_t pc;
    std::memcpy(&ver, header + 4, 4);
    std::memcpy(&w, header + 8, 4);
    std::memcpy(&h, header + 12, 4);
    std::memcpy(&ns, header + 16, 4);
    std::memcpy(&pc, header + 20, 4);
    if (ver != kVersion) throw FormatError(path + ": unsupported version " + std::to_string(ver));
    if (w == 0 || h == 0 || ns == 0) throw FormatError(path + ": zero dimension in header");
    if (w > (1u << 20) || h > (1u << 20) || ns > (1u << 20))
        throw FormatError(path + ": implausible dimensions in header");
    if (pc < -1 || pc > 3) throw FormatError(path + ": phase code " + std::to_string(pc) + " out of range");

    const std::size_t expect = kHeaderBytes + 4ull * w * h * ns;
    if (total != expect)
        throw FormatError(path + ": payload length mismatch (expected " + std::to_string(expect) +
                          " bytes, file has " + std::to_string(total) + ")");

    VmctImage img;
    img.phase_code = pc;
    img.slices.reserve(ns);
    for (std::uint32_t s = 0; s < ns; ++s) {
        ImageF im(static_cast<int>(h), static_cast<int>(w));
        f.read(reinterpret_cast<char*>(im.v.data()), static_cast<std::streamsize>(4 * im.v.size()));
        img.slices.push_back(std::move(im));
    }
    if (!f) throw IoError("read failed for '" + path + "'");
    return img;
}

void export_pgm16(const std::string& path, const ImageF& img_hu, const DisplayWindow& win) {
    const std::vector<std::uint16_t> px = apply_window(img_hu, win);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << "P5\n" << img_hu.w << " " << img_hu.h << "\n65535\n";
    // PGM stores 16-bit samples most-significant byte first.
    std::vector<std::uint8_t> bytes(px.size() * 2);
    for (std::size_t i = 0; i < px.size(); ++i) {
        bytes[2 * i] = static_cast<std::uint8_t>(px[i] >> 8);
        bytes[2 * i + 1] = static_cast<std::uint8_t>(px[i] & 0xFF);
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) throw IoError("write failed for '" + path + "'");
}

}  // namespace vmct

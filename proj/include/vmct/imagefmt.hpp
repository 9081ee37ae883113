#pragma once

// VMCT image container: magic "VMCT", u32 version=1, u32 width, u32 height,
// u32 n_slices, i32 phase_code (0..3 or -1 = unknown), then f32 little-endian
// HU values, slice-major then row-major. The header is exactly 24 bytes.

#include <string>
#include <vector>

#include "vmct/image.hpp"
#include "vmct/metrics.hpp"

namespace vmct {

struct VmctImage {
    std::vector<ImageF> slices;
    int phase_code = -1;  // -1 = unknown
};

void write_vmct(const std::string& path, const VmctImage& img);
void write_vmct(const std::string& path, const ImageF& slice, int phase_code);
VmctImage read_vmct(const std::string& path);

// Binary 16-bit PGM ("P5", maxval 65535, big-endian samples) of the windowed
// image.
void export_pgm16(const std::string& path, const ImageF& img_hu, const DisplayWindow& win);

}  // namespace vmct

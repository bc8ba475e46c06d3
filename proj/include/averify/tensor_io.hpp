#pragma once

#include <filesystem>
#include <iosfwd>

#include "averify/tensor.hpp"

namespace averify {

/// "TNSR v1" binary layout: magic "TNSR", u32 LE version, u32 LE rank,
/// u32 LE dims, then raw little-endian f64 row-major.
void write_tnsr(const Tensor& t, std::ostream& os);
void write_tnsr(const Tensor& t, const std::filesystem::path& path);
Tensor read_tnsr(std::istream& is);
Tensor read_tnsr(const std::filesystem::path& path);

/// 8-bit binary PGM (P5). Writing requires a single-channel image and
/// quantizes with round(v * 255); reading normalizes by /255.
void write_pgm(const ImageTensor& image, const std::filesystem::path& path);
ImageTensor read_pgm(const std::filesystem::path& path);

}  // namespace averify

#pragma once

#include <string>

#include "core/tensor.hpp"

namespace prism {

/// Frame and map I/O. Frames are binary PPM (P6), single-channel maps are
/// binary PGM (P5, 8- or 16-bit). Values map linearly to [0,1] on read;
/// 16-bit PGM carries raw integer values for depth (caller applies the
/// manifest scale factor).

/// Read a color image as (3,H,W) in [0,1]. 8-bit P6 only.
Tensor read_ppm(const std::string& path);

/// Write (3,H,W) or (1,H,W) in [0,1] as 8-bit P6 (grayscale replicated).
void write_ppm(const std::string& path, const Tensor& image);

/// Read a PGM as (1,H,W); 8-bit values scaled to [0,1], 16-bit kept raw.
Tensor read_pgm(const std::string& path);

/// Raw maxval of a PGM header (255 or 65535) without decoding pixels.
int pgm_maxval(const std::string& path);

/// Write (1,H,W) in [0,1] as 8-bit P5.
void write_pgm8(const std::string& path, const Tensor& map);

/// Write (1,H,W) of raw integer values (0..65535) as 16-bit big-endian P5.
void write_pgm16(const std::string& path, const Tensor& raw);

} // namespace prism

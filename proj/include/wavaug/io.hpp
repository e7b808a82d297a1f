#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wavaug/grid.hpp"
#include "wavaug/net.hpp"

namespace wavaug {

// ---- model checkpoints ------------------------------------------------------
//
// Bit-exact container: magic "WAVG", u32 format version (little-endian),
// a manifest (architecture fields + tensor count + per-tensor shapes),
// raw little-endian f64 buffers for every parameter tensor and both
// normalization statistic sets, then a trailing CRC32 over everything
// after the magic.

void save_checkpoint(const std::string& path, const ModelState& model);
ModelState load_checkpoint(const std::string& path);

// CRC32 of a whole file; handy for bit-identity assertions.
std::uint32_t file_crc32(const std::string& path);

// ---- images -----------------------------------------------------------------

// Interleaved image in [0,1]; channels is 1 (gray) or 3 (RGB).
struct Image {
    std::size_t rows = 0, cols = 0, channels = 1;
    std::vector<double> data;

    static Image from_grid(const Grid& g);
    Grid to_grid() const;  // channel-averaged for RGB
};

// 8-bit PNG, no interlace. Writing uses filter type 0 on every scanline;
// reading understands filters 0-4 and verifies chunk CRCs.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// Binary PGM (P5), maxval 255, grayscale only.
void write_pgm(const std::string& path, const Grid& img);
Grid read_pgm(const std::string& path);

// ---- tabular / log output ---------------------------------------------------

// One CSV line per row; values written verbatim (callers format numbers).
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Appends one line (the caller passes serialized JSON) to a JSONL file.
void append_jsonl(const std::string& path, const std::string& json_line);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace wavaug

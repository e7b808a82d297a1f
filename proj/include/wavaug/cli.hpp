#pragma once
#include <cstddef>
#include <cstdint>
#include <string>

#include "wavaug/net.hpp"

namespace wavaug {

// Where a batch comes from: an IDX pair, a directory of PNG/PGM files with
// a labels.csv, or one of the seeded synthetic generators.
struct DatasetSource {
    enum class Format { idx, image_dir, synthetic };
    Format format = Format::synthetic;

    std::string images_path;  // idx: image tensor file
    std::string labels_path;  // idx: label vector file
    std::size_t pad_to = 32;  // idx: pad sides up to this (0 = keep)

    std::string dir;  // image-dir root containing labels.csv

    std::string generator = "shapes";  // shapes | blobs | probe
    std::size_t count = 512;
    std::uint64_t seed = 1;
    bool train_split = true;
};

// Loads and validates a batch: pixels in [0,1], labels nonnegative, counts
// consistent. Errors carry the offending path or spec.
Batch load_dataset(const DatasetSource& source);

// Writes the batch as 8-bit image files (format "png" or "pgm") named
// img_00000.<ext>... plus a manifest.json listing filenames, labels and a
// provenance note. Returns the manifest path.
std::string export_images(const Batch& batch, const std::string& dir,
                          const std::string& format,
                          const std::string& provenance = "wavaug export");

// Entry point behind the wavaug binary. Exit codes: 0 success, 1 invalid
// usage or configuration, 2 runtime failure.
int run_cli(int argc, const char* const* argv);

}  // namespace wavaug

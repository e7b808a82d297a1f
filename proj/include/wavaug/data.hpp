#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wavaug/grid.hpp"
#include "wavaug/net.hpp"

namespace wavaug {

// ---- synthetic shapes corpus ------------------------------------------------
//
// 32x32 grayscale renderings of four shape classes (disk, ring, square,
// cross) drawn as signed-distance fields with randomized position, rotation,
// anisotropy, size, contrast, focus blur, illumination ramp and sensor
// noise. A slice of every split sits deliberately near class boundaries:
// one-parameter morphs (disk<->ring hole radius, disk<->square corner
// sharpness, square<->cross arm fill) whose label is the side of a fixed
// boundary value, plus shrunken "hard" variants of each class. Shapes also
// carry a class-keyed fine dither (a few gray levels, phase-locked to the
// pixel grid) as a surface-texture cue that any blur, noise or quantization
// wipes out.

// n images with labels in {0..3}; identical (seed, train) inputs reproduce
// identical bytes.
Batch make_shapes(std::size_t n, std::uint64_t seed, bool train);

// Near-boundary disk/ring morphs only, margin pinned just outside the
// training band; used to probe attack behaviour on borderline inputs.
Batch make_boundary_probe(std::size_t n, std::uint64_t seed);

// Two linearly separable Gaussian blob classes (top-left vs bottom-right),
// for optimizer convergence checks.
Batch make_blobs(std::size_t n, std::uint64_t seed);

// ---- common corruptions -----------------------------------------------------

enum class Corruption {
    gaussian_noise,
    shot_noise,
    impulse_noise,
    defocus_blur,
    motion_blur,
    brightness,
    contrast,
    pixelate,
    jpeg_quantize,
};

inline constexpr int kCorruptionCount = 9;

const std::vector<Corruption>& all_corruptions();
std::string corruption_name(Corruption kind);
Corruption corruption_from_name(const std::string& name);

// Severity 0 is the identity (a copy); severities 1..5 apply the kind at
// increasing strength. Output is clipped to [0,1]. The seed pins the noise
// draws so every model is evaluated on the same corrupted pixels.
Grid corrupt(const Grid& img, Corruption kind, int severity, std::uint64_t seed);

// Convenience: corrupt every image of a batch, seeding per sample with
// seed0 + index.
Batch corrupt_batch(const Batch& batch, Corruption kind, int severity,
                    std::uint64_t seed0);

// ---- IDX container ----------------------------------------------------------

// Parses the classic big-endian IDX format: u8 image tensors under magic
// 0x00000803 (dims N,H,W) and u8 label vectors under magic 0x00000801.
// Pixels are scaled by 1/255 into [0,1].
std::vector<Grid> load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);

// Images + labels joined into a batch; image sides are padded (centered,
// edge-replicated) up to `pad_to` when nonzero (e.g. 28 -> 32).
Batch load_idx_batch(const std::string& image_path, const std::string& label_path,
                     std::size_t pad_to = 0);

// ---- helpers ----------------------------------------------------------------

Grid batch_image(const Batch& batch, std::size_t index);   // single-channel view
void set_batch_image(Batch& batch, std::size_t index, const Grid& img);

}  // namespace wavaug

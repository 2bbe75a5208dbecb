#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scoreag/models.hpp"
#include "scoreag/rng.hpp"
#include "scoreag/tensor.hpp"

namespace scoreag {

/// Image dataset with values in [0,1] and labels in {1..K}.
struct Dataset {
    Tensor images; // (n, C, H, W)
    std::vector<int> labels;
    int n_classes = 0;
    std::string split;      // train | eval
    std::string provenance; // synthetic-shapes | synthetic-2d | idx-file

    int64_t n() const { return images.shape.empty() ? 0 : images.shape[0]; }
    std::vector<int64_t> sample_shape() const;
    TrainData to_train_data() const;
};

/// K distinguishable grayscale glyph classes (bars, crosses, boxes, discs,
/// rings, ...) with mild pose and intensity jitter.
Dataset gen_shapes(int k, int n_per_class, int size, Rng& rng);

/// Two Gaussian blobs at the given separation (in sigma units), embedded as
/// 1x1x2 "images" rescaled into [0,1]. Only K = 2 is supported.
Dataset gen_blobs_2d(int k, int n_per_class, double separation, Rng& rng);

// IDX container (big-endian): 0x00 0x00, type code 0x08 (unsigned byte),
// dimension count, u32 sizes, raw payload.
struct IdxRaw {
    std::vector<int64_t> shape;
    std::vector<uint8_t> bytes;
};
IdxRaw read_idx_raw(const std::string& path);
/// u8 payload rescaled to [0,1] by /255.
Tensor read_idx(const std::string& path);
void write_idx_u8(const std::string& path, const std::vector<int64_t>& shape,
                  const std::vector<uint8_t>& bytes);
/// Quantizes unit-range values with round(v * 255).
void write_idx_unit(const std::string& path, const Tensor& t);

/// Label files follow the MNIST convention: 0-based on disk, 1-based in
/// memory.
std::vector<int> read_idx_labels(const std::string& path);
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                         const std::string& split);

/// Binary PGM (P5), for eyeballing single-channel images.
void write_pgm(const std::string& path, const Tensor& image, int64_t h, int64_t w);

} // namespace scoreag

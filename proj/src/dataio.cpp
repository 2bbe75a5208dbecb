#include "scoreag/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "scoreag/errors.hpp"

namespace scoreag {

std::vector<int64_t> Dataset::sample_shape() const {
    if (images.rank() != 4) throw ShapeError("Dataset: images must be (n,C,H,W)");
    return {images.shape[1], images.shape[2], images.shape[3]};
}

TrainData Dataset::to_train_data() const {
    TrainData td;
    int64_t nn = n();
    int64_t d = images.numel() / std::max<int64_t>(nn, 1);
    td.images = images.reshaped({nn, d});
    td.labels = labels;
    td.n_classes = n_classes;
    td.sample_shape = sample_shape();
    return td;
}

namespace {

// One glyph renderer per class; coordinates are centered and jittered.
void render_glyph(double* img, int size, int cls, Rng& rng) {
    double cx = size / 2.0 + rng.uniform(-size / 8.0, size / 8.0);
    double cy = size / 2.0 + rng.uniform(-size / 8.0, size / 8.0);
    double r = size * rng.uniform(0.28, 0.38);
    double amp = rng.uniform(0.6, 1.0);
    double th = std::max(1.0, size / 10.0);

    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double dx = x - cx, dy = y - cy;
            double adx = std::abs(dx), ady = std::abs(dy);
            double rad = std::sqrt(dx * dx + dy * dy);
            bool on = false;
            switch (cls) {
                case 1: on = ady <= th && adx <= r; break;                   // horizontal bar
                case 2: on = adx <= th && ady <= r; break;                   // vertical bar
                case 3: on = (ady <= th && adx <= r) || (adx <= th && ady <= r); break; // plus
                case 4: on = (std::abs(dx - dy) <= th || std::abs(dx + dy) <= th) &&
                             adx <= r && ady <= r; break;                    // X
                case 5: on = std::max(adx, ady) <= r && std::max(adx, ady) >= r - th; break; // box outline
                case 6: on = std::max(adx, ady) <= 0.75 * r; break;          // filled square
                case 7: on = rad <= 0.8 * r; break;                          // disc
                case 8: on = rad <= r && rad >= r - th; break;               // ring
                case 9: on = dy >= -r && dy <= r && adx <= (dy + r) * 0.5; break; // triangle
                case 10: {                                                   // checkerboard
                    double q = std::max(2.0, r / 1.5);
                    long bx = static_cast<long>(std::floor((dx + 4 * q) / q));
                    long by = static_cast<long>(std::floor((dy + 4 * q) / q));
                    on = adx <= r && ady <= r && ((bx + by) % 2 == 0);
                    break;
                }
                default: break;
            }
            if (on) img[y * size + x] = amp;
        }
    }
    // faint background noise, clipped into range
    for (int i = 0; i < size * size; ++i) {
        img[i] = std::min(1.0, img[i] + rng.uniform(0.0, 0.03));
    }
}

} // namespace

Dataset gen_shapes(int k, int n_per_class, int size, Rng& rng) {
    if (size < 8) throw ContractError("gen_shapes: size >= 8");
    if (n_per_class < 1) throw ContractError("gen_shapes: n_per_class >= 1");
    if (k < 2 || k > 10) throw ContractError("gen_shapes: k in {2..10}");
    int64_t n = static_cast<int64_t>(k) * n_per_class;
    Dataset ds;
    ds.images = Tensor::zeros({n, 1, size, size});
    ds.labels.reserve(static_cast<size_t>(n));
    ds.n_classes = k;
    ds.provenance = "synthetic-shapes";
    int64_t plane = static_cast<int64_t>(size) * size;
    int64_t i = 0;
    for (int c = 1; c <= k; ++c) {
        for (int j = 0; j < n_per_class; ++j, ++i) {
            render_glyph(ds.images.data.data() + i * plane, size, c, rng);
            ds.labels.push_back(c);
        }
    }
    return ds;
}

Dataset gen_blobs_2d(int k, int n_per_class, double separation, Rng& rng) {
    if (k != 2) throw ContractError("gen_blobs_2d: only K=2 is supported");
    if (n_per_class < 1) throw ContractError("gen_blobs_2d: n_per_class >= 1");
    if (separation < 0.0) throw ContractError("gen_blobs_2d: separation >= 0");
    int64_t n = 2LL * n_per_class;
    Dataset ds;
    ds.images = Tensor::zeros({n, 1, 1, 2});
    ds.labels.reserve(static_cast<size_t>(n));
    ds.n_classes = 2;
    ds.provenance = "synthetic-2d";
    double box = separation / 2.0 + 4.0; // center offset plus 4 sigma
    int64_t i = 0;
    for (int c = 1; c <= 2; ++c) {
        double mx = c == 1 ? -separation / 2.0 : separation / 2.0;
        for (int j = 0; j < n_per_class; ++j, ++i) {
            double x = mx + rng.normal();
            double y = rng.normal();
            double ux = (x + box) / (2.0 * box);
            double uy = (y + box) / (2.0 * box);
            ds.images.data[static_cast<size_t>(2 * i)] = std::min(1.0, std::max(0.0, ux));
            ds.images.data[static_cast<size_t>(2 * i + 1)] = std::min(1.0, std::max(0.0, uy));
            ds.labels.push_back(c);
        }
    }
    return ds;
}

// --------------------------------------------------------------------------
// IDX

namespace {

uint32_t read_u32_be(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void write_u32_be(std::ofstream& os, uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                    static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace

IdxRaw read_idx_raw(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open IDX file: " + path);
    std::vector<uint8_t> all((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (all.size() < 4) throw IdxTruncatedError("IDX header truncated in " + path);
    if (all[0] != 0 || all[1] != 0) throw IdxBadMagicError("bad IDX magic in " + path);
    if (all[2] != 0x08) {
        throw IdxUnsupportedTypeError("unsupported IDX type code " + std::to_string(all[2]) +
                                      " in " + path + " (only 0x08 unsigned byte)");
    }
    int ndims = all[3];
    if (ndims < 1 || ndims > 4) throw IdxUnsupportedTypeError("IDX rank " + std::to_string(ndims) +
                                                              " unsupported in " + path);
    size_t header = 4 + 4 * static_cast<size_t>(ndims);
    if (all.size() < header) throw IdxTruncatedError("IDX dimension list truncated in " + path);
    IdxRaw raw;
    int64_t count = 1;
    for (int i = 0; i < ndims; ++i) {
        uint32_t dim = read_u32_be(all.data() + 4 + 4 * i);
        raw.shape.push_back(static_cast<int64_t>(dim));
        count *= dim;
    }
    size_t expected = header + static_cast<size_t>(count);
    if (all.size() != expected) {
        throw IdxTruncatedError("IDX payload size mismatch in " + path + ": expected " +
                                std::to_string(expected) + " bytes, got " + std::to_string(all.size()));
    }
    raw.bytes.assign(all.begin() + static_cast<long>(header), all.end());
    return raw;
}

Tensor read_idx(const std::string& path) {
    IdxRaw raw = read_idx_raw(path);
    Tensor t = Tensor::zeros(raw.shape);
    for (size_t i = 0; i < raw.bytes.size(); ++i) {
        t.data[i] = static_cast<double>(raw.bytes[i]) / 255.0;
    }
    return t;
}

void write_idx_u8(const std::string& path, const std::vector<int64_t>& shape,
                  const std::vector<uint8_t>& bytes) {
    if (shape.empty() || shape.size() > 4) throw ContractError("write_idx_u8: rank 1..4");
    if (shape_numel(shape) != static_cast<int64_t>(bytes.size())) {
        throw ShapeError("write_idx_u8: payload size mismatch");
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open IDX file for writing: " + path);
    uint8_t header[4] = {0, 0, 0x08, static_cast<uint8_t>(shape.size())};
    os.write(reinterpret_cast<const char*>(header), 4);
    for (int64_t d : shape) write_u32_be(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("failed writing IDX file: " + path);
}

void write_idx_unit(const std::string& path, const Tensor& t) {
    std::vector<uint8_t> bytes(t.data.size());
    for (size_t i = 0; i < t.data.size(); ++i) {
        double v = std::min(1.0, std::max(0.0, t.data[i]));
        bytes[i] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    write_idx_u8(path, t.shape, bytes);
}

std::vector<int> read_idx_labels(const std::string& path) {
    IdxRaw raw = read_idx_raw(path);
    if (raw.shape.size() != 1) throw ShapeError("labels IDX must be rank-1: " + path);
    std::vector<int> out(raw.bytes.size());
    for (size_t i = 0; i < raw.bytes.size(); ++i) out[i] = static_cast<int>(raw.bytes[i]) + 1;
    return out;
}

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
    std::vector<uint8_t> bytes(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 1 || labels[i] > 256) throw ContractError("write_idx_labels: label out of range");
        bytes[i] = static_cast<uint8_t>(labels[i] - 1);
    }
    write_idx_u8(path, {static_cast<int64_t>(labels.size())}, bytes);
}

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                         const std::string& split) {
    Tensor images = read_idx(images_path);
    std::vector<int> labels = read_idx_labels(labels_path);
    if (images.rank() == 3) {
        images = images.reshaped({images.shape[0], 1, images.shape[1], images.shape[2]});
    }
    if (images.rank() != 4) throw ShapeError("image IDX must be rank-3 or rank-4: " + images_path);
    if (images.shape[0] != static_cast<int64_t>(labels.size())) {
        throw ShapeError("image/label count mismatch: " + std::to_string(images.shape[0]) + " vs " +
                         std::to_string(labels.size()));
    }
    Dataset ds;
    ds.images = std::move(images);
    ds.labels = std::move(labels);
    ds.n_classes = *std::max_element(ds.labels.begin(), ds.labels.end());
    ds.split = split;
    ds.provenance = "idx-file";
    return ds;
}

void write_pgm(const std::string& path, const Tensor& image, int64_t h, int64_t w) {
    if (image.numel() != h * w) throw ShapeError("write_pgm: element count mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open PGM file: " + path);
    os << "P5\n" << w << " " << h << "\n255\n";
    for (int64_t i = 0; i < h * w; ++i) {
        double v = std::min(1.0, std::max(0.0, image.data[static_cast<size_t>(i)]));
        char b = static_cast<char>(std::lround(v * 255.0));
        os.write(&b, 1);
    }
}

} // namespace scoreag

#include "relaybp/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "relaybp/errors.hpp"
#include "relaybp/rng.hpp"

namespace relaybp {

namespace {

// 5x7 digit glyphs, one row per line, MSB-left in the low 5 bits.
constexpr std::uint8_t kGlyphs[10][7] = {
    {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110},  // 0
    {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110},  // 1
    {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111},  // 2
    {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110},  // 3
    {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010},  // 4
    {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110},  // 5
    {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110},  // 6
    {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000},  // 7
    {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110},  // 8
    {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100},  // 9
};

double glyph_at(int digit, double gx, double gy) {
    // Bilinear sample over cell centers; outside the 5x7 grid is ink-free.
    const int x0 = static_cast<int>(std::floor(gx));
    const int y0 = static_cast<int>(std::floor(gy));
    auto cell = [digit](int x, int y) -> double {
        if (x < 0 || x >= 5 || y < 0 || y >= 7) return 0.0;
        return (kGlyphs[digit][y] >> (4 - x)) & 1 ? 1.0 : 0.0;
    };
    const double fx = gx - x0, fy = gy - y0;
    return cell(x0, y0) * (1 - fx) * (1 - fy) + cell(x0 + 1, y0) * fx * (1 - fy) +
           cell(x0, y0 + 1) * (1 - fx) * fy + cell(x0 + 1, y0 + 1) * fx * fy;
}

double uniform_in(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * rng.next_double();
}

// Render one digit. Per-sample draw order is fixed: class, rotation, shear,
// scale x/y, center jitter x/y, intensity, then per-pixel noise.
void render_sample(Rng& rng, std::uint8_t* pixels, std::uint8_t* label) {
    const int digit = static_cast<int>(rng.next_below(10));
    *label = static_cast<std::uint8_t>(digit);

    const double theta = uniform_in(rng, -0.35, 0.35);
    const double shear = uniform_in(rng, -0.30, 0.30);
    const double sx = uniform_in(rng, 2.0, 3.8);
    const double sy = uniform_in(rng, 2.0, 3.8);
    const double cx = 13.5 + uniform_in(rng, -3.0, 3.0);
    const double cy = 13.5 + uniform_in(rng, -3.0, 3.0);
    const double intensity = uniform_in(rng, 0.55, 1.0);

    // Forward map glyph -> image: p = R(theta) * Shear * diag(sx, sy) * g.
    const double ct = std::cos(theta), st = std::sin(theta);
    const double a = ct * sx + (-st) * 0.0, b = ct * (shear * sy) + (-st) * sy;
    const double c = st * sx + ct * 0.0, d = st * (shear * sy) + ct * sy;
    const double det = a * d - b * c;
    const double ia = d / det, ib = -b / det, ic = -c / det, id = a / det;

    for (int y = 0; y < 28; ++y) {
        for (int x = 0; x < 28; ++x) {
            const double px = x - cx, py = y - cy;
            const double gx = ia * px + ib * py + 2.0;  // glyph center (2, 3)
            const double gy = ic * px + id * py + 3.0;
            double v = intensity * glyph_at(digit, gx, gy);
            v += 0.18 * rng.next_normal();
            v = std::clamp(v, 0.0, 1.0);
            pixels[y * 28 + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    }
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_split(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, Index count, Rng rng) {
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(count) * 28 * 28);
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i)
        render_sample(rng, pixels.data() + static_cast<std::size_t>(i) * 28 * 28, &labels[i]);

    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot open '" + images_path.string() + "' for writing");
    write_be32(img, 2051);
    write_be32(img, static_cast<std::uint32_t>(count));
    write_be32(img, 28);
    write_be32(img, 28);
    img.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
    if (!img) throw IoError("write failed on '" + images_path.string() + "'");

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("cannot open '" + labels_path.string() + "' for writing");
    write_be32(lab, 2049);
    write_be32(lab, static_cast<std::uint32_t>(count));
    lab.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
    if (!lab) throw IoError("write failed on '" + labels_path.string() + "'");
}

}  // namespace

SynthPaths write_synth_idx_dataset(const std::filesystem::path& dir, const SynthOptions& opt) {
    if (opt.train_count < 1 || opt.test_count < 1)
        throw ConfigError("synthetic dataset needs positive train and test counts");
    std::filesystem::create_directories(dir);
    SynthPaths paths;
    paths.train_images = dir / "train-images-idx3-ubyte";
    paths.train_labels = dir / "train-labels-idx1-ubyte";
    paths.test_images = dir / "t10k-images-idx3-ubyte";
    paths.test_labels = dir / "t10k-labels-idx1-ubyte";
    write_split(paths.train_images, paths.train_labels, opt.train_count,
                Rng(opt.seed).fork(0x7472));  // train stream
    write_split(paths.test_images, paths.test_labels, opt.test_count,
                Rng(opt.seed).fork(0x7465));  // test stream
    return paths;
}

}  // namespace relaybp

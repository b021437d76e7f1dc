#include "relaybp/dataio.hpp"

#include <fstream>

namespace relaybp {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed on '" + path.string() + "'");
    return bytes;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off,
                        const std::filesystem::path& path) {
    if (off + 4 > b.size())
        throw FormatError("'" + path.string() + "' truncated inside its header");
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

}  // namespace

Dataset load_idx_dataset(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);

    const std::uint32_t img_magic = read_be32(img, 0, images_path);
    if (img_magic != 2051)
        throw FormatError("'" + images_path.string() + "': bad magic " +
                          std::to_string(img_magic) + ", expected 2051 for an IDX image file");
    const std::uint32_t count = read_be32(img, 4, images_path);
    const std::uint32_t rows = read_be32(img, 8, images_path);
    const std::uint32_t cols = read_be32(img, 12, images_path);
    const std::size_t expect = 16 + std::size_t(count) * rows * cols;
    if (img.size() < expect)
        throw FormatError("'" + images_path.string() + "' truncated: holds " +
                          std::to_string(img.size()) + " bytes, needs " +
                          std::to_string(expect) + " for " + std::to_string(count) + " images");

    const std::uint32_t lab_magic = read_be32(lab, 0, labels_path);
    if (lab_magic != 2049)
        throw FormatError("'" + labels_path.string() + "': bad magic " +
                          std::to_string(lab_magic) + ", expected 2049 for an IDX label file");
    const std::uint32_t lab_count = read_be32(lab, 4, labels_path);
    if (lab_count != count)
        throw FormatError("image/label count mismatch: " + std::to_string(count) +
                          " images vs " + std::to_string(lab_count) + " labels");
    if (lab.size() < 8 + std::size_t(count))
        throw FormatError("'" + labels_path.string() + "' truncated: holds " +
                          std::to_string(lab.size()) + " bytes, needs " +
                          std::to_string(8 + std::size_t(count)));

    Dataset d;
    d.count = static_cast<Index>(count);
    d.channels = 1;
    d.height = static_cast<Index>(rows);
    d.width = static_cast<Index>(cols);
    d.pixels.assign(img.begin() + 16, img.begin() + static_cast<std::ptrdiff_t>(expect));
    d.labels.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) d.labels.push_back(lab[8 + i]);
    return d;
}

Dataset load_cifar_bin(const std::vector<std::filesystem::path>& files) {
    constexpr std::size_t kRecord = 1 + 3 * 32 * 32;  // 3073
    Dataset d;
    d.channels = 3;
    d.height = 32;
    d.width = 32;
    for (const auto& path : files) {
        const auto bytes = read_file(path);
        if (bytes.empty() || bytes.size() % kRecord != 0)
            throw FormatError("'" + path.string() + "' holds " + std::to_string(bytes.size()) +
                              " bytes, not a multiple of the 3073-byte record (1 label + "
                              "3x32x32 pixels)");
        const std::size_t n = bytes.size() / kRecord;
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint8_t* rec = bytes.data() + i * kRecord;
            if (rec[0] > 9)
                throw FormatError("'" + path.string() + "' record " + std::to_string(i) +
                                  " has label " + std::to_string(rec[0]) + ", expected 0..9");
            d.labels.push_back(rec[0]);
            d.pixels.insert(d.pixels.end(), rec + 1, rec + kRecord);
        }
        d.count += static_cast<Index>(n);
    }
    if (d.count == 0) throw FormatError("no records loaded; empty file list");
    return d;
}

}  // namespace relaybp

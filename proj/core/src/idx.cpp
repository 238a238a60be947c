#include <fstream>
#include <iterator>

#include "ld/datasets.hpp"
#include "ld/errors.hpp"

namespace ld {
namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) | (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) | static_cast<std::uint32_t>(bytes[offset + 3]);
}

void require_bytes(std::span<const std::uint8_t> bytes, std::size_t needed, const std::string& source) {
  if (bytes.size() < needed) {
    throw IdxError(IdxError::Kind::truncated, source + ": truncated IDX file (" + std::to_string(bytes.size()) +
                                                  " bytes, need " + std::to_string(needed) + ")");
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetNotFound("cannot open dataset file " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

Tensor parse_idx_images(std::span<const std::uint8_t> bytes, const std::string& source) {
  require_bytes(bytes, 4, source);
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImagesMagic) {
    throw IdxError(IdxError::Kind::bad_magic, source + ": bad IDX image magic " + std::to_string(magic));
  }
  require_bytes(bytes, 16, source);
  const std::size_t n = read_be32(bytes, 4);
  const std::size_t h = read_be32(bytes, 8);
  const std::size_t w = read_be32(bytes, 12);
  require_bytes(bytes, 16 + n * h * w, source);
  Tensor images({n, h, w});
  for (std::size_t i = 0; i < n * h * w; ++i) images[i] = static_cast<double>(bytes[16 + i]) / 255.0;
  return images;
}

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes, const std::string& source) {
  require_bytes(bytes, 4, source);
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabelsMagic) {
    throw IdxError(IdxError::Kind::bad_magic, source + ": bad IDX label magic " + std::to_string(magic));
  }
  require_bytes(bytes, 8, source);
  const std::size_t n = read_be32(bytes, 4);
  require_bytes(bytes, 8 + n, source);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = bytes[8 + i];
  return labels;
}

LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto image_bytes = read_file(images_path);
  const auto label_bytes = read_file(labels_path);
  LabeledDataset ds;
  ds.images = parse_idx_images(image_bytes, images_path.string());
  ds.labels = parse_idx_labels(label_bytes, labels_path.string());
  if (ds.images.shape()[0] != ds.labels.size()) {
    throw IdxError(IdxError::Kind::count_mismatch,
                   "IDX count mismatch: " + std::to_string(ds.images.shape()[0]) + " images vs " +
                       std::to_string(ds.labels.size()) + " labels");
  }
  int max_label = -1;
  for (int l : ds.labels) max_label = std::max(max_label, l);
  ds.num_classes = static_cast<std::size_t>(max_label + 1);
  ds.name = images_path.parent_path().filename().string();
  return ds;
}

}  // namespace ld

#ifndef UAPR_DATASET_HPP_
#define UAPR_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uapr/tensor.hpp"

namespace uapr {

enum class SynthFamily {
  // Oriented sinusoidal gratings; class fixes orientation and frequency.
  kGratings,
  // Two superimposed gratings per class. Used as an unrelated corpus for
  // generic feature pre-training.
  kPlaids,
};

struct SynthSpec {
  int num_classes = 8;
  int per_class = 40;
  int base_size = 64;
  std::uint64_t seed = 0;
  int queries_per_class = 1;
  SynthFamily family = SynthFamily::kGratings;
  double contrast = 12.0;     // grating amplitude on the 0-255 scale
  double noise_sigma = 8.0;   // additive Gaussian pixel noise
  double size_jitter = 0.25;  // relative spread of each side around base_size
};

struct Provenance {
  enum class Kind { kSynthetic, kFolder };
  Kind kind = Kind::kSynthetic;
  std::string description;
};

// Labeled image corpus with a disjoint query/reference split. Images are
// [C,H,W] tensors with values in [0,255] and may differ in size.
struct RetrievalDataset {
  std::vector<Tensor> images;
  std::vector<int> labels;
  std::vector<int> query_indices;
  std::vector<int> reference_indices;
  Provenance provenance;

  std::size_t size() const { return images.size(); }
  int num_classes() const;
  // Throws ConfigurationError when an invariant is violated.
  void validate() const;
  // FNV-1a digest of pixels, labels and split, as 16 hex digits.
  std::string hash() const;
};

RetrievalDataset synth_generate(const SynthSpec& spec);

// Reads `labels.csv` (filename,label,split with split in {query,reference})
// and the PNG files it names. Problems are collected and reported together.
RetrievalDataset ingest_folder(const std::filesystem::path& dir);
void export_folder(const RetrievalDataset& dataset, const std::filesystem::path& dir);

// 8-bit PNG I/O for [C,H,W] tensors with C in {1,3}. Values are rounded and
// clamped to [0,255] on write.
Tensor read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Tensor& image);

}  // namespace uapr

#endif  // UAPR_DATASET_HPP_

#ifndef UAPR_CONTAINER_HPP_
#define UAPR_CONTAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "uapr/tensor.hpp"

namespace uapr {

// Versioned binary container shared by checkpoints, perturbations and
// landmark models.
//
//   bytes 0-7   magic "UAPRBIN\0"
//   u32         format version (kContainerVersion)
//   u32, bytes  kind tag ("model", "perturbation", "landmarks")
//   u64, bytes  JSON header (architecture, metadata)
//   u32         block count, then per block:
//                 u32, bytes  block name
//                 u32         rank, then rank x u64 extents
//                 f64[]       values, row-major
//   u64         FNV-1a checksum of all preceding bytes
//
// Integers and floats are little-endian.
inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
  std::string kind;
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> blocks;

  const Tensor& block(const std::string& name) const;
};

void write_container(const std::filesystem::path& path, const Container& c);
// Throws FormatError on truncation, checksum mismatch, unknown version or an
// unexpected kind (when `expected_kind` is non-empty).
Container read_container(const std::filesystem::path& path, const std::string& expected_kind = "");

}  // namespace uapr

#endif  // UAPR_CONTAINER_HPP_

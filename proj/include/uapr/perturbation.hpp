#ifndef UAPR_PERTURBATION_HPP_
#define UAPR_PERTURBATION_HPP_

#include <filesystem>

#include "json.hpp"
#include "uapr/tensor.hpp"

namespace uapr {

// Universal perturbation stored at its base resolution, bounded by
// ||delta||_inf <= epsilon on the 0-255 pixel scale.
struct Perturbation {
  Tensor delta;  // [C, base_h, base_w]
  double epsilon = 10.0;
  // Training summary; echoed into the file header.
  nlohmann::json info = nlohmann::json::object();

  static Perturbation zeros(Index channels, Index h, Index w, double epsilon) {
    return {Tensor(Shape{channels, h, w}), epsilon, nlohmann::json::object()};
  }
  double linf() const { return delta.values().abs().maxCoeff(); }
  bool within_budget() const { return linf() <= epsilon; }
};

void save_perturbation(const Perturbation& p, const std::filesystem::path& path);
Perturbation load_perturbation(const std::filesystem::path& path);

// 8-bit visualization: [-epsilon, epsilon] mapped affinely onto [0, 255].
void export_perturbation_png(const Perturbation& p, const std::filesystem::path& path);

}  // namespace uapr

#endif  // UAPR_PERTURBATION_HPP_

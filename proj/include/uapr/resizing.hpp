#ifndef UAPR_RESIZING_HPP_
#define UAPR_RESIZING_HPP_

#include <cstdint>
#include <utility>

#include "uapr/autodiff.hpp"

namespace uapr {

enum class ResizeMode {
  kRandom,  // sides drawn from [min_side, max_side] under the aspect bound
  kFixed,   // always fixed_h x fixed_w
  kNative,  // images are used at their stored size
};

struct ResizePolicy {
  int min_side = 32;
  int max_side = 96;
  double aspect_distortion_bound = 0.15;
  std::uint64_t seed = 0;
  ResizeMode mode = ResizeMode::kRandom;
  int fixed_h = 64;
  int fixed_w = 64;

  static ResizePolicy random(int min_side, int max_side, std::uint64_t seed = 0,
                             double bound = 0.15) {
    return {min_side, max_side, bound, seed, ResizeMode::kRandom, 64, 64};
  }
  static ResizePolicy fixed(int h, int w) { return {h, h, 0.0, 0, ResizeMode::kFixed, h, w}; }
  static ResizePolicy native() { return {1, 1, 0.0, 0, ResizeMode::kNative, 0, 0}; }

  void validate() const;
};

struct ImageSize {
  Index h = 0;
  Index w = 0;
  bool operator==(const ImageSize&) const = default;
};

// Target size for an H x W image. Deterministic in (policy.seed, draw_index).
// In random mode W' is drawn uniformly, then H' uniformly among the sides
// that satisfy |W'/W - H'/H| <= bound; when no integer side fits (tiny
// bounds) the isotropically rounded side is used. Throws ConfigurationError
// after 1000 rejected draws.
ImageSize draw_size(const ResizePolicy& policy, Index h, Index w, std::uint64_t draw_index);

// R_I: resize an image [C,H,W] to the drawn size.
std::pair<Tensor, ImageSize> random_input_resize(const ResizePolicy& policy, const Tensor& image,
                                                 std::uint64_t draw_index);

// Non-differentiable bilinear resize of a plain tensor.
Tensor resize_image(const Tensor& image, Index h, Index w);

// R_P: bilinear resize of the base-resolution perturbation, differentiable
// back to the base tensor.
Var perturbation_resize(Var delta, Index target_h, Index target_w);

// clamp(image + delta, 0, 255).
Var apply_perturbation(Var image_resized, Var delta_resized);

}  // namespace uapr

#endif  // UAPR_RESIZING_HPP_

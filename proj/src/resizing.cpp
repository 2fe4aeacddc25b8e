#include "uapr/resizing.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "uapr/random.hpp"

namespace uapr {

void ResizePolicy::validate() const {
  switch (mode) {
    case ResizeMode::kRandom:
      if (min_side < 1 || min_side > max_side) {
        throw ConfigurationError("resize policy needs 1 <= min_side <= max_side");
      }
      if (!(aspect_distortion_bound >= 0.0)) {
        throw ConfigurationError("aspect distortion bound must be non-negative");
      }
      break;
    case ResizeMode::kFixed:
      if (fixed_h < 1 || fixed_w < 1) throw ConfigurationError("fixed resize size must be positive");
      break;
    case ResizeMode::kNative:
      break;
  }
}

ImageSize draw_size(const ResizePolicy& policy, Index h, Index w, std::uint64_t draw_index) {
  policy.validate();
  switch (policy.mode) {
    case ResizeMode::kNative: return {h, w};
    case ResizeMode::kFixed: return {policy.fixed_h, policy.fixed_w};
    case ResizeMode::kRandom: break;
  }
  std::mt19937_64 rng = keyed_rng(policy.seed, draw_index);
  std::uniform_int_distribution<int> side(policy.min_side, policy.max_side);
  const double b = policy.aspect_distortion_bound;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const int new_w = side(rng);
    const double ratio = static_cast<double>(new_w) / static_cast<double>(w);
    const double hd = static_cast<double>(h);
    const int lo = std::max<int>(policy.min_side, static_cast<int>(std::ceil(hd * (ratio - b) - 1e-9)));
    const int hi = std::min<int>(policy.max_side, static_cast<int>(std::floor(hd * (ratio + b) + 1e-9)));
    if (lo <= hi) {
      std::uniform_int_distribution<int> pick(lo, hi);
      return {pick(rng), new_w};
    }
    const auto iso = static_cast<int>(std::lround(hd * ratio));
    if (iso >= policy.min_side && iso <= policy.max_side && iso >= 1) return {iso, new_w};
  }
  throw ConfigurationError("resize policy unsatisfiable for a " + std::to_string(h) + "x" +
                           std::to_string(w) + " image after 1000 draws");
}

Tensor resize_image(const Tensor& image, Index h, Index w) {
  if (image.rank() >= 2 && image.dim(image.rank() - 2) == h && image.dim(image.rank() - 1) == w) {
    return image;
  }
  Tape tape;
  return bilinear_resize(tape.constant(image), h, w).value();
}

std::pair<Tensor, ImageSize> random_input_resize(const ResizePolicy& policy, const Tensor& image,
                                                 std::uint64_t draw_index) {
  if (image.rank() != 3) throw DimensionError("expected [C,H,W] image, got " + image.shape().str());
  const ImageSize size = draw_size(policy, image.dim(1), image.dim(2), draw_index);
  return {resize_image(image, size.h, size.w), size};
}

Var perturbation_resize(Var delta, Index target_h, Index target_w) {
  return bilinear_resize(delta, target_h, target_w);
}

Var apply_perturbation(Var image_resized, Var delta_resized) {
  if (image_resized.shape() != delta_resized.shape()) {
    throw DimensionError("cannot compose image " + image_resized.shape().str() +
                         " with perturbation " + delta_resized.shape().str());
  }
  return clamp(add(image_resized, delta_resized), 0.0, 255.0);
}

}  // namespace uapr

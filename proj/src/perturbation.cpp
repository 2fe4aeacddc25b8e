#include "uapr/perturbation.hpp"

#include "uapr/container.hpp"
#include "uapr/dataset.hpp"

namespace uapr {

void save_perturbation(const Perturbation& p, const std::filesystem::path& path) {
  Container c;
  c.kind = "perturbation";
  c.header["epsilon"] = p.epsilon;
  c.header["shape"] = p.delta.shape().dims();
  c.header["info"] = p.info;
  c.blocks.emplace_back("delta", p.delta);
  write_container(path, c);
}

Perturbation load_perturbation(const std::filesystem::path& path) {
  const Container c = read_container(path, "perturbation");
  Perturbation p;
  try {
    p.epsilon = c.header.at("epsilon").get<double>();
    p.info = c.header.value("info", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": incomplete perturbation header: " + e.what());
  }
  p.delta = c.block("delta");
  if (p.delta.rank() != 3) throw FormatError(path.string() + ": perturbation must be [C,H,W]");
  if (!p.within_budget()) throw FormatError(path.string() + ": stored perturbation exceeds its budget");
  return p;
}

void export_perturbation_png(const Perturbation& p, const std::filesystem::path& path) {
  Tensor img = p.delta;
  if (p.epsilon > 0.0) {
    img.values() = (img.values() + p.epsilon) * (255.0 / (2.0 * p.epsilon));
  } else {
    img.values().setConstant(127.5);
  }
  write_png(path, img);
}

}  // namespace uapr

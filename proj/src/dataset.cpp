#include "uapr/dataset.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace uapr {

namespace fs = std::filesystem;

int RetrievalDataset::num_classes() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

void RetrievalDataset::validate() const {
  if (labels.size() != images.size()) {
    throw ConfigurationError("dataset has " + std::to_string(images.size()) + " images but " +
                             std::to_string(labels.size()) + " labels");
  }
  const auto n = static_cast<int>(images.size());
  std::set<int> queries(query_indices.begin(), query_indices.end());
  std::map<int, int> refs_per_class;
  for (int r : reference_indices) {
    if (r < 0 || r >= n) throw ConfigurationError("reference index out of range");
    if (queries.count(r)) {
      throw ConfigurationError("image " + std::to_string(r) + " is both query and reference");
    }
    ++refs_per_class[labels[static_cast<std::size_t>(r)]];
  }
  for (int q : query_indices) {
    if (q < 0 || q >= n) throw ConfigurationError("query index out of range");
    if (!refs_per_class.count(labels[static_cast<std::size_t>(q)])) {
      throw ConfigurationError("query " + std::to_string(q) + " has no reference of its class");
    }
  }
  for (const Tensor& img : images) {
    if (img.rank() != 3) throw ConfigurationError("images must be [C,H,W], got " + img.shape().str());
    if ((img.values() < 0.0).any() || (img.values() > 255.0).any()) {
      throw ConfigurationError("image values must lie in [0,255]");
    }
  }
}

std::string RetrievalDataset::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (Index d : images[i].shape().dims()) mix(&d, sizeof d);
    mix(images[i].data(), static_cast<std::size_t>(images[i].size()) * sizeof(double));
    mix(&labels[i], sizeof(int));
  }
  for (int q : query_indices) mix(&q, sizeof q);
  const int sep = -1;
  mix(&sep, sizeof sep);
  for (int r : reference_indices) mix(&r, sizeof r);
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

namespace {

struct Grating {
  double angle;   // radians
  double cycles;  // periods across the image width
};

std::vector<Grating> class_gratings(const SynthSpec& spec, int c) {
  const double pi = std::numbers::pi;
  const double n = spec.num_classes;
  switch (spec.family) {
    case SynthFamily::kGratings:
      return {{pi * c / n, 3.0 + 1.5 * (c % 3)}};
    case SynthFamily::kPlaids:
      return {{pi * (c + 0.5) / n, 2.5 + (c % 2)}, {pi * (c + 0.5) / n + pi / 3.0, 5.0 + 1.5 * (c % 3)}};
  }
  return {};
}

}  // namespace

RetrievalDataset synth_generate(const SynthSpec& spec) {
  if (spec.num_classes < 2) throw ConfigurationError("synthetic corpus needs at least 2 classes");
  if (spec.per_class < 1 || spec.base_size < 8) {
    throw ConfigurationError("synthetic corpus needs per_class >= 1 and base_size >= 8");
  }
  if (spec.queries_per_class < 0 || spec.queries_per_class >= spec.per_class) {
    throw ConfigurationError("queries_per_class must leave at least one reference per class");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  const double pi = std::numbers::pi;

  RetrievalDataset ds;
  for (int c = 0; c < spec.num_classes; ++c) {
    const std::vector<Grating> base = class_gratings(spec, c);
    for (int k = 0; k < spec.per_class; ++k) {
      const auto side = [&] {
        return std::max<Index>(8, std::lround(spec.base_size * (1.0 + spec.size_jitter * unit(rng))));
      };
      const Index h = side();
      const Index w = side();
      std::vector<Grating> g = base;
      std::vector<double> phase;
      for (Grating& gr : g) {
        gr.angle += unit(rng) * (4.0 * pi / 180.0);
        gr.cycles *= 1.0 + 0.08 * unit(rng);
        phase.push_back(unit(rng) * pi / 3.0);
      }
      double gain[3];
      for (double& gn : gain) gn = 1.0 + 0.3 * unit(rng);

      Tensor img(Shape{3, h, w});
      for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) {
          // Normalized coordinates keep the pattern scale-free across image sizes.
          const double u = static_cast<double>(x) / static_cast<double>(w);
          const double v = static_cast<double>(y) / static_cast<double>(h);
          double s = 0.0;
          for (std::size_t j = 0; j < g.size(); ++j) {
            s += std::cos(2.0 * pi * g[j].cycles * (u * std::cos(g[j].angle) + v * std::sin(g[j].angle)) +
                          phase[j]);
          }
          s /= static_cast<double>(g.size());
          for (Index ch = 0; ch < 3; ++ch) {
            const double val = 128.0 + spec.contrast * gain[ch] * s + noise(rng);
            img[(ch * h + y) * w + x] = std::clamp(std::round(val), 0.0, 255.0);
          }
        }
      }
      const int idx = static_cast<int>(ds.images.size());
      ds.images.push_back(std::move(img));
      ds.labels.push_back(c);
      (k < spec.queries_per_class ? ds.query_indices : ds.reference_indices).push_back(idx);
    }
  }
  std::ostringstream desc;
  desc << (spec.family == SynthFamily::kGratings ? "gratings" : "plaids") << ":classes="
       << spec.num_classes << ",per_class=" << spec.per_class << ",base=" << spec.base_size
       << ",seed=" << spec.seed << ",contrast=" << spec.contrast;
  ds.provenance = {Provenance::Kind::kSynthetic, desc.str()};
  return ds;
}

Tensor read_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  const Index h = image.height, w = image.width;
  Tensor t(Shape{3, h, w});
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      for (Index c = 0; c < 3; ++c) t[(c * h + y) * w + x] = buf[static_cast<std::size_t>((y * w + x) * 3 + c)];
    }
  }
  return t;
}

void write_png(const fs::path& path, const Tensor& img) {
  if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3)) {
    throw DimensionError("write_png expects [1|3,H,W], got " + img.shape().str());
  }
  const Index c = img.dim(0), h = img.dim(1), w = img.dim(2);
  std::vector<png_byte> buf(static_cast<std::size_t>(c * h * w));
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      for (Index ch = 0; ch < c; ++ch) {
        buf[static_cast<std::size_t>((y * w + x) * c + ch)] =
            static_cast<png_byte>(std::clamp(std::round(img[(ch * h + y) * w + x]), 0.0, 255.0));
      }
    }
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw FormatError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

RetrievalDataset ingest_folder(const fs::path& dir) {
  const fs::path labels_path = dir / "labels.csv";
  std::ifstream in(labels_path);
  if (!in) throw IngestionError("missing labels file " + labels_path.string());

  RetrievalDataset ds;
  std::vector<std::string> problems;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line.rfind("filename,", 0) == 0)) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    const std::string where = "labels.csv:" + std::to_string(line_no);
    if (fields.size() != 3) {
      problems.push_back(where + ": expected filename,label,split");
      continue;
    }
    int label = -1;
    try {
      label = std::stoi(fields[1]);
    } catch (const std::exception&) {
    }
    if (label < 0) {
      problems.push_back(where + ": missing or invalid label for " + fields[0]);
      continue;
    }
    if (fields[2] != "query" && fields[2] != "reference") {
      problems.push_back(where + ": split must be query or reference, got '" + fields[2] + "'");
      continue;
    }
    const fs::path img_path = dir / fields[0];
    if (!fs::exists(img_path)) {
      problems.push_back(where + ": image file not found: " + fields[0]);
      continue;
    }
    try {
      ds.images.push_back(read_png(img_path));
    } catch (const Error& e) {
      problems.push_back(where + ": unreadable image " + fields[0] + " (" + e.what() + ")");
      continue;
    }
    const int idx = static_cast<int>(ds.labels.size());
    ds.labels.push_back(label);
    (fields[2] == "query" ? ds.query_indices : ds.reference_indices).push_back(idx);
  }
  if (problems.empty()) {
    std::set<int> ref_classes;
    for (int r : ds.reference_indices) ref_classes.insert(ds.labels[static_cast<std::size_t>(r)]);
    for (int q : ds.query_indices) {
      if (!ref_classes.count(ds.labels[static_cast<std::size_t>(q)])) {
        problems.push_back("query class " + std::to_string(ds.labels[static_cast<std::size_t>(q)]) +
                           " has zero references");
      }
    }
  }
  if (!problems.empty()) {
    std::string msg = "ingestion of " + dir.string() + " failed:";
    for (const std::string& p : problems) msg += "\n  " + p;
    throw IngestionError(msg);
  }
  ds.provenance = {Provenance::Kind::kFolder, dir.string()};
  ds.validate();
  return ds;
}

void export_folder(const RetrievalDataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<std::string> split(ds.size(), "");
  for (int q : ds.query_indices) split[static_cast<std::size_t>(q)] = "query";
  for (int r : ds.reference_indices) split[static_cast<std::size_t>(r)] = "reference";
  std::ofstream out(dir / "labels.csv");
  out << "filename,label,split\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (split[i].empty()) continue;
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.png", i);
    write_png(dir / name, ds.images[i]);
    out << name << ',' << ds.labels[i] << ',' << split[i] << '\n';
  }
  if (!out) throw FormatError("cannot write " + (dir / "labels.csv").string());
}

}  // namespace uapr

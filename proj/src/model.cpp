#include "uapr/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "uapr/container.hpp"

namespace uapr {

const char* pooling_name(Pooling p) { return p == Pooling::kMac ? "mac" : "gem"; }

Pooling parse_pooling(const std::string& name) {
  if (name == "mac") return Pooling::kMac;
  if (name == "gem") return Pooling::kGem;
  throw ConfigurationError("unknown pooling '" + name + "' (expected mac or gem)");
}

void ModelSpec::validate() const {
  if (in_channels < 1 || layers.empty()) throw ConfigurationError("model needs input channels and layers");
  for (const ConvLayerSpec& l : layers) {
    if (l.out_channels < 1 || l.kernel < 1 || l.stride < 1 || l.padding < 0) {
      throw ConfigurationError("invalid convolution layer specification");
    }
  }
  if (pooling == Pooling::kGem && !(gem_p >= 1.0)) throw ConfigurationError("GeM exponent must be >= 1");
  if (min_input_side < 1) throw ConfigurationError("minimum input side must be positive");
}

EmbeddingModel::EmbeddingModel(ModelSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
  spec_.validate();
  std::mt19937_64 rng(init_seed);
  int in = spec_.in_channels;
  for (const ConvLayerSpec& l : spec_.layers) {
    Tensor k(Shape{l.out_channels, in, l.kernel, l.kernel});
    std::normal_distribution<double> he(0.0, std::sqrt(2.0 / (in * l.kernel * l.kernel)));
    for (Index i = 0; i < k.size(); ++i) k[i] = he(rng);
    params_.push_back(std::move(k));
    params_.emplace_back(Shape{l.out_channels});
    in = l.out_channels;
  }
  metadata.seed = init_seed;
}

std::vector<Var> EmbeddingModel::bind(Tape& tape, bool trainable) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const Tensor& p : params_) vars.push_back(trainable ? tape.variable(p) : tape.constant(p));
  return vars;
}

Var EmbeddingModel::forward(Var image, std::span<const Var> params) const {
  const Tensor& img = image.value();
  if (img.rank() != 3 || img.dim(0) != spec_.in_channels) {
    throw DimensionError("model expects [" + std::to_string(spec_.in_channels) + ",H,W] input, got " +
                         img.shape().str());
  }
  if (img.dim(1) < spec_.min_input_side || img.dim(2) < spec_.min_input_side) {
    throw DimensionError("input " + img.shape().str() + " is smaller than the model minimum side " +
                         std::to_string(spec_.min_input_side));
  }
  if (params.size() != params_.size()) throw StructureError("parameter list does not match model");
  // Map [0,255] to roughly [-2,2].
  Var x = scale(add_scalar(reshape(image, Shape{1, img.dim(0), img.dim(1), img.dim(2)}), -128.0), 1.0 / 64.0);
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const ConvLayerSpec& ls = spec_.layers[l];
    x = relu(add_channel_bias(conv2d(x, params[2 * l], ls.stride, ls.padding), params[2 * l + 1]));
  }
  Var pooled = spec_.pooling == Pooling::kMac ? mac_pool(x) : gem_pool(x, spec_.gem_p);
  // A dead network (all-zero activations) has no direction; nudge to keep it defined.
  if (pooled.value().values().abs().maxCoeff() == 0.0) pooled = add_scalar(pooled, 1e-12);
  return l2_normalize(pooled);
}

Var EmbeddingModel::forward(Var image) const {
  const std::vector<Var> params = bind(image.tape(), false);
  return forward(image, params);
}

Var EmbeddingModel::logits(Var descriptor) const {
  if (!classifier) throw ConfigurationError("model has no classifier head");
  Tape& tape = descriptor.tape();
  return fully_connected(descriptor, tape.constant(classifier->weight), tape.constant(classifier->bias));
}

Descriptor extract_descriptor(const EmbeddingModel& model, const Tensor& image, int source_id) {
  Tape tape;
  Var f = model.forward(tape.constant(image));
  return {f.value().vector(), source_id};
}

std::vector<Descriptor> extract_descriptors(const EmbeddingModel& model, const std::vector<Tensor>& images) {
  std::vector<Descriptor> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back(extract_descriptor(model, images[i], static_cast<int>(i)));
  }
  return out;
}

// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(std::vector<Tensor>& params, double lr, double beta1, double beta2)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void AdamOptimizer::step(const std::vector<Tensor>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].values() = beta1_ * m_[i].values() + (1.0 - beta1_) * grads[i].values();
    v_[i].values() = beta2_ * v_[i].values() + (1.0 - beta2_) * grads[i].values().square();
    params_[i].values() -= lr_ * (m_[i].values() / c1) / ((v_[i].values() / c2).sqrt() + 1e-8);
  }
}

void train_embedding(EmbeddingModel& model, const RetrievalDataset& dataset,
                     const VictimTrainingConfig& config) {
  std::map<int, std::vector<int>> by_class;
  for (int r : dataset.reference_indices) by_class[dataset.labels[static_cast<std::size_t>(r)]].push_back(r);
  if (by_class.size() < 2) throw ConfigurationError("victim training needs at least 2 classes");
  for (const auto& [c, members] : by_class) {
    if (members.size() < 4) {
      throw ConfigurationError("victim training needs at least 4 reference images per class (class " +
                               std::to_string(c) + " has " + std::to_string(members.size()) + ")");
    }
  }
  const std::vector<int>& refs = dataset.reference_indices;
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamOptimizer adam(model.parameters(), config.learning_rate);
  std::uint64_t draw = 0;
  ResizePolicy aug = config.augmentation;
  aug.seed = config.seed;

  auto prepare = [&](int idx) {
    return random_input_resize(aug, dataset.images[static_cast<std::size_t>(idx)], draw++).first;
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::map<int, Eigen::VectorXd> desc;
    for (int r : refs) desc[r] = extract_descriptor(model, dataset.images[static_cast<std::size_t>(r)]).vector;

    std::vector<int> order = refs;
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.triplets_per_step)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.triplets_per_step));
      Tape tape;
      const std::vector<Var> params = model.bind(tape, true);
      std::vector<Var> terms;
      for (std::size_t s = start; s < stop; ++s) {
        const int a = order[s];
        const int label = dataset.labels[static_cast<std::size_t>(a)];
        const std::vector<int>& same = by_class[label];
        int p = a;
        while (p == a) p = same[std::uniform_int_distribution<std::size_t>(0, same.size() - 1)(rng)];
        const double d_ap = (desc[a] - desc[p]).norm();
        std::vector<int> semi_hard, negatives;
        for (int r : refs) {
          if (dataset.labels[static_cast<std::size_t>(r)] == label) continue;
          negatives.push_back(r);
          const double d_an = (desc[a] - desc[r]).norm();
          if (d_an > d_ap && d_an < d_ap + config.margin) semi_hard.push_back(r);
        }
        const std::vector<int>& pool = semi_hard.empty() ? negatives : semi_hard;
        const int n = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];

        Var fa = model.forward(tape.constant(prepare(a)), params);
        Var fp = model.forward(tape.constant(prepare(p)), params);
        Var fn = model.forward(tape.constant(prepare(n)), params);
        terms.push_back(relu(add_scalar(sub(euclidean_distance(fa, fp), euclidean_distance(fa, fn)), config.margin)));
      }
      Var loss = scale(add_n(tape, terms), 1.0 / static_cast<double>(terms.size()));
      loss_sum += loss.value().item() * static_cast<double>(terms.size());
      loss_count += static_cast<int>(terms.size());
      tape.backward(loss);
      std::vector<Tensor> grads;
      for (const Var& v : params) grads.push_back(tape.grad(v));
      adam.step(grads);
    }
    model.metadata.epoch_losses.push_back(loss_sum / std::max(1, loss_count));
  }
  model.metadata.epochs += config.epochs;
  model.metadata.dataset_hash = dataset.hash();
}

EmbeddingModel train_victim(const RetrievalDataset& dataset, const ModelSpec& spec,
                            const VictimTrainingConfig& config) {
  if (dataset.num_classes() < 2) throw ConfigurationError("victim training needs at least 2 classes");
  EmbeddingModel model(spec, config.seed);
  if (config.epochs > 0) {
    train_embedding(model, dataset, config);
  } else {
    model.metadata.dataset_hash = dataset.hash();
  }
  model.metadata.seed = config.seed;
  return model;
}

void train_classifier_head(EmbeddingModel& model, std::span<const Descriptor> descriptors,
                           std::span<const int> labels, int num_classes, std::uint64_t seed, int epochs) {
  if (num_classes < 2) throw ConfigurationError("classifier head needs at least 2 classes");
  if (descriptors.size() != labels.size() || descriptors.empty()) {
    throw ConfigurationError("classifier head needs one label per descriptor");
  }
  const Index d = model.spec().descriptor_dim();
  const auto n = static_cast<Index>(descriptors.size());
  Tensor x(Shape{n, d});
  for (Index i = 0; i < n; ++i) x.matrix(n, d).row(i) = descriptors[static_cast<std::size_t>(i)].vector.transpose();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> init(0.0, 0.01);
  std::vector<Tensor> params{Tensor(Shape{num_classes, d}), Tensor(Shape{num_classes})};
  for (Index i = 0; i < params[0].size(); ++i) params[0][i] = init(rng);
  AdamOptimizer adam(params, 0.05);
  for (int e = 0; e < epochs; ++e) {
    Tape tape;
    Var w = tape.variable(params[0]);
    Var b = tape.variable(params[1]);
    Var loss = softmax_cross_entropy(fully_connected(tape.constant(x), w, b), labels);
    tape.backward(loss);
    adam.step({tape.grad(w), tape.grad(b)});
  }
  model.classifier = ClassifierHead{params[0], params[1]};
}

// ---------------------------------------------------------------------------

void save_checkpoint(const EmbeddingModel& model, const std::filesystem::path& path) {
  const ModelSpec& s = model.spec();
  Container c;
  c.kind = "model";
  nlohmann::json layers = nlohmann::json::array();
  for (const ConvLayerSpec& l : s.layers) {
    layers.push_back({{"out_channels", l.out_channels}, {"kernel", l.kernel}, {"stride", l.stride}, {"padding", l.padding}});
  }
  c.header["architecture"] = {{"in_channels", s.in_channels},
                              {"layers", layers},
                              {"pooling", pooling_name(s.pooling)},
                              {"gem_p", s.gem_p},
                              {"min_input_side", s.min_input_side}};
  c.header["metadata"] = {{"seed", model.metadata.seed},
                          {"epochs", model.metadata.epochs},
                          {"dataset_hash", model.metadata.dataset_hash},
                          {"epoch_losses", model.metadata.epoch_losses}};
  c.header["classifier"] = model.classifier.has_value();
  for (std::size_t l = 0; l < s.layers.size(); ++l) {
    c.blocks.emplace_back("conv" + std::to_string(l) + ".weight", model.parameters()[2 * l]);
    c.blocks.emplace_back("conv" + std::to_string(l) + ".bias", model.parameters()[2 * l + 1]);
  }
  if (model.classifier) {
    c.blocks.emplace_back("classifier.weight", model.classifier->weight);
    c.blocks.emplace_back("classifier.bias", model.classifier->bias);
  }
  write_container(path, c);
}

EmbeddingModel load_checkpoint(const std::filesystem::path& path) {
  const Container c = read_container(path, "model");
  try {
    const auto& a = c.header.at("architecture");
    ModelSpec spec;
    spec.in_channels = a.at("in_channels").get<int>();
    spec.layers.clear();
    for (const auto& l : a.at("layers")) {
      spec.layers.push_back({l.at("out_channels").get<int>(), l.at("kernel").get<int>(),
                             l.at("stride").get<int>(), l.at("padding").get<int>()});
    }
    spec.pooling = parse_pooling(a.at("pooling").get<std::string>());
    spec.gem_p = a.at("gem_p").get<double>();
    spec.min_input_side = a.at("min_input_side").get<int>();

    EmbeddingModel model(spec, 0);
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
      for (int part = 0; part < 2; ++part) {
        const Tensor& t = c.block("conv" + std::to_string(l) + (part ? ".bias" : ".weight"));
        Tensor& dst = model.parameters()[2 * l + static_cast<std::size_t>(part)];
        if (t.shape() != dst.shape()) throw FormatError("parameter block shape mismatch in " + path.string());
        dst = t;
      }
    }
    if (c.header.at("classifier").get<bool>()) {
      model.classifier = ClassifierHead{c.block("classifier.weight"), c.block("classifier.bias")};
    }
    const auto& m = c.header.at("metadata");
    model.metadata.seed = m.at("seed").get<std::uint64_t>();
    model.metadata.epochs = m.at("epochs").get<int>();
    model.metadata.dataset_hash = m.at("dataset_hash").get<std::string>();
    model.metadata.epoch_losses = m.at("epoch_losses").get<std::vector<double>>();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": incomplete model header (container version " +
                      std::to_string(kContainerVersion) + "): " + e.what());
  }
}

}  // namespace uapr

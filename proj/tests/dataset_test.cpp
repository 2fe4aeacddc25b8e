#include "uapr/dataset.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "uapr/errors.hpp"
#include "uapr/metrics.hpp"
#include "uapr/resizing.hpp"

namespace uapr {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("uapr_dataset_test_" + name);
  fs::remove_all(p);
  return p;
}

TEST(Synth, SameSeedSameHash) {
  SynthSpec spec;
  spec.per_class = 6;
  EXPECT_EQ(synth_generate(spec).hash(), synth_generate(spec).hash());
  SynthSpec other = spec;
  other.seed = 1;
  EXPECT_NE(synth_generate(spec).hash(), synth_generate(other).hash());
}

TEST(Synth, Counting) {
  SynthSpec spec;
  spec.num_classes = 2;
  spec.per_class = 4;
  const RetrievalDataset ds = synth_generate(spec);
  EXPECT_EQ(ds.size(), 8u);
  EXPECT_EQ(ds.query_indices.size(), 2u);
  EXPECT_EQ(ds.reference_indices.size(), 6u);
  EXPECT_NO_THROW(ds.validate());
}

TEST(Synth, SizesAndRange) {
  const RetrievalDataset ds = synth_generate(SynthSpec{});
  for (const Tensor& img : ds.images) {
    EXPECT_GE(img.dim(1), 48);
    EXPECT_LE(img.dim(1), 80);
    EXPECT_GE(img.values().minCoeff(), 0.0);
    EXPECT_LE(img.values().maxCoeff(), 255.0);
  }
  EXPECT_THROW(synth_generate(SynthSpec{1}), ConfigurationError);
}

// Leave-one-out nearest class centroid on raw pixels resized to 64x64.
TEST(Synth, DefaultCorpusIsSeparableOnRawPixels) {
  const RetrievalDataset ds = synth_generate(SynthSpec{});
  const int k = ds.num_classes();
  std::vector<Eigen::VectorXd> x;
  for (const Tensor& img : ds.images) x.push_back(resize_image(img, 64, 64).vector());
  std::vector<Eigen::VectorXd> sum(static_cast<std::size_t>(k), Eigen::VectorXd::Zero(x[0].size()));
  std::vector<int> count(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    sum[static_cast<std::size_t>(ds.labels[i])] += x[i];
    ++count[static_cast<std::size_t>(ds.labels[i])];
  }
  int correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    int best = -1;
    double best_d = 0.0;
    for (int c = 0; c < k; ++c) {
      const auto sc = static_cast<std::size_t>(c);
      const bool own = c == ds.labels[i];
      const Eigen::VectorXd centroid = (sum[sc] - (own ? x[i] : Eigen::VectorXd::Zero(x[i].size()))) / (count[sc] - (own ? 1 : 0));
      const double d = (x[i] - centroid).squaredNorm();
      if (best < 0 || d < best_d) {
        best = c;
        best_d = d;
      }
    }
    correct += best == ds.labels[i] ? 1 : 0;
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(x.size()), 0.8);
}

TEST(Validate, RejectsBrokenSplits) {
  SynthSpec spec;
  spec.num_classes = 2;
  spec.per_class = 3;
  RetrievalDataset ds = synth_generate(spec);
  RetrievalDataset overlap = ds;
  overlap.reference_indices.push_back(ds.query_indices[0]);
  EXPECT_THROW(overlap.validate(), ConfigurationError);
  RetrievalDataset orphan = ds;
  // Drop every class-0 reference.
  orphan.reference_indices.erase(
      std::remove_if(orphan.reference_indices.begin(), orphan.reference_indices.end(),
                     [&](int r) { return ds.labels[static_cast<std::size_t>(r)] == 0; }),
      orphan.reference_indices.end());
  EXPECT_THROW(orphan.validate(), ConfigurationError);
}

TEST(Png, RoundTripOfIntegerImages) {
  SynthSpec spec;
  spec.num_classes = 2;
  spec.per_class = 2;
  const Tensor img = synth_generate(spec).images[0];
  const fs::path dir = scratch("png");
  fs::create_directories(dir);
  write_png(dir / "a.png", img);
  const Tensor back = read_png(dir / "a.png");
  EXPECT_EQ(back.shape(), img.shape());
  EXPECT_EQ(back.values().matrix(), img.values().matrix());
  fs::remove_all(dir);
}

TEST(Ingest, ExportedCorpusEvaluatesIdentically) {
  SynthSpec spec;
  spec.num_classes = 3;
  spec.per_class = 5;
  spec.base_size = 32;
  const RetrievalDataset ds = synth_generate(spec);
  const fs::path dir = scratch("roundtrip");
  export_folder(ds, dir);
  const RetrievalDataset back = ingest_folder(dir);
  EXPECT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.query_indices, ds.query_indices);
  EXPECT_EQ(back.hash(), ds.hash());

  const EmbeddingModel model(ModelSpec{}, 3);
  Perturbation p = Perturbation::zeros(3, 64, 64, 10.0);
  for (Index i = 0; i < p.delta.size(); ++i) p.delta[i] = (i % 4) * 5.0 - 7.5;
  auto a = evaluate_attack(model, ds, p, EvalOptions{}).to_json();
  auto b = evaluate_attack(model, back, p, EvalOptions{}).to_json();
  for (const char* key : {"clean", "attacked", "mDR", "per_query"}) EXPECT_EQ(a[key], b[key]) << key;
  fs::remove_all(dir);
}

TEST(Ingest, ItemizesProblems) {
  SynthSpec spec;
  spec.num_classes = 2;
  spec.per_class = 3;
  const fs::path dir = scratch("broken");
  export_folder(synth_generate(spec), dir);
  {
    std::ofstream out(dir / "labels.csv", std::ios::app);
    out << "ghost.png,1,reference\n";
    out << "img_00000.png,,reference\n";
  }
  try {
    ingest_folder(dir);
    FAIL() << "expected an ingestion error";
  } catch (const IngestionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("ghost.png"), std::string::npos) << msg;
    EXPECT_NE(msg.find("invalid label"), std::string::npos) << msg;
  }
  fs::remove_all(dir);
  EXPECT_THROW(ingest_folder(dir), IngestionError);
}

TEST(Ingest, QueryClassWithoutReferences) {
  const fs::path dir = scratch("orphan");
  fs::create_directories(dir);
  write_png(dir / "q.png", Tensor(Shape{3, 8, 8}, 10.0));
  write_png(dir / "r.png", Tensor(Shape{3, 8, 8}, 20.0));
  {
    std::ofstream out(dir / "labels.csv");
    out << "filename,label,split\nq.png,0,query\nr.png,1,reference\n";
  }
  try {
    ingest_folder(dir);
    FAIL() << "expected an ingestion error";
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("query class 0"), std::string::npos);
  }
  fs::remove_all(dir);
}

}  // namespace
}  // namespace uapr

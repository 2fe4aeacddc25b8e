// Command-line front end: dataset generation, victim training, UAP
// generation, black-box distillation, evaluation and transfer studies.

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "uapr/distill.hpp"
#include "uapr/errors.hpp"
#include "uapr/metrics.hpp"
#include "uapr/optimizer.hpp"

namespace {

using namespace uapr;
namespace fs = std::filesystem;

// "synth" or "synth:SEED" selects the built-in corpus; anything else is a
// folder with labels.csv.
RetrievalDataset load_dataset(const std::string& source) {
  if (source == "synth" || source.rfind("synth:", 0) == 0) {
    SynthSpec spec;
    if (source.size() > 6) spec.seed = std::stoull(source.substr(6));
    return synth_generate(spec);
  }
  return ingest_folder(source);
}

ResizePolicy make_policy(int min_side, int max_side, int fixed_size, double bound) {
  if (fixed_size > 0) return ResizePolicy::fixed(fixed_size, fixed_size);
  return ResizePolicy::random(min_side, max_side, 0, bound);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << text;
  if (!out) throw FormatError("failed writing " + path);
}

void emit_report(const nlohmann::json& j, const std::string& json_path) {
  if (json_path.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_text(json_path, j.dump(2) + "\n");
  }
}

struct MakeDatasetArgs {
  std::string out;
  SynthSpec spec;
  std::string family = "gratings";
};

struct TrainArgs {
  std::string data = "synth";
  std::string out;
  std::string pooling = "mac";
  VictimTrainingConfig config;
};

struct GenUapArgs {
  std::string model, data = "synth", out, png, trace;
  UapConfig config;
  int landmarks = 8;
  int resize_min = 32, resize_max = 96, fixed_size = 0;
  double aspect_bound = 0.15;
};

struct DistillArgs {
  std::string oracle = "victim", victim, data = "synth", queries, out, rankings, init = "pretrained";
  DistillationConfig config;
  double timeout = 30.0;
};

struct EvaluateArgs {
  std::string model, data = "synth", perturbation, json, csv;
  int resize_min = 32, resize_max = 96, fixed_size = 0;
  std::uint64_t seed = 0;
  bool query_only = false;
};

struct TransferArgs {
  std::vector<std::string> models, perturbations;
  std::string data = "synth", json, csv;
  int resize_min = 32, resize_max = 96, fixed_size = 0;
  std::uint64_t seed = 0;
};

void run_make_dataset(const MakeDatasetArgs& a) {
  SynthSpec spec = a.spec;
  if (a.family == "plaids") {
    spec.family = SynthFamily::kPlaids;
  } else if (a.family != "gratings") {
    throw ConfigurationError("unknown family '" + a.family + "' (expected gratings or plaids)");
  }
  const RetrievalDataset ds = synth_generate(spec);
  export_folder(ds, a.out);
  std::cout << nlohmann::json{{"images", ds.size()},
                              {"queries", ds.query_indices.size()},
                              {"references", ds.reference_indices.size()},
                              {"hash", ds.hash()},
                              {"out", a.out}}
                   .dump()
            << '\n';
}

void run_train_victim(const TrainArgs& a) {
  const RetrievalDataset ds = load_dataset(a.data);
  ModelSpec spec;
  spec.pooling = parse_pooling(a.pooling);
  const EmbeddingModel model = train_victim(ds, spec, a.config);
  save_checkpoint(model, a.out);
  EvalOptions native;
  native.policy = ResizePolicy::native();
  const auto d = dataset_descriptors(model, ds, nullptr, native);
  const MetricsReport r = score_attack(ds, d, d, true);
  std::cout << nlohmann::json{{"clean_mAP", r.clean.map},
                              {"clean_mP@10", r.clean.mp10},
                              {"epoch_losses", model.metadata.epoch_losses},
                              {"out", a.out}}
                   .dump()
            << '\n';
}

void run_gen_uap(GenUapArgs a) {
  EmbeddingModel model = load_checkpoint(a.model);
  const RetrievalDataset ds = load_dataset(a.data);
  a.config.policy = make_policy(a.resize_min, a.resize_max, a.fixed_size, a.aspect_bound);
  a.config.validate();
  const LandmarkModel lm = fit_landmarks(model, ds, a.landmarks, a.config.policy, a.config.seed);
  if (a.config.objective == ObjectiveKind::kLabelWise) {
    fit_pseudo_label_head(model, ds, lm, a.config.policy, a.config.seed);
  }
  UapTrace trace;
  const Perturbation p = run_uap_training(model, ds, lm, a.config, &trace);
  save_perturbation(p, a.out);
  if (!a.png.empty()) export_perturbation_png(p, a.png);
  const nlohmann::json summary = {{"out", a.out},
                                  {"epoch_mDR", trace.epoch_mdr},
                                  {"best_epoch", trace.best_epoch},
                                  {"best_mDR", trace.best_mdr},
                                  {"iterations", trace.iterations},
                                  {"rescales", trace.rescales},
                                  {"max_linf", trace.max_linf},
                                  {"info", p.info}};
  if (!a.trace.empty()) write_text(a.trace, summary.dump(2) + "\n");
  std::cout << summary.dump() << '\n';
}

void run_distill(const DistillArgs& a) {
  const RetrievalDataset corpus = load_dataset(a.data);
  // Queries default to every image of the reference corpus.
  const RetrievalDataset query_set = a.queries.empty() ? corpus : load_dataset(a.queries);
  const std::vector<Tensor>& queries = query_set.images;

  std::optional<EmbeddingModel> victim;
  std::unique_ptr<RankingOracle> oracle;
  if (a.oracle == "victim") {
    if (a.victim.empty()) throw ConfigurationError("--oracle victim needs --victim CHECKPOINT");
    victim.emplace(load_checkpoint(a.victim));
    oracle = std::make_unique<VictimOracle>(*victim, corpus);
  } else if (a.oracle.rfind("folder:", 0) == 0) {
    oracle = std::make_unique<DirectoryOracle>(
        a.oracle.substr(7), corpus.reference_indices,
        std::chrono::milliseconds(static_cast<long>(a.timeout * 1000.0)));
  } else {
    throw ConfigurationError("unknown oracle '" + a.oracle + "' (expected victim or folder:PATH)");
  }

  RankingStore resume;
  if (!a.rankings.empty() && fs::exists(a.rankings)) resume = load_rankings(a.rankings);
  RankingStore store;
  try {
    store = collect_rankings(*oracle, queries, a.config.collection, &resume);
  } catch (const CollectionError& e) {
    if (!a.rankings.empty()) save_rankings(e.partial, a.rankings);
    throw;
  }
  if (!a.rankings.empty()) save_rankings(store, a.rankings);

  ModelSpec spec = victim ? victim->spec() : ModelSpec{};
  EmbeddingModel initial = a.init == "pretrained" ? pretrain_substitute(spec, a.config.seed)
                           : a.init == "random"   ? EmbeddingModel(spec, a.config.seed)
                                                  : load_checkpoint(a.init);
  DistillationReport report;
  const EmbeddingModel substitute = distill(store, queries, corpus, initial, a.config, &report);
  save_checkpoint(substitute, a.out);
  std::cout << nlohmann::json{{"out", a.out},
                              {"oracle_queries", report.oracle_queries},
                              {"coarse_losses", report.coarse_losses},
                              {"fine_losses", report.fine_losses}}
                   .dump()
            << '\n';
}

void run_evaluate(const EvaluateArgs& a) {
  const EmbeddingModel model = load_checkpoint(a.model);
  const RetrievalDataset ds = load_dataset(a.data);
  const Perturbation p = load_perturbation(a.perturbation);
  EvalOptions options;
  options.policy = make_policy(a.resize_min, a.resize_max, a.fixed_size, 0.15);
  options.seed = a.seed;
  options.perturb_references = !a.query_only;
  const MetricsReport r = evaluate_attack(model, ds, p, options);
  emit_report(r.to_json(), a.json);
  if (!a.csv.empty()) write_text(a.csv, r.to_csv());
}

void run_transfer(const TransferArgs& a) {
  if (a.models.size() != a.perturbations.size()) {
    throw ConfigurationError("transfer needs one perturbation per model");
  }
  std::vector<EmbeddingModel> models;
  std::vector<Perturbation> perts;
  for (const auto& m : a.models) models.push_back(load_checkpoint(m));
  for (const auto& p : a.perturbations) perts.push_back(load_perturbation(p));
  const RetrievalDataset ds = load_dataset(a.data);
  EvalOptions options;
  options.policy = make_policy(a.resize_min, a.resize_max, a.fixed_size, 0.15);
  options.seed = a.seed;
  const Eigen::MatrixXd m = transfer_matrix(models, perts, ds, options);

  nlohmann::json rows = nlohmann::json::array();
  std::ostringstream csv;
  csv << "source";
  for (const auto& t : a.models) csv << ',' << t;
  csv << '\n';
  for (Index s = 0; s < m.rows(); ++s) {
    std::vector<double> row(m.cols());
    csv << a.perturbations[static_cast<std::size_t>(s)];
    for (Index t = 0; t < m.cols(); ++t) {
      row[static_cast<std::size_t>(t)] = m(s, t);
      csv << ',' << m(s, t);
    }
    csv << '\n';
    rows.push_back(row);
  }
  emit_report({{"models", a.models}, {"perturbations", a.perturbations}, {"mDR", rows}}, a.json);
  if (!a.csv.empty()) write_text(a.csv, csv.str());
}

void add_resize_flags(CLI::App* cmd, int& min_side, int& max_side, int& fixed) {
  cmd->add_option("--resize-min", min_side, "Smallest side of the random resize")->capture_default_str();
  cmd->add_option("--resize-max", max_side, "Largest side of the random resize")->capture_default_str();
  cmd->add_option("--fixed-size", fixed, "Resize every image to N x N instead (0 = random)")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Universal adversarial perturbations against image retrieval"};
  app.set_config("--config", "", "TOML/INI file mirroring the flags; flags on the command line win");
  app.require_subcommand(1);

  MakeDatasetArgs md;
  auto* make = app.add_subcommand("make-dataset", "Write a synthetic corpus as PNGs plus labels.csv");
  make->add_option("--out", md.out, "Output directory")->required();
  make->add_option("--classes", md.spec.num_classes)->capture_default_str();
  make->add_option("--per-class", md.spec.per_class)->capture_default_str();
  make->add_option("--base-size", md.spec.base_size)->capture_default_str();
  make->add_option("--queries-per-class", md.spec.queries_per_class)->capture_default_str();
  make->add_option("--contrast", md.spec.contrast)->capture_default_str();
  make->add_option("--noise", md.spec.noise_sigma)->capture_default_str();
  make->add_option("--family", md.family, "gratings or plaids")->capture_default_str();
  make->add_option("--seed", md.spec.seed)->capture_default_str();

  TrainArgs tv;
  auto* train = app.add_subcommand("train-victim", "Train a retrieval model with a triplet loss");
  train->add_option("--data", tv.data, "Folder, or synth[:SEED]")->capture_default_str();
  train->add_option("--out", tv.out, "Checkpoint path")->required();
  train->add_option("--pooling", tv.pooling, "mac or gem")->capture_default_str();
  train->add_option("--epochs", tv.config.epochs)->capture_default_str();
  train->add_option("--lr", tv.config.learning_rate)->capture_default_str();
  train->add_option("--margin", tv.config.margin)->capture_default_str();
  train->add_option("--seed", tv.config.seed)->capture_default_str();

  GenUapArgs gu;
  std::string objective = "list";
  auto* gen = app.add_subcommand("gen-uap", "Generate a universal perturbation against a model");
  gen->add_option("--model", gu.model, "Checkpoint of the (substitute) model")->required();
  gen->add_option("--data", gu.data, "Attack corpus: folder, or synth[:SEED]")->capture_default_str();
  gen->add_option("--out", gu.out, "Perturbation path")->required();
  gen->add_option("--objective", objective, "label, pair or list")->capture_default_str();
  gen->add_option("--epsilon", gu.config.epsilon, "L-inf budget on the 0-255 scale")->capture_default_str();
  gen->add_option("--lr", gu.config.learning_rate)->capture_default_str();
  gen->add_option("--momentum", gu.config.momentum)->capture_default_str();
  gen->add_option("--saturation", gu.config.saturation_threshold)->capture_default_str();
  gen->add_option("--max-epochs", gu.config.max_epochs)->capture_default_str();
  gen->add_option("--patience", gu.config.patience)->capture_default_str();
  gen->add_option("--alpha", gu.config.alpha, "Pair-wise margin")->capture_default_str();
  gen->add_option("--per-anchor", gu.config.per_anchor)->capture_default_str();
  gen->add_option("--batch", gu.config.batch)->capture_default_str();
  gen->add_option("--landmarks", gu.landmarks)->capture_default_str();
  gen->add_option("--base-size", gu.config.base_h, "Side of the stored perturbation")->capture_default_str();
  gen->add_option("--aspect-bound", gu.aspect_bound)->capture_default_str();
  gen->add_option("--seed", gu.config.seed)->capture_default_str();
  gen->add_option("--png", gu.png, "Also export an 8-bit visualization");
  gen->add_option("--trace", gu.trace, "Write the training trace as JSON");
  add_resize_flags(gen, gu.resize_min, gu.resize_max, gu.fixed_size);

  DistillArgs da;
  long budget = -1;
  auto* dist = app.add_subcommand("distill", "Distill a substitute from a ranking oracle");
  dist->add_option("--oracle", da.oracle, "victim or folder:PATH")->capture_default_str();
  dist->add_option("--victim", da.victim, "Checkpoint backing the victim oracle");
  dist->add_option("--data", da.data, "Reference corpus the oracle ranks")->capture_default_str();
  dist->add_option("--queries", da.queries, "Query corpus (default: the reference corpus)");
  dist->add_option("--out", da.out, "Substitute checkpoint path")->required();
  dist->add_option("--rankings", da.rankings, "Ranking store; resumed if present, updated after collection");
  dist->add_option("--init", da.init, "pretrained, random, or a checkpoint path")->capture_default_str();
  dist->add_option("--bins", da.config.num_bins)->capture_default_str();
  dist->add_option("--topk", da.config.top_k)->capture_default_str();
  dist->add_option("--coarse-epochs", da.config.coarse_epochs)->capture_default_str();
  dist->add_option("--fine-epochs", da.config.fine_epochs)->capture_default_str();
  dist->add_option("--budget", budget, "Maximum oracle calls (negative: unlimited)")->capture_default_str();
  dist->add_option("--retries", da.config.collection.retries)->capture_default_str();
  dist->add_option("--timeout", da.timeout, "Seconds to wait for a folder oracle answer")->capture_default_str();
  dist->add_option("--seed", da.config.seed)->capture_default_str();

  EvaluateArgs ev;
  auto* eval = app.add_subcommand("evaluate", "Clean vs. attacked retrieval metrics");
  eval->add_option("--model", ev.model)->required();
  eval->add_option("--data", ev.data)->capture_default_str();
  eval->add_option("--perturbation", ev.perturbation)->required();
  eval->add_option("--seed", ev.seed)->capture_default_str();
  eval->add_flag("--query-only", ev.query_only, "Leave references unperturbed");
  eval->add_option("--json", ev.json, "Write the report here instead of stdout");
  eval->add_option("--csv", ev.csv, "Also write per-query rows as CSV");
  add_resize_flags(eval, ev.resize_min, ev.resize_max, ev.fixed_size);

  TransferArgs tr;
  auto* transfer = app.add_subcommand("transfer", "mDR of every perturbation against every model");
  transfer->add_option("--models", tr.models)->required()->delimiter(',');
  transfer->add_option("--perturbations", tr.perturbations)->required()->delimiter(',');
  transfer->add_option("--data", tr.data)->capture_default_str();
  transfer->add_option("--seed", tr.seed)->capture_default_str();
  transfer->add_option("--json", tr.json);
  transfer->add_option("--csv", tr.csv);
  add_resize_flags(transfer, tr.resize_min, tr.resize_max, tr.fixed_size);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*make) run_make_dataset(md);
    if (*train) run_train_victim(tv);
    if (*gen) {
      gu.config.objective = parse_objective(objective);
      gu.config.base_w = gu.config.base_h;
      run_gen_uap(gu);
    }
    if (*dist) {
      da.config.collection.budget = budget;
      run_distill(da);
    }
    if (*eval) run_evaluate(ev);
    if (*transfer) run_transfer(tr);
  } catch (const Error& e) {
    std::cerr << "error (" << category_name(e.category()) << "): " << e.what() << '\n';
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

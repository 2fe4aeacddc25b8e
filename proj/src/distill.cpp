#include "uapr/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "uapr/metrics.hpp"
#include "uapr/random.hpp"

namespace uapr {

VictimOracle::VictimOracle(const EmbeddingModel& victim, const RetrievalDataset& corpus) : victim_(victim) {
  for (int r : corpus.reference_indices) {
    references_.push_back(extract_descriptor(victim, corpus.images[static_cast<std::size_t>(r)], r));
  }
}

std::vector<int> VictimOracle::query(const Tensor& image) {
  return rank_by_distance(extract_descriptor(victim_, image).vector, references_);
}

DirectoryOracle::DirectoryOracle(std::filesystem::path dir, std::vector<int> reference_ids,
                                 std::chrono::milliseconds timeout, std::chrono::milliseconds poll)
    : dir_(std::move(dir)), reference_ids_(std::move(reference_ids)), timeout_(timeout), poll_(poll) {
  std::sort(reference_ids_.begin(), reference_ids_.end());
  std::filesystem::create_directories(dir_);
}

std::vector<int> DirectoryOracle::query(const Tensor& image) {
  const std::string stem = "query_" + std::to_string(next_++);
  const std::filesystem::path answer = dir_ / (stem + ".txt");
  write_png(dir_ / (stem + ".png"), image);
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (!std::filesystem::exists(answer)) {
    if (std::chrono::steady_clock::now() >= deadline) throw OracleError("no answer at " + answer.string());
    std::this_thread::sleep_for(poll_);
  }
  std::ifstream in(answer);
  std::vector<int> list;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    int id = 0;
    std::string rest;
    if (!(ls >> id) || (ls >> rest)) {
      throw OracleError(answer.string() + ":" + std::to_string(line_no) + ": expected one reference id");
    }
    list.push_back(id);
  }
  std::vector<int> sorted = list;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != reference_ids_) {
    throw OracleError(answer.string() + ": answer is not a permutation of the " +
                      std::to_string(reference_ids_.size()) + " reference ids");
  }
  return list;
}

void save_rankings(const RankingStore& store, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << nlohmann::json{{"query_count", store.query_count}, {"lists", store.lists}}.dump() << '\n';
  if (!out) throw FormatError("failed writing " + path.string());
}

RankingStore load_rankings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    RankingStore s;
    s.query_count = j.at("query_count").get<long>();
    s.lists = j.at("lists").get<std::vector<std::vector<int>>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

RankingStore collect_rankings(RankingOracle& oracle, std::span<const Tensor> queries, const CollectionPolicy& policy,
                              const RankingStore* resume) {
  RankingStore store = resume ? *resume : RankingStore{};
  if (store.lists.size() > queries.size()) throw ConfigurationError("stored rankings exceed the query set");
  auto missing_from = [&](std::size_t i) {
    std::vector<int> m(queries.size() - i);
    std::iota(m.begin(), m.end(), static_cast<int>(i));
    return m;
  };
  for (std::size_t i = store.lists.size(); i < queries.size(); ++i) {
    for (int attempt = 0;; ++attempt) {
      if (policy.budget >= 0 && store.query_count >= policy.budget) {
        throw CollectionError("oracle budget of " + std::to_string(policy.budget) + " queries exhausted at query " +
                                  std::to_string(i),
                              store, missing_from(i));
      }
      ++store.query_count;
      try {
        store.lists.push_back(oracle.query(queries[i]));
        break;
      } catch (const OracleError& e) {
        if (attempt >= policy.retries) {
          throw CollectionError("oracle failed on query " + std::to_string(i) + " after " +
                                    std::to_string(attempt + 1) + " attempts: " + e.what(),
                                store, missing_from(i));
        }
      }
    }
  }
  return store;
}

std::vector<int> bin_and_sample(std::span<const int> ranking, int num_bins, std::uint64_t seed) {
  const auto n = static_cast<int>(ranking.size());
  if (num_bins < 1 || num_bins > n) {
    throw ConfigurationError("cannot split a list of " + std::to_string(n) + " into " + std::to_string(num_bins) +
                             " bins");
  }
  auto rng = keyed_rng(seed, 0);
  const int base = n / num_bins, extra = n % num_bins;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(num_bins));
  int start = 0;
  for (int b = 0; b < num_bins; ++b) {
    const int size = base + (b < extra ? 1 : 0);
    const int pick = std::uniform_int_distribution<int>(start, start + size - 1)(rng);
    out.push_back(ranking[static_cast<std::size_t>(pick)]);
    start += size;
  }
  return out;
}

Var ordinal_regression_loss(Var query, std::span<const Var> refs, double beta) {
  Tape& tape = query.tape();
  if (refs.size() < 2) return tape.constant(Tensor::scalar(0.0));
  std::vector<Var> d;
  d.reserve(refs.size());
  for (const Var& r : refs) d.push_back(euclidean_distance(query, r));
  std::vector<Var> terms;
  for (std::size_t m = 1; m < refs.size(); ++m) {
    const double lambda = 1.0 / std::log2(static_cast<double>(m + 1) + 1.0);
    for (std::size_t n = 0; n < m; ++n) {
      terms.push_back(scale(relu(add_scalar(sub(d[n], d[m]), beta)), lambda));
    }
  }
  return add_n(tape, terms);
}

void DistillationConfig::validate() const {
  if (num_bins < 1) throw ConfigurationError("num_bins must be >= 1");
  if (top_k < 2) throw ConfigurationError("top_k must be >= 2");
  if (margin_fine < 0.0 || margin_coarse < 0.0) throw ConfigurationError("margins must be >= 0");
  if (margin_fine > margin_coarse) throw ConfigurationError("the fine margin must not exceed the coarse margin");
  if (coarse_epochs < 0 || fine_epochs < 0) throw ConfigurationError("epoch counts must be >= 0");
  if (!(learning_rate_coarse > 0.0) || !(learning_rate_fine > 0.0)) {
    throw ConfigurationError("learning rates must be > 0");
  }
  if (queries_per_step < 1) throw ConfigurationError("queries_per_step must be >= 1");
  augmentation.validate();
}

EmbeddingModel distill(const RankingStore& rankings, std::span<const Tensor> queries, const RetrievalDataset& corpus,
                       const EmbeddingModel& initial, const DistillationConfig& config, DistillationReport* report) {
  config.validate();
  if (!rankings.complete(queries.size())) {
    throw ConfigurationError("rankings cover " + std::to_string(rankings.lists.size()) + " of " +
                             std::to_string(queries.size()) + " queries");
  }
  for (const auto& list : rankings.lists) {
    if (list.size() < static_cast<std::size_t>(std::max(config.top_k, config.num_bins))) {
      throw ConfigurationError("ranking lists are shorter than top_k or num_bins");
    }
    for (int id : list) {
      if (id < 0 || static_cast<std::size_t>(id) >= corpus.size()) {
        throw IndexError("ranked id " + std::to_string(id) + " outside the reference corpus");
      }
    }
  }

  EmbeddingModel model = initial;
  model.classifier.reset();
  AdamOptimizer adam(model.parameters(), config.learning_rate_coarse);
  ResizePolicy aug = config.augmentation;
  aug.seed = config.seed;
  std::uint64_t draw = 0;
  std::vector<int> order(queries.size());

  auto run_stage = [&](int epochs, bool coarse, std::vector<double>& losses) {
    for (int epoch = 0; epoch < epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      auto rng = keyed_rng(config.seed, (coarse ? 0x1000u : 0x2000u) + static_cast<std::uint64_t>(epoch));
      std::shuffle(order.begin(), order.end(), rng);
      double sum = 0.0;
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.queries_per_step)) {
        const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.queries_per_step));
        Tape tape;
        const std::vector<Var> params = model.bind(tape, true);
        auto embed = [&](const Tensor& img) {
          return model.forward(tape.constant(random_input_resize(aug, img, draw++).first), params);
        };
        std::vector<Var> terms;
        for (std::size_t s = start; s < stop; ++s) {
          const auto q = static_cast<std::size_t>(order[s]);
          const std::vector<int>& list = rankings.lists[q];
          std::vector<int> subset;
          if (coarse) {
            subset = bin_and_sample(list, config.num_bins, rng());
          } else {
            subset.assign(list.begin(), list.begin() + config.top_k);
          }
          Var fq = embed(queries[q]);
          std::vector<Var> refs;
          for (int id : subset) refs.push_back(embed(corpus.images[static_cast<std::size_t>(id)]));
          terms.push_back(ordinal_regression_loss(fq, refs, coarse ? config.margin_coarse : config.margin_fine));
        }
        Var loss = scale(add_n(tape, terms), 1.0 / static_cast<double>(terms.size()));
        sum += loss.value().item() * static_cast<double>(terms.size());
        tape.backward(loss);
        std::vector<Tensor> grads;
        for (const Var& p : params) grads.push_back(tape.grad(p));
        adam.step(grads);
      }
      losses.push_back(sum / static_cast<double>(order.size()));
    }
  };

  DistillationReport local;
  DistillationReport& rep = report ? *report : local;
  rep.oracle_queries = rankings.query_count;
  run_stage(config.coarse_epochs, true, rep.coarse_losses);
  adam.set_learning_rate(config.learning_rate_fine);
  run_stage(config.fine_epochs, false, rep.fine_losses);

  model.metadata.seed = config.seed;
  model.metadata.epochs = config.coarse_epochs + config.fine_epochs;
  model.metadata.dataset_hash = corpus.hash();
  model.metadata.epoch_losses = rep.coarse_losses;
  model.metadata.epoch_losses.insert(model.metadata.epoch_losses.end(), rep.fine_losses.begin(), rep.fine_losses.end());
  return model;
}

EmbeddingModel distill(RankingOracle& oracle, std::span<const Tensor> queries, const RetrievalDataset& corpus,
                       const EmbeddingModel& initial, const DistillationConfig& config, DistillationReport* report,
                       const RankingStore* resume) {
  config.validate();
  const RankingStore store = collect_rankings(oracle, queries, config.collection, resume);
  return distill(store, queries, corpus, initial, config, report);
}

EmbeddingModel pretrain_substitute(const ModelSpec& spec, std::uint64_t seed, int epochs) {
  SynthSpec s;
  s.family = SynthFamily::kPlaids;
  s.num_classes = 8;
  s.per_class = 24;
  s.seed = 0x51a1d + seed;
  const RetrievalDataset plaids = synth_generate(s);
  VictimTrainingConfig c;
  c.seed = seed;
  c.epochs = epochs;
  return train_victim(plaids, spec, c);
}

double topk_overlap(const EmbeddingModel& model, RankingOracle& oracle, std::span<const Tensor> queries,
                    const RetrievalDataset& corpus, int k) {
  if (k < 1) throw ConfigurationError("overlap needs k >= 1");
  if (queries.empty()) return 0.0;
  std::vector<Descriptor> refs;
  for (int r : corpus.reference_indices) {
    refs.push_back(extract_descriptor(model, corpus.images[static_cast<std::size_t>(r)], r));
  }
  double total = 0.0;
  for (const Tensor& q : queries) {
    const std::vector<int> truth = oracle.query(q);
    const std::vector<int> mine = rank_by_distance(extract_descriptor(model, q).vector, refs);
    const auto kk = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(k), truth.size()));
    const std::set<int> top(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(kk));
    int hit = 0;
    for (std::size_t i = 0; i < kk && i < mine.size(); ++i) hit += top.count(mine[i]) ? 1 : 0;
    total += static_cast<double>(hit) / static_cast<double>(kk);
  }
  return total / static_cast<double>(queries.size());
}

}  // namespace uapr

#include "gpnn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace gpnn {

ExperimentResult run_experiment(GpnnModel& model, const RunConfig& cfg, const Dataset& train,
                                const Dataset& test, std::size_t workers, std::ostream* log,
                                const NamedTensors* resume) {
  TrainConfig tc = train_config(cfg, workers);
  fill_class_weights(tc.loss, train);
  Trainer trainer(model, tc);
  if (resume) trainer.restore(*resume);
  ExperimentResult result;
  result.initial_loss = evaluate(model, train, cfg.task, tc.loss).loss;

  std::ostringstream sink;
  CsvWriter csv(log ? *log : sink);
  csv.header({"epoch", "learning_rate", "loss", "accuracy"});
  if (!resume) csv.cell(std::size_t{0}).cell(0.0).cell(result.initial_loss).cell(std::nan("")).end_row();
  while (trainer.epoch() < cfg.optimizer.epochs) {
    result.epochs.push_back(trainer.train_epoch(train));
    const EpochStats& s = result.epochs.back();
    csv.cell(s.epoch).cell(s.learning_rate).cell(s.loss).cell(s.accuracy).end_row();
  }
  result.checkpoint = trainer.checkpoint();
  std::map<std::string, std::vector<std::size_t>> counts;
  for (const auto& h : train.heads)
    if (h.activation == Activation::sigmoid) counts[h.name] = class_counts(train, h.name);
  result.test = evaluate(model, test, cfg.task, tc.loss, counts);
  return result;
}

namespace {

struct VariantInfo {
  const char* name;
  const char* aspect;
  const char* method;
};

constexpr VariantInfo kVariants[] = {
    {"full", "full model", "joint parsing, 3 iterations"},
    {"no_graph", "structure", "w/o graph"},
    {"constant_graph", "structure", "constant graph"},
    {"no_graph_loss", "learning", "w/o graph loss"},
    {"no_joint_parsing", "learning", "w/o joint parsing"},
    {"s1", "iterations", "1 iteration"},
    {"s2", "iterations", "2 iterations"},
    {"s3", "iterations", "3 iterations"},
    {"s4", "iterations", "4 iterations"},
};

const VariantInfo& info(const std::string& variant) {
  for (const auto& v : kVariants)
    if (variant == v.name) return v;
  throw std::invalid_argument("unknown ablation variant '" + variant + "'");
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

}  // namespace

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& v : kVariants) n.emplace_back(v.name);
    return n;
  }();
  return names;
}

RunConfig apply_variant(RunConfig cfg, const std::string& variant) {
  info(variant);
  if (variant == "full" || variant == "s3") {
    cfg.mode = StructureMode::joint_iterative;
    cfg.iterations = 3;
  } else if (variant == "no_graph") {
    cfg.mode = StructureMode::no_graph;
    cfg.loss.adjacency_weight = 0.0;
  } else if (variant == "constant_graph") {
    cfg.mode = StructureMode::constant_structure;
  } else if (variant == "no_graph_loss") {
    cfg.loss.adjacency_weight = 0.0;
  } else if (variant == "no_joint_parsing") {
    cfg.mode = StructureMode::static_structure;
  } else {
    cfg.iterations = static_cast<std::size_t>(variant[1] - '0');
  }
  return cfg;
}

const AblationSummary& AblationTable::row(const std::string& variant) const {
  for (const auto& r : rows)
    if (r.variant == variant) return r;
  throw std::out_of_range("no ablation row for '" + variant + "'");
}

AblationTable run_ablation(const std::vector<std::string>& suite, const RunConfig& base,
                           const std::vector<std::uint64_t>& seeds, std::size_t workers) {
  if (suite.empty()) throw std::invalid_argument("ablation suite is empty");
  if (seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
  for (const auto& v : suite) info(v);

  AblationTable table;
  for (std::uint64_t seed : seeds) {
    RunConfig seeded = base;
    seeded.seed = seed;
    if (seeded.data.train.empty()) seeded.synth.seed = derive_seed(base.synth.seed, seed);
    const auto [train, test] = load_data(seeded);
    for (const auto& variant : suite) {
      const RunConfig cfg = apply_variant(seeded, variant);
      GpnnModel model(model_config(cfg, train));
      const ExperimentResult r = run_experiment(model, cfg, train, test, workers);
      table.runs.push_back({variant, seed, r.test.primary_metric(), r.test.adjacency_auc,
                            r.epochs.empty() ? r.initial_loss : r.epochs.back().loss});
    }
  }
  for (const auto& variant : suite) {
    std::vector<double> metric, auc;
    for (const auto& r : table.runs)
      if (r.variant == variant) {
        metric.push_back(r.metric);
        if (!std::isnan(r.adjacency_auc)) auc.push_back(r.adjacency_auc);
      }
    const double m = mean(metric);
    double var = 0.0;
    for (double x : metric) var += (x - m) * (x - m);
    const VariantInfo& vi = info(variant);
    table.rows.push_back({variant, vi.aspect, vi.method, m, std::sqrt(var / static_cast<double>(metric.size())),
                          mean(auc)});
  }
  return table;
}

void write_ablation_csv(std::ostream& out, const AblationTable& table) {
  CsvWriter csv(out);
  csv.header({"aspect", "method", "variant", "seeds", "metric_mean", "metric_std", "adjacency_auc_mean"});
  const std::size_t seeds = table.rows.empty() ? 0 : table.runs.size() / table.rows.size();
  for (const auto& r : table.rows)
    csv.cell(r.aspect).cell(r.method).cell(r.variant).cell(seeds).cell(r.mean).cell(r.stddev).cell(r.auc_mean).end_row();
}

void write_ablation_runs_csv(std::ostream& out, const AblationTable& table) {
  CsvWriter csv(out);
  csv.header({"variant", "seed", "metric", "adjacency_auc", "final_loss"});
  for (const auto& r : table.runs)
    csv.cell(r.variant).cell(static_cast<std::size_t>(r.seed)).cell(r.metric).cell(r.adjacency_auc).cell(r.final_loss).end_row();
}

}  // namespace gpnn

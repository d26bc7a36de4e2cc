#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "gpnn/checkpoint.hpp"
#include "gpnn/experiment.hpp"
#include "gpnn/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace gpnn;

namespace {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool print_config = false;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config, "run configuration (INI)");
  cmd->add_option("--seed", c.seed, "overrides run.seed");
  auto* out = cmd->add_option("--out", c.out, "output path");
  if (out_required) out->required();
  cmd->add_flag("--print-config", c.print_config, "print the effective configuration and exit");
}

RunConfig load(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

GpnnModel load_model(const RunConfig& cfg, const Dataset& data, const std::string& checkpoint) {
  GpnnModel model(model_config(cfg, data));
  if (!fs::exists(checkpoint)) throw IoError("checkpoint '" + checkpoint + "' does not exist");
  model.parameters().import_tensors(load_checkpoint(checkpoint));
  return model;
}

Dataset eval_data(const RunConfig& cfg, const std::string& path) {
  if (!path.empty()) {
    if (!fs::exists(path)) throw IoError("data file '" + path + "' does not exist");
    return read_graph_file(path);
  }
  return load_data(cfg).second;
}

int cmd_gen(const Common& c, const std::string& spec_path) {
  RunConfig cfg = load(c);
  SynthSpec spec = cfg.synth;
  if (!spec_path.empty()) {
    std::ifstream in(spec_path);
    if (!in) throw IoError("cannot read spec '" + spec_path + "'");
    std::stringstream text;
    text << in.rdbuf();
    spec = parse_synth_spec_json(text.str());
  }
  if (c.seed) spec.seed = *c.seed;
  spec.validate();
  const Dataset data = generate(spec);
  {
    auto out = open_out(c.out);
    write_graph_stream(out, data);
    if (!out) throw IoError("write to '" + c.out + "' failed");
  }
  open_out(c.out + ".json") << synth_spec_json(spec);
  std::cout << "scenes " << data.sequences.size() << " frames " << data.frame_count() << '\n';
  return 0;
}

void write_summary(std::ostream& out, const EvalReport& r) {
  CsvWriter csv(out);
  csv.header({"frames", "loss", "accuracy", "adjacency_auc", "primary_metric"});
  csv.cell(r.frames).cell(r.loss).cell(r.accuracy).cell(r.adjacency_auc).cell(r.primary_metric()).end_row();
}

int cmd_train(const Common& c, const std::string& resume) {
  const RunConfig cfg = load(c);
  validate_config(cfg);
  const auto [train, test] = load_data(cfg);
  const fs::path dir = c.out;
  ensure_dir(dir);
  {
    auto file = open_out(dir / "config.ini");
    write_config(file, cfg);
  }
  GpnnModel model(model_config(cfg, train));
  const std::size_t workers = workers_from_environment();

  std::optional<NamedTensors> state;
  if (!resume.empty()) {
    if (!fs::exists(resume)) throw IoError("checkpoint '" + resume + "' does not exist");
    state = load_checkpoint(resume);
  }
  auto metrics = open_out(dir / "metrics.csv");
  const ExperimentResult r = run_experiment(model, cfg, train, test, workers, &metrics, state ? &*state : nullptr);
  save_checkpoint(dir / "checkpoint.ckpt", r.checkpoint);
  {
    auto file = open_out(dir / "summary.csv");
    write_summary(file, r.test);
  }
  write_summary(std::cout, r.test);
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& data_path) {
  const RunConfig cfg = load(c);
  validate_config(cfg);
  const Dataset data = eval_data(cfg, data_path);
  const GpnnModel model = load_model(cfg, data, checkpoint);
  // class weights and rare / non-rare counts come from the training split, as in training
  const Dataset train = load_data(cfg).first;
  LossConfig loss = cfg.loss;
  fill_class_weights(loss, train);
  std::map<std::string, std::vector<std::size_t>> counts;
  for (const auto& h : train.heads)
    if (h.activation == Activation::sigmoid) counts[h.name] = class_counts(train, h.name);
  const EvalReport r = evaluate(model, data, cfg.task, loss, counts);
  write_summary(std::cout, r);
  if (c.out.empty()) return 0;
  const fs::path dir = c.out;
  ensure_dir(dir);
  {
    auto file = open_out(dir / "summary.csv");
    write_summary(file, r);
  }
  auto per_class = open_out(dir / "per_class.csv");
  CsvWriter csv(per_class);
  csv.header({"head", "class", "support", "precision", "recall", "f1", "ap"});
  for (const auto& h : r.heads) {
    if (h.head.activation == Activation::softmax) {
      for (std::size_t k = 0; k < h.head.classes; ++k)
        csv.cell(h.head.name).cell(k).cell(h.f1.support[k]).cell(h.f1.precision[k]).cell(h.f1.recall[k])
            .cell(h.f1.f1[k]).cell(std::nan("")).end_row();
      {
        auto file = open_out(dir / ("confusion_" + h.head.name + ".csv"));
        write_matrix_csv(file, row_normalised(h.confusion));
      }
      auto pgm = open_out(dir / ("confusion_" + h.head.name + ".pgm"));
      write_pgm(pgm, row_normalised(h.confusion));
    } else if (h.has_map) {
      for (std::size_t k = 0; k < h.map.per_class.size(); ++k)
        csv.cell(h.head.name).cell(k).cell(h.map.per_class[k].ground_truth).cell(std::nan("")).cell(std::nan(""))
            .cell(std::nan("")).cell(h.map.per_class[k].ap).end_row();
    }
  }
  return 0;
}

int cmd_ablate(const Common& c, const std::string& suite_text, std::size_t seeds) {
  const RunConfig cfg = load(c);
  validate_config(cfg);
  std::vector<std::string> suite;
  if (suite_text.empty()) {
    suite = ablation_variants();
  } else {
    std::stringstream in(suite_text);
    std::string item;
    while (std::getline(in, item, ',')) suite.push_back(item);
  }
  const auto& known = ablation_variants();
  for (const auto& v : suite)
    if (std::find(known.begin(), known.end(), v) == known.end())
      throw CLI::ValidationError("--suite", "unknown variant '" + v + "'");
  std::vector<std::uint64_t> seed_list;
  for (std::size_t i = 0; i < seeds; ++i) seed_list.push_back(cfg.seed + i);
  const AblationTable table = run_ablation(suite, cfg, seed_list, workers_from_environment());
  write_ablation_csv(std::cout, table);
  if (c.out.empty()) return 0;
  const fs::path dir = c.out;
  ensure_dir(dir);
  {
    auto file = open_out(dir / "ablation.csv");
    write_ablation_csv(file, table);
  }
  {
    auto file = open_out(dir / "ablation_runs.csv");
    write_ablation_runs_csv(file, table);
  }
  return 0;
}

int cmd_gradcheck(const Common& c, double tolerance) {
  const RunConfig cfg = load(c);
  validate_config(cfg);
  ModelConfig m;
  m.node_dim = cfg.synth.node_dim;
  m.edge_dim = cfg.synth.edge_dim;
  m.iterations = cfg.iterations;
  m.link = cfg.link;
  m.link_sizes = cfg.link_sizes;
  m.mode = cfg.mode;
  m.heads = gradcheck_heads();
  m.seed = derive_seed(cfg.seed, 1);
  const auto start = std::chrono::steady_clock::now();
  const GradCheckReport report = gradient_check(m, cfg.seed);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream text;
  CsvWriter csv(text);
  csv.header({"block", "size", "kinks", "max_rel_error", "pass"});
  for (const auto& b : report.blocks)
    csv.cell(b.block).cell(b.size).cell(b.kinks).cell(b.max_rel_error).cell(std::string(b.max_rel_error < tolerance ? "1" : "0")).end_row();
  std::cout << text.str();
  if (!c.out.empty()) open_out(c.out) << text.str();
  std::cout << "worst " << format_double(report.worst()) << " seconds " << format_double(seconds) << ' '
            << (report.passed(tolerance) ? "PASS" : "FAIL") << '\n';
  if (!report.passed(tolerance))
    throw std::runtime_error("gradient check failed: worst relative error " + format_double(report.worst()));
  return 0;
}

int cmd_dump(const Common& c, const std::string& checkpoint, const std::string& data_path, std::size_t scene) {
  const RunConfig cfg = load(c);
  validate_config(cfg);
  const Dataset data = eval_data(cfg, data_path);
  if (scene >= data.sequences.size())
    throw std::out_of_range("scene " + std::to_string(scene) + " out of range (" +
                            std::to_string(data.sequences.size()) + " scenes)");
  const GpnnModel model = load_model(cfg, data, checkpoint);
  if (cfg.mode == StructureMode::no_graph) throw std::invalid_argument("no_graph mode has no adjacency to dump");
  Tape tape(Tape::Mode::no_grad);
  BoundParameters p(tape, model.parameters());
  const std::vector<ParseResult> results = parse_sequence(model, p, data.sequences[scene]);
  const std::string prefix = c.out;
  for (std::size_t t = 0; t < results.size(); ++t) {
    const auto& trace = results[t].adjacency_trace;
    for (std::size_t s = 0; s < trace.size(); ++s) {
      const std::string stem = prefix + "_t" + std::to_string(t) + "_s" + std::to_string(s + 1);
      {
        auto file = open_out(stem + ".csv");
        write_matrix_csv(file, trace[s].value());
      }
      auto pgm = open_out(stem + ".pgm");
      write_pgm(pgm, trace[s].value());
    }
  }
  write_matrix_csv(std::cout, results.back().adjacency.value());
  return 0;
}

const char* category(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e)) return "io";
  if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
  return "runtime";
}

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph parsing network: synthetic data, training, evaluation and ablations"};
  app.require_subcommand(0, 1);
  bool print_defaults = false;
  app.add_flag("--print-config", print_defaults, "print every configuration key with its default and exit");

  Common gen, train, eval, ablate, grad, dump;
  std::string spec_path, resume, checkpoint, data_path, suite;
  std::size_t seeds = 5, scene = 0;
  double tolerance = 1e-3;

  auto* g = app.add_subcommand("gen", "generate a synthetic graph file (plus a JSON spec sidecar)");
  add_common(g, gen, false);
  g->add_option("--spec", spec_path, "JSON spec sidecar to reproduce instead of [synth]");
  auto* t = app.add_subcommand("train", "train; writes checkpoint.ckpt, metrics.csv, summary.csv, config.ini");
  add_common(t, train, false);
  t->add_option("--resume", resume, "checkpoint to continue from");
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(e, eval, false);
  e->add_option("--checkpoint", checkpoint, "trained parameters");
  e->add_option("--data", data_path, "graph file (default: the configured test split)");
  auto* a = app.add_subcommand("ablate", "run the ablation suite; writes ablation.csv and ablation_runs.csv");
  add_common(a, ablate, false);
  a->add_option("--suite", suite, "comma-separated variants (default: all)");
  a->add_option("--seeds", seeds, "number of seeds, starting at run.seed")->check(CLI::PositiveNumber);
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check on a 4-node scene");
  add_common(gc, grad, false);
  gc->add_option("--tolerance", tolerance, "maximum relative error")->check(CLI::PositiveNumber);
  auto* d = app.add_subcommand("dump-adjacency", "write A^s of one scene as CSV and PGM");
  add_common(d, dump, false);
  d->add_option("--checkpoint", checkpoint, "trained parameters");
  d->add_option("--data", data_path, "graph file (default: the configured test split)");
  d->add_option("--scene", scene, "scene index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::cerr << "error: usage: " << one_line(ex.what()) << '\n';
    return 1;
  }

  try {
    if (print_defaults) {
      write_config(std::cout, RunConfig{});
      return 0;
    }
    for (auto [cmd, common] : {std::pair{g, &gen}, {t, &train}, {e, &eval}, {a, &ablate}, {gc, &grad}, {d, &dump}})
      if (cmd->parsed() && common->print_config) {
        write_config(std::cout, load(*common));
        return 0;
      }
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw CLI::RequiredError(what);
    };
    if (g->parsed()) {
      need(!gen.out.empty(), "--out");
      return cmd_gen(gen, spec_path);
    }
    if (t->parsed()) {
      need(!train.out.empty(), "--out");
      return cmd_train(train, resume);
    }
    if (e->parsed()) {
      need(!checkpoint.empty(), "--checkpoint");
      return cmd_eval(eval, checkpoint, data_path);
    }
    if (a->parsed()) return cmd_ablate(ablate, suite, seeds);
    if (gc->parsed()) return cmd_gradcheck(grad, tolerance);
    if (d->parsed()) {
      need(!checkpoint.empty(), "--checkpoint");
      need(!dump.out.empty(), "--out");
      return cmd_dump(dump, checkpoint, data_path, scene);
    }
    std::cerr << "error: usage: a subcommand is required (gen, train, eval, ablate, gradcheck, dump-adjacency)\n";
    return 1;
  } catch (const CLI::RequiredError& ex) {
    std::cerr << "error: usage: " << one_line(ex.what()) << "\n";
    return 1;
  } catch (const CLI::ValidationError& ex) {
    std::cerr << "error: usage: " << one_line(ex.what()) << "\n";
    return 1;
  } catch (const ConfigError& ex) {
    std::cerr << "error: config: " << one_line(ex.what()) << '\n';
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << category(ex) << ": " << one_line(ex.what()) << '\n';
    return 2;
  }
}

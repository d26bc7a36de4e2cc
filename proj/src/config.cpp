#include "gpnn/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <algorithm>
#include <functional>
#include <map>
#include "json.hpp"
#include <ostream>
#include <sstream>

namespace gpnn {

namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  throw ConfigError("config key '" + key + "': " + why + " (got '" + value + "')");
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    bad_value(key, v, "expected a number");
  }
  if (used != v.size()) bad_value(key, v, "expected a number");
  return d;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    bad_value(key, v, "expected a non-negative integer");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    bad_value(key, v, "integer out of range");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string join_weights(const std::map<std::string, double>& m) {
  std::string out;
  for (const auto& [k, w] : m) out += (out.empty() ? "" : ",") + k + ":" + format_double(w);
  return out;
}

std::string join_class_weights(const std::map<std::string, std::vector<double>>& m) {
  std::string out;
  for (const auto& [k, ws] : m) {
    out += (out.empty() ? "" : ";") + k + ":";
    for (std::size_t i = 0; i < ws.size(); ++i) out += (i ? "," : "") + format_double(ws[i]);
  }
  return out;
}

struct Key {
  std::string name;  // section.key
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
Key size_key(std::string name, T RunConfig::*group, std::size_t T::*field) {
  return {name, [=](const RunConfig& c) { return std::to_string(c.*group.*field); },
          [=](RunConfig& c, const std::string& v) { c.*group.*field = to_uint(name, v); }};
}

template <class T>
Key real_key(std::string name, T RunConfig::*group, double T::*field) {
  return {name, [=](const RunConfig& c) { return format_double(c.*group.*field); },
          [=](RunConfig& c, const std::string& v) { c.*group.*field = to_double(name, v); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> all = [] {
    std::vector<Key> k;
    k.push_back({"run.task", [](const RunConfig& c) { return to_string(c.task); },
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.task = parse_task_kind(v);
                   } catch (const std::invalid_argument&) {
                     bad_value("run.task", v, "expected spatial-detection, temporal-recognition or temporal-anticipation");
                   }
                 }});
    k.push_back({"run.seed", [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& v) { c.seed = to_uint("run.seed", v); }});

    k.push_back({"synth.task", [](const RunConfig& c) { return to_string(c.synth.task); },
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.synth.task = parse_synth_task(v);
                   } catch (const std::invalid_argument&) {
                     bad_value("synth.task", v, "expected planted, relay or sequence");
                   }
                 }});
    k.push_back(size_key("synth.scenes", &RunConfig::synth, &SynthSpec::scenes));
    k.push_back(size_key("synth.min_nodes", &RunConfig::synth, &SynthSpec::min_nodes));
    k.push_back(size_key("synth.max_nodes", &RunConfig::synth, &SynthSpec::max_nodes));
    k.push_back(real_key("synth.human_ratio", &RunConfig::synth, &SynthSpec::human_ratio));
    k.push_back(size_key("synth.node_dim", &RunConfig::synth, &SynthSpec::node_dim));
    k.push_back(size_key("synth.edge_dim", &RunConfig::synth, &SynthSpec::edge_dim));
    k.push_back(size_key("synth.classes", &RunConfig::synth, &SynthSpec::classes));
    k.push_back(size_key("synth.categories", &RunConfig::synth, &SynthSpec::categories));
    k.push_back(real_key("synth.density", &RunConfig::synth, &SynthSpec::density));
    k.push_back(real_key("synth.noise", &RunConfig::synth, &SynthSpec::noise));
    k.push_back(size_key("synth.frames", &RunConfig::synth, &SynthSpec::frames));
    k.push_back(real_key("synth.persistence", &RunConfig::synth, &SynthSpec::persistence));
    k.push_back(real_key("synth.visibility", &RunConfig::synth, &SynthSpec::visibility));
    k.push_back(real_key("synth.cue", &RunConfig::synth, &SynthSpec::cue));
    k.push_back(real_key("synth.cue_noise", &RunConfig::synth, &SynthSpec::cue_noise));
    k.push_back({"synth.seed", [](const RunConfig& c) { return std::to_string(c.synth.seed); },
                 [](RunConfig& c, const std::string& v) { c.synth.seed = to_uint("synth.seed", v); }});

    k.push_back({"data.train", [](const RunConfig& c) { return c.data.train.string(); },
                 [](RunConfig& c, const std::string& v) { c.data.train = v; }});
    k.push_back({"data.test", [](const RunConfig& c) { return c.data.test.string(); },
                 [](RunConfig& c, const std::string& v) { c.data.test = v; }});
    k.push_back(size_key("data.train_scenes", &RunConfig::data, &DataConfig::train_scenes));

    k.push_back({"model.iterations", [](const RunConfig& c) { return std::to_string(c.iterations); },
                 [](RunConfig& c, const std::string& v) { c.iterations = to_uint("model.iterations", v); }});
    k.push_back({"model.link", [](const RunConfig& c) { return to_string(c.link); },
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.link = parse_link_kind(v);
                   } catch (const std::invalid_argument&) {
                     bad_value("model.link", v, "expected mlp or convlstm");
                   }
                 }});
    k.push_back({"model.link_sizes", [](const RunConfig& c) { return join_sizes(c.link_sizes); },
                 [](RunConfig& c, const std::string& v) {
                   c.link_sizes.clear();
                   for (const auto& part : split(v, ',')) c.link_sizes.push_back(to_uint("model.link_sizes", part));
                 }});
    k.push_back({"model.structure", [](const RunConfig& c) { return to_string(c.mode); },
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.mode = parse_structure_mode(v);
                   } catch (const std::invalid_argument&) {
                     bad_value("model.structure", v, "expected joint, static, constant or none");
                   }
                 }});

    k.push_back({"optimizer.kind", [](const RunConfig& c) { return to_string(c.optimizer.kind); },
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.optimizer.kind = parse_optimizer_kind(v);
                   } catch (const std::invalid_argument&) {
                     bad_value("optimizer.kind", v, "expected sgd or adam");
                   }
                 }});
    k.push_back(real_key("optimizer.learning_rate", &RunConfig::optimizer, &OptimizerConfig::learning_rate));
    k.push_back(real_key("optimizer.decay", &RunConfig::optimizer, &OptimizerConfig::decay));
    k.push_back(size_key("optimizer.decay_every", &RunConfig::optimizer, &OptimizerConfig::decay_every));
    k.push_back(size_key("optimizer.batch_size", &RunConfig::optimizer, &OptimizerConfig::batch_size));
    k.push_back(size_key("optimizer.epochs", &RunConfig::optimizer, &OptimizerConfig::epochs));
    k.push_back(real_key("optimizer.beta1", &RunConfig::optimizer, &OptimizerConfig::beta1));
    k.push_back(real_key("optimizer.beta2", &RunConfig::optimizer, &OptimizerConfig::beta2));
    k.push_back(real_key("optimizer.epsilon", &RunConfig::optimizer, &OptimizerConfig::epsilon));

    k.push_back(real_key("loss.adjacency_weight", &RunConfig::loss, &LossConfig::adjacency_weight));
    k.push_back(real_key("loss.hinge_margin", &RunConfig::loss, &LossConfig::hinge_margin));
    // head:w,w,...;head:w,...   empty = inverse frequency for sigmoid heads
    k.push_back({"loss.class_weights", [](const RunConfig& c) { return join_class_weights(c.loss.class_weights); },
                 [](RunConfig& c, const std::string& v) {
                   c.loss.class_weights.clear();
                   if (v.empty()) return;
                   for (const auto& item : split(v, ';')) {
                     const auto colon = item.find(':');
                     if (colon == std::string::npos || colon == 0)
                       bad_value("loss.class_weights", v, "expected head:w,w,... entries separated by ';'");
                     auto& ws = c.loss.class_weights[trim(item.substr(0, colon))];
                     for (const auto& w : split(item.substr(colon + 1), ','))
                       ws.push_back(to_double("loss.class_weights", w));
                   }
                 }});
    k.push_back({"loss.head_weights", [](const RunConfig& c) { return join_weights(c.loss.head_weights); },
                 [](RunConfig& c, const std::string& v) {
                   c.loss.head_weights.clear();
                   if (v.empty()) return;
                   for (const auto& item : split(v, ',')) {
                     const auto colon = item.find(':');
                     if (colon == std::string::npos || colon == 0)
                       bad_value("loss.head_weights", v, "expected head:weight entries separated by ','");
                     c.loss.head_weights[trim(item.substr(0, colon))] = to_double("loss.head_weights", item.substr(colon + 1));
                   }
                 }});
    return k;
  }();
  return all;
}

}  // namespace

RunConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config syntax error on line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("config key '" + section + "' is outside any section");
    for (const auto& [name, value] : body) {
      const std::string full = section + "." + name;
      auto it = std::find_if(keys().begin(), keys().end(), [&](const Key& k) { return k.name == full; });
      if (it == keys().end()) throw ConfigError("unknown config key '" + full + "'");
      it->set(cfg, trim(value.data()));
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse_config(in);
}

void write_config(std::ostream& out, const RunConfig& cfg) {
  std::string section;
  for (const Key& k : keys()) {
    const auto dot = k.name.find('.');
    const std::string s = k.name.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    out << k.name.substr(dot + 1) << " = " << k.get(cfg) << '\n';
  }
}

void validate_config(const RunConfig& cfg) {
  auto check = [](const char* key, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config section '") + key + "': " + e.what());
    }
  };
  if (cfg.iterations < 1) throw ConfigError("config key 'model.iterations': S must be >= 1 (got 0)");
  if (cfg.link_sizes.empty() || cfg.link_sizes.back() != 1)
    throw ConfigError("config key 'model.link_sizes': the last layer must have 1 channel");
  for (std::size_t s : cfg.link_sizes)
    if (s == 0) throw ConfigError("config key 'model.link_sizes': layer widths must be positive");
  if (cfg.optimizer.epochs == 0) throw ConfigError("config key 'optimizer.epochs': must be positive (got 0)");
  check("optimizer", [&] { cfg.optimizer.validate(); });
  check("loss", [&] { cfg.loss.validate(); });
  if (cfg.data.train.empty()) {
    check("synth", [&] { cfg.synth.validate(); });
  } else if (!std::filesystem::exists(cfg.data.train)) {
    throw ConfigError("config key 'data.train': file '" + cfg.data.train.string() + "' does not exist");
  }
  if (!cfg.data.test.empty() && !std::filesystem::exists(cfg.data.test))
    throw ConfigError("config key 'data.test': file '" + cfg.data.test.string() + "' does not exist");
  if (cfg.task == TaskKind::temporal_anticipation && cfg.data.train.empty() && cfg.synth.frames < 2)
    throw ConfigError("config key 'synth.frames': anticipation needs at least 2 frames");
}

ModelConfig model_config(const RunConfig& cfg, const Dataset& data) {
  ModelConfig m;
  m.node_dim = data.node_dim;
  m.edge_dim = data.edge_dim;
  m.iterations = cfg.iterations;
  m.link = cfg.link;
  m.link_sizes = cfg.link_sizes;
  m.mode = cfg.mode;
  m.heads = data.heads;
  m.seed = derive_seed(cfg.seed, 1);
  return m;
}

TrainConfig train_config(const RunConfig& cfg, std::size_t workers) {
  TrainConfig t;
  t.task = cfg.task;
  t.optimizer = cfg.optimizer;
  t.loss = cfg.loss;
  t.seed = derive_seed(cfg.seed, 2);
  t.workers = workers;
  return t;
}

std::pair<Dataset, Dataset> load_data(const RunConfig& cfg) {
  Dataset train = cfg.data.train.empty() ? generate(cfg.synth) : read_graph_file(cfg.data.train);
  if (!cfg.data.test.empty()) {
    Dataset test = read_graph_file(cfg.data.test);
    if (test.node_dim != train.node_dim || test.edge_dim != train.edge_dim || test.heads != train.heads)
      throw DimensionError("test data schema differs from the training data");
    return {std::move(train), std::move(test)};
  }
  const std::size_t n = train.sequences.size();
  std::size_t count = cfg.data.train_scenes ? cfg.data.train_scenes : (n * 4) / 5;
  if (count == 0 || count >= n)
    throw ConfigError("config key 'data.train_scenes': split point " + std::to_string(count) + " leaves no " +
                      (count == 0 ? "training" : "test") + " scenes out of " + std::to_string(n));
  return split_dataset(train, count);
}

std::string synth_spec_json(const SynthSpec& s) {
  nlohmann::ordered_json j;
  j["task"] = to_string(s.task);
  j["scenes"] = s.scenes;
  j["min_nodes"] = s.min_nodes;
  j["max_nodes"] = s.max_nodes;
  j["human_ratio"] = s.human_ratio;
  j["node_dim"] = s.node_dim;
  j["edge_dim"] = s.edge_dim;
  j["classes"] = s.classes;
  j["categories"] = s.categories;
  j["density"] = s.density;
  j["noise"] = s.noise;
  j["frames"] = s.frames;
  j["persistence"] = s.persistence;
  j["visibility"] = s.visibility;
  j["cue"] = s.cue;
  j["cue_noise"] = s.cue_noise;
  j["seed"] = s.seed;
  j["rng"] = std::string(Rng::algorithm);
  j["format_version"] = kGraphFileVersion;
  return j.dump(2) + "\n";
}

SynthSpec parse_synth_spec_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("spec sidecar is not valid JSON: ") + e.what());
  }
  SynthSpec s;
  try {
    s.task = parse_synth_task(j.at("task").get<std::string>());
    s.scenes = j.at("scenes").get<std::size_t>();
    s.min_nodes = j.at("min_nodes").get<std::size_t>();
    s.max_nodes = j.at("max_nodes").get<std::size_t>();
    s.human_ratio = j.at("human_ratio").get<double>();
    s.node_dim = j.at("node_dim").get<std::size_t>();
    s.edge_dim = j.at("edge_dim").get<std::size_t>();
    s.classes = j.at("classes").get<std::size_t>();
    s.categories = j.at("categories").get<std::size_t>();
    s.density = j.at("density").get<double>();
    s.noise = j.at("noise").get<double>();
    s.frames = j.at("frames").get<std::size_t>();
    s.persistence = j.at("persistence").get<double>();
    s.visibility = j.at("visibility").get<double>();
    s.cue = j.value("cue", s.cue);
    s.cue_noise = j.value("cue_noise", s.cue_noise);
    s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("spec sidecar: ") + e.what());
  }
  return s;
}

}  // namespace gpnn

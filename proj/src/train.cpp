#include "gpnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace gpnn {

std::string to_string(TaskKind t) {
  switch (t) {
    case TaskKind::spatial_detection: return "spatial-detection";
    case TaskKind::temporal_recognition: return "temporal-recognition";
    case TaskKind::temporal_anticipation: return "temporal-anticipation";
  }
  return "?";
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "spatial-detection") return TaskKind::spatial_detection;
  if (s == "temporal-recognition") return TaskKind::temporal_recognition;
  if (s == "temporal-anticipation") return TaskKind::temporal_anticipation;
  throw std::invalid_argument("unknown task '" + s + "'");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("lr decay must lie in (0, 1]");
  if (decay_every == 0) throw std::invalid_argument("decay interval must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
}

double scheduled_learning_rate(const OptimizerConfig& cfg, std::size_t epoch) {
  return cfg.learning_rate * std::pow(cfg.decay, static_cast<double>(epoch / cfg.decay_every));
}

Optimizer::Optimizer(OptimizerConfig cfg, const ParameterStore& params) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.kind == OptimizerKind::adam)
    for (const Tensor& t : params.values()) {
      m_.emplace_back(t.shape());
      v_.emplace_back(t.shape());
    }
}

void Optimizer::step(ParameterStore& params, const std::vector<Tensor>& grads, double lr) {
  if (grads.size() != params.size()) throw std::invalid_argument("gradient count does not match parameters");
  ++steps_;
  if (cfg_.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto w = params.values()[i].data();
      auto g = grads[i].data();
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j];
    }
    return;
  }
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params.values()[i].data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.epsilon);
    }
  }
}

NamedTensors Optimizer::state(const ParameterStore& params) const {
  NamedTensors out;
  out.emplace_back("optim.steps", Tensor::scalar(static_cast<double>(steps_)));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    out.emplace_back("optim.m/" + params.name(ParamId{i}), m_[i]);
    out.emplace_back("optim.v/" + params.name(ParamId{i}), v_[i]);
  }
  return out;
}

void Optimizer::load_state(const NamedTensors& tensors, const ParameterStore& params) {
  const Tensor* steps = find_tensor(tensors, "optim.steps");
  if (!steps) throw std::invalid_argument("checkpoint has no optimizer state");
  steps_ = static_cast<std::size_t>(steps->item());
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const std::string& name = params.name(ParamId{i});
    const Tensor* m = find_tensor(tensors, "optim.m/" + name);
    const Tensor* v = find_tensor(tensors, "optim.v/" + name);
    if (!m || !v) throw std::invalid_argument("checkpoint lacks Adam moments for '" + name + "'");
    if (m->shape() != m_[i].shape() || v->shape() != v_[i].shape())
      throw DimensionError("Adam moments for '" + name + "' have the wrong shape");
    m_[i] = *m;
    v_[i] = *v;
  }
}

void fill_class_weights(LossConfig& loss, const Dataset& train) {
  for (const auto& h : train.heads)
    if (h.activation == Activation::sigmoid && !loss.class_weights.count(h.name))
      loss.class_weights[h.name] = inverse_frequency_weights(class_counts(train, h.name));
}

std::vector<AnticipationPair> frame_pairs(const Sequence& seq, TaskKind task) {
  if (task == TaskKind::temporal_anticipation) return anticipation_shift(seq);
  std::vector<AnticipationPair> out;
  for (std::size_t t = 0; t < seq.size(); ++t) out.push_back({t, t});
  return out;
}

namespace {

std::size_t argmax_row(const Tensor& t, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < t.dim(1); ++k)
    if (t.at(row, k) > t.at(row, best)) best = k;
  return best;
}

void tally_labels(const ParseResult& r, const SceneGraph& labels, const ModelConfig& cfg, LabelTally& tally) {
  for (std::size_t h = 0; h < cfg.heads.size(); ++h) {
    const HeadSpec& head = cfg.heads[h];
    auto it = labels.gt_labels.find(head.name);
    if (it == labels.gt_labels.end()) continue;
    const Tensor& y = r.output(h);
    for (std::size_t v : labels.nodes_in(head.scope)) {
      bool ok = true;
      if (head.activation == Activation::softmax) {
        ok = argmax_row(y, v) == argmax_row(it->second, v);
      } else {
        for (std::size_t k = 0; k < head.classes && ok; ++k)
          ok = (y.at(v, k) >= 0.5) == (it->second.at(v, k) == 1.0);
      }
      tally.correct += ok ? 1 : 0;
      ++tally.total;
    }
  }
}

}  // namespace

SequenceResult run_sequence(const GpnnModel& model, const Sequence& seq, TaskKind task, const LossConfig& loss,
                            bool with_gradients) {
  Tape tape(with_gradients ? Tape::Mode::record : Tape::Mode::no_grad);
  BoundParameters p(tape, model.parameters());
  const auto pairs = frame_pairs(seq, task);
  TemporalLinkState temporal;
  SequenceResult out;
  Var total = tape.constant(Tensor::scalar(0.0));
  for (const auto& pair : pairs) {
    const SceneGraph& input = seq[pair.input_frame];
    const SceneGraph& label = seq[pair.label_frame];
    ParseResult r = parse(model, p, input, &temporal);
    total = add(total, total_loss(r, input, label, model.config(), loss));
    tally_labels(r, label, model.config(), out.tally);
  }
  total = scale(total, 1.0 / static_cast<double>(pairs.size()));
  out.loss = total.value().item();
  if (with_gradients) {
    tape.backward(total);
    out.gradients = p.gradients();
  }
  return out;
}

namespace {

template <class Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w)
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

Trainer::Trainer(GpnnModel& model, TrainConfig cfg)
    : model_(model), cfg_(std::move(cfg)), optimizer_(cfg_.optimizer, model.parameters()) {
  cfg_.loss.validate();
}

EpochStats Trainer::train_epoch(const Dataset& train) {
  if (train.sequences.empty()) throw std::invalid_argument("training set is empty");
  const double lr = scheduled_learning_rate(cfg_.optimizer, epoch_);
  std::vector<std::size_t> order(train.sequences.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle(derive_seed(cfg_.seed, 0x5eed, epoch_));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

  ParameterStore& params = model_.parameters();
  double loss_sum = 0.0;
  LabelTally tally;
  const std::size_t batch = cfg_.optimizer.batch_size;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t count = std::min(batch, order.size() - start);
    std::vector<SequenceResult> results(count);
    parallel_for(count, cfg_.workers, [&](std::size_t i) {
      results[i] = run_sequence(model_, train.sequences[order[start + i]], cfg_.task, cfg_.loss, true);
    });
    std::vector<Tensor> grads = std::move(results[0].gradients);
    for (std::size_t i = 1; i < count; ++i)
      for (std::size_t j = 0; j < grads.size(); ++j) {
        auto g = grads[j].data();
        auto r = results[i].gradients[j].data();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += r[k];
      }
    const double inv = 1.0 / static_cast<double>(count);
    for (auto& g : grads)
      for (double& x : g.data()) x *= inv;
    for (const auto& r : results) {
      loss_sum += r.loss;
      tally.correct += r.tally.correct;
      tally.total += r.tally.total;
    }
    optimizer_.step(params, grads, lr);
  }
  ++epoch_;
  return {epoch_, lr, loss_sum / static_cast<double>(order.size()), tally.accuracy()};
}

NamedTensors Trainer::checkpoint() const {
  NamedTensors out = model_.parameters().export_tensors();
  for (auto& entry : optimizer_.state(model_.parameters())) out.push_back(std::move(entry));
  out.emplace_back("train.epoch", Tensor::scalar(static_cast<double>(epoch_)));
  return out;
}

void Trainer::restore(const NamedTensors& tensors) {
  model_.parameters().import_tensors(tensors);
  optimizer_.load_state(tensors, model_.parameters());
  const Tensor* epoch = find_tensor(tensors, "train.epoch");
  if (!epoch) throw std::invalid_argument("checkpoint has no training progress");
  epoch_ = static_cast<std::size_t>(epoch->item());
}

double EvalReport::primary_metric() const {
  for (const auto& h : heads)
    if (h.head.activation == Activation::softmax) return h.f1.macro;
  for (const auto& h : heads)
    if (h.has_map) return h.map.full;
  return accuracy;
}

void collect_detections(const ParseResult& result, const SceneGraph& frame, std::size_t head_index,
                        const std::string& image, std::vector<Detection>& detections,
                        std::vector<Detection>& ground_truth) {
  if (frame.boxes.empty()) return;
  const std::size_t classes = result.output(head_index).dim(1);
  for (std::size_t h = 0; h < frame.node_count(); ++h) {
    if (frame.kinds[h] != NodeKind::human) continue;
    for (std::size_t o = 0; o < frame.node_count(); ++o) {
      if (frame.kinds[o] != NodeKind::object) continue;
      for (std::size_t k = 0; k < classes; ++k)
        detections.push_back({image, k, pair_score(result, frame, h, o, head_index, k), frame.boxes[h], frame.boxes[o]});
    }
  }
  for (const auto& it : frame.interactions)
    ground_truth.push_back({image, it.cls, 1.0, frame.boxes[it.human], frame.boxes[it.object]});
}

EvalReport evaluate(const GpnnModel& model, const Dataset& data, TaskKind task, const LossConfig& loss,
                    const std::map<std::string, std::vector<std::size_t>>& training_counts) {
  const ModelConfig& cfg = model.config();
  EvalReport rep;
  LabelTally tally;
  std::vector<std::vector<std::size_t>> preds(cfg.heads.size()), labels(cfg.heads.size());
  std::vector<std::vector<Detection>> dets(cfg.heads.size()), gts(cfg.heads.size());
  std::vector<double> adj_scores;
  std::vector<bool> adj_truth;
  double loss_sum = 0.0;

  for (std::size_t s = 0; s < data.sequences.size(); ++s) {
    const Sequence& seq = data.sequences[s];
    Tape tape(Tape::Mode::no_grad);
    BoundParameters p(tape, model.parameters());
    TemporalLinkState temporal;
    double seq_loss = 0.0;
    const auto pairs = frame_pairs(seq, task);
    for (const auto& pair : pairs) {
      const SceneGraph& input = seq[pair.input_frame];
      const SceneGraph& label = seq[pair.label_frame];
      ParseResult r = parse(model, p, input, &temporal);
      seq_loss += total_loss(r, input, label, cfg, loss).value().item();
      tally_labels(r, label, cfg, tally);
      ++rep.frames;
      for (std::size_t h = 0; h < cfg.heads.size(); ++h) {
        const HeadSpec& head = cfg.heads[h];
        auto y = label.gt_labels.find(head.name);
        if (head.activation == Activation::softmax) {
          if (y == label.gt_labels.end()) continue;
          for (std::size_t v : label.nodes_in(head.scope)) {
            preds[h].push_back(argmax_row(r.output(h), v));
            labels[h].push_back(argmax_row(y->second, v));
          }
        } else {
          collect_detections(r, label, h, std::to_string(s) + ":" + std::to_string(pair.input_frame), dets[h],
                             gts[h]);
        }
      }
      if (r.adjacency.valid() && input.gt_adjacency)
        for (std::size_t v = 0; v < input.node_count(); ++v)
          for (std::size_t w = 0; w < input.node_count(); ++w)
            if (v != w) {
              adj_scores.push_back(r.adjacency.value().at(v, w));
              adj_truth.push_back(input.gt_adjacency->at(v, w) == 1.0);
            }
    }
    loss_sum += seq_loss / static_cast<double>(pairs.size());
  }
  rep.loss = data.sequences.empty() ? 0.0 : loss_sum / static_cast<double>(data.sequences.size());
  rep.accuracy = tally.accuracy();
  const bool both = std::find(adj_truth.begin(), adj_truth.end(), true) != adj_truth.end() &&
                    std::find(adj_truth.begin(), adj_truth.end(), false) != adj_truth.end();
  rep.adjacency_auc = both ? roc_auc(adj_scores, adj_truth) : std::numeric_limits<double>::quiet_NaN();

  for (std::size_t h = 0; h < cfg.heads.size(); ++h) {
    HeadReport hr;
    hr.head = cfg.heads[h];
    if (hr.head.activation == Activation::softmax) {
      hr.f1 = macro_f1(preds[h], labels[h], hr.head.classes);
      hr.confusion = confusion(preds[h], labels[h], hr.head.classes);
    } else if (!gts[h].empty() || !dets[h].empty()) {
      auto counts = training_counts.find(hr.head.name);
      std::vector<std::size_t> c = counts != training_counts.end() ? counts->second : class_counts(data, hr.head.name);
      hr.map = grouped_map(dets[h], gts[h], hr.head.classes, c);
      hr.has_map = true;
    }
    rep.heads.push_back(std::move(hr));
  }
  return rep;
}

std::size_t workers_from_environment() {
  const char* v = std::getenv("GPNN_WORKERS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 256)
    throw std::invalid_argument("GPNN_WORKERS must be an integer in [1, 256], got '" + std::string(v) + "'");
  return static_cast<std::size_t>(n);
}

}  // namespace gpnn

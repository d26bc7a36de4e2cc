#include "gpnn/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace gpnn {

double iou(const Box& a, const Box& b) {
  const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double average_precision(const std::vector<bool>& is_tp, std::size_t ground_truth) {
  if (ground_truth == 0) return 0.0;
  const std::size_t n = is_tp.size();
  std::vector<double> recall(n), precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += is_tp[i] ? 1 : 0;
    recall[i] = static_cast<double>(tp) / static_cast<double>(ground_truth);
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev) * precision[i];
    prev = recall[i];
  }
  return ap;
}

ApResult match_and_ap(const std::vector<Detection>& detections,
                      const std::vector<Detection>& ground_truth, std::size_t cls, double threshold) {
  std::vector<const Detection*> gt;
  for (const auto& g : ground_truth)
    if (g.cls == cls) gt.push_back(&g);
  std::vector<const Detection*> dets;
  for (const auto& d : detections)
    if (d.cls == cls) dets.push_back(&d);
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection* a, const Detection* b) { return a->score > b->score; });

  ApResult r;
  r.ground_truth = gt.size();
  r.no_ground_truth = gt.empty();
  std::vector<bool> matched(gt.size(), false), is_tp;
  for (const Detection* d : dets) {
    bool hit = false;
    for (std::size_t j = 0; j < gt.size() && !hit; ++j) {
      if (matched[j] || gt[j]->image != d->image) continue;
      if (iou(d->human, gt[j]->human) > threshold && iou(d->object, gt[j]->object) > threshold) {
        matched[j] = true;
        hit = true;
      }
    }
    is_tp.push_back(hit);
    (hit ? r.true_positives : r.false_positives) += 1;
  }
  r.ap = r.no_ground_truth ? 0.0 : average_precision(is_tp, gt.size());
  return r;
}

MapReport grouped_map(const std::vector<Detection>& detections,
                      const std::vector<Detection>& ground_truth, std::size_t classes,
                      const std::vector<std::size_t>& training_counts, std::size_t rare_threshold) {
  if (training_counts.size() != classes)
    throw std::invalid_argument("grouped_map: " + std::to_string(training_counts.size()) +
                                " training counts for " + std::to_string(classes) + " classes");
  MapReport rep;
  rep.training_counts = training_counts;
  double full = 0, rare = 0, non_rare = 0;
  std::size_t n_full = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    rep.per_class.push_back(match_and_ap(detections, ground_truth, c));
    const ApResult& r = rep.per_class.back();
    if (r.no_ground_truth) continue;
    full += r.ap;
    ++n_full;
    if (training_counts[c] < rare_threshold) {
      rare += r.ap;
      ++rep.rare_classes;
    } else {
      non_rare += r.ap;
      ++rep.non_rare_classes;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rep.full = n_full ? full / static_cast<double>(n_full) : nan;
  rep.rare = rep.rare_classes ? rare / static_cast<double>(rep.rare_classes) : nan;
  rep.non_rare = rep.non_rare_classes ? non_rare / static_cast<double>(rep.non_rare_classes) : nan;
  return rep;
}

namespace {

void check_labels(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& labels,
                  std::size_t classes) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("predictions and labels differ in length (" +
                                std::to_string(predictions.size()) + " vs " +
                                std::to_string(labels.size()) + ")");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= classes || predictions[i] >= classes)
      throw std::out_of_range("class id out of range at sample " + std::to_string(i));
}

}  // namespace

ConfusionMatrix confusion(const std::vector<std::size_t>& predictions,
                          const std::vector<std::size_t>& labels, std::size_t classes) {
  check_labels(predictions, labels, classes);
  ConfusionMatrix m(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) ++m[labels[i]][predictions[i]];
  return m;
}

F1Report macro_f1(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& labels,
                  std::size_t classes) {
  const ConfusionMatrix m = confusion(predictions, labels, classes);
  F1Report r;
  r.precision.assign(classes, 0.0);
  r.recall.assign(classes, 0.0);
  r.f1.assign(classes, 0.0);
  r.support.assign(classes, 0);
  r.excluded.assign(classes, false);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t predicted = 0;
    for (std::size_t i = 0; i < classes; ++i) {
      r.support[c] += m[c][i];
      predicted += m[i][c];
    }
    const double tp = static_cast<double>(m[c][c]);
    r.precision[c] = predicted ? tp / static_cast<double>(predicted) : 0.0;
    r.recall[c] = r.support[c] ? tp / static_cast<double>(r.support[c]) : 0.0;
    const double denom = r.precision[c] + r.recall[c];
    r.f1[c] = denom > 0.0 ? 2.0 * r.precision[c] * r.recall[c] / denom : 0.0;
    if (r.support[c] == 0) {
      r.excluded[c] = true;
      continue;
    }
    total += r.f1[c];
    ++counted;
  }
  r.macro = counted ? total / static_cast<double>(counted) : 0.0;
  return r;
}

double roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size())
    throw std::invalid_argument("roc_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) {
        rank_sum += avg_rank;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc needs both positive and negative samples");
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

std::vector<AnticipationPair> anticipation_shift(std::size_t frames) {
  if (frames < 2) throw std::invalid_argument("anticipation needs at least 2 frames, got " + std::to_string(frames));
  std::vector<AnticipationPair> out;
  for (std::size_t t = 1; t < frames; ++t) out.push_back({t - 1, t});
  return out;
}

std::vector<AnticipationPair> anticipation_shift(const Sequence& frames) {
  return anticipation_shift(frames.size());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

CsvWriter& CsvWriter::header(const std::vector<std::string>& names) {
  for (const auto& n : names) cell(n);
  end_row();
  return *this;
}

CsvWriter& CsvWriter::cell(const std::string& v) {
  if (!first_) out_ << ',';
  first_ = false;
  if (v.find_first_of(",\"\n") == std::string::npos) {
    out_ << v;
  } else {
    out_ << '"';
    for (char c : v) out_ << (c == '"' ? std::string("\"\"") : std::string(1, c));
    out_ << '"';
  }
  return *this;
}

CsvWriter& CsvWriter::cell(double v) { return cell(format_double(v)); }
CsvWriter& CsvWriter::cell(std::size_t v) { return cell(std::to_string(v)); }

void CsvWriter::end_row() {
  out_ << '\n';
  first_ = true;
}

void write_matrix_csv(std::ostream& out, const Tensor& m) {
  if (m.rank() != 2) throw DimensionError("write_matrix_csv expects a matrix, got " + to_string(m.shape()));
  CsvWriter csv(out);
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    for (std::size_t j = 0; j < m.dim(1); ++j) csv.cell(m.at(i, j));
    csv.end_row();
  }
}

void write_pgm(std::ostream& out, const Tensor& m) {
  if (m.rank() != 2) throw DimensionError("write_pgm expects a matrix, got " + to_string(m.shape()));
  out << "P5\n" << m.dim(1) << ' ' << m.dim(0) << "\n255\n";
  for (double v : m.data()) {
    const double c = std::clamp(std::isnan(v) ? 0.0 : v, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * c))));
  }
}

void write_pgm(const std::filesystem::path& path, const Tensor& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_pgm(out, m);
}

Tensor row_normalised(const ConfusionMatrix& c) {
  const std::size_t n = c.size();
  Tensor t = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    const double total = static_cast<double>(std::accumulate(c[i].begin(), c[i].end(), std::size_t{0}));
    if (total == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) t.at(i, j) = static_cast<double>(c[i][j]) / total;
  }
  return t;
}

void write_detections(std::ostream& out, const std::vector<Detection>& dets) {
  for (const auto& d : dets) {
    if (d.image.empty() || d.image.find_first_of(" \t\n") != std::string::npos)
      throw std::invalid_argument("image ids must be non-empty and contain no whitespace");
    out << d.image << ' ' << d.cls << ' ' << format_double(d.score);
    for (const Box* b : {&d.human, &d.object})
      out << ' ' << format_double(b->x1) << ' ' << format_double(b->y1) << ' ' << format_double(b->x2) << ' '
          << format_double(b->y2);
    out << '\n';
  }
}

std::vector<Detection> read_detections(std::istream& in) {
  std::vector<Detection> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream s(line);
    Detection d;
    long long cls = -1;
    s >> d.image >> cls >> d.score >> d.human.x1 >> d.human.y1 >> d.human.x2 >> d.human.y2 >> d.object.x1 >>
        d.object.y1 >> d.object.x2 >> d.object.y2;
    std::string rest;
    if (!s || cls < 0 || (s >> rest))
      throw std::invalid_argument("malformed detection record on line " + std::to_string(number));
    d.cls = static_cast<std::size_t>(cls);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace gpnn

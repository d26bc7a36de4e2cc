#pragma once

// Detection mAP, macro-F1 / confusion, ROC-AUC, anticipation pairing, and
// report export (CSV, PGM, line-delimited detection records).

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gpnn/scene.hpp"

namespace gpnn {

double iou(const Box& a, const Box& b);

/// A scored (human box, object box, class) triple; ground truth uses the same record.
struct Detection {
  std::string image;
  std::size_t cls = 0;
  double score = 0.0;
  Box human;
  Box object;

  bool operator==(const Detection&) const = default;
};

struct ApResult {
  double ap = 0.0;
  bool no_ground_truth = false;  ///< class has no gt; ap forced to 0
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t ground_truth = 0;
};

/// Greedy score-ordered matching (ties keep input order). A detection is a true
/// positive when both boxes overlap an unmatched gt pair of the same image and
/// class with IoU > threshold; the first such gt in input order is taken.
/// AP integrates the precision envelope over all recall points.
ApResult match_and_ap(const std::vector<Detection>& detections,
                      const std::vector<Detection>& ground_truth, std::size_t cls,
                      double threshold = 0.5);

/// Area under the precision envelope for a TP/FP sequence in score order.
double average_precision(const std::vector<bool>& is_tp, std::size_t ground_truth);

struct MapReport {
  std::vector<ApResult> per_class;
  std::vector<std::size_t> training_counts;
  double full = 0.0;      ///< mean AP over classes with test ground truth
  double rare = 0.0;      ///< … with fewer than `rare_threshold` training instances
  double non_rare = 0.0;  ///< … with at least `rare_threshold`
  std::size_t rare_classes = 0, non_rare_classes = 0;
};

/// Grouped mAP; a group with no evaluable class reports NaN.
MapReport grouped_map(const std::vector<Detection>& detections,
                      const std::vector<Detection>& ground_truth, std::size_t classes,
                      const std::vector<std::size_t>& training_counts,
                      std::size_t rare_threshold = 10);

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

/// confusion[i][j] = number of samples with true class i predicted as j.
ConfusionMatrix confusion(const std::vector<std::size_t>& predictions,
                          const std::vector<std::size_t>& labels, std::size_t classes);

struct F1Report {
  std::vector<double> precision, recall, f1;
  std::vector<std::size_t> support;
  std::vector<bool> excluded;  ///< zero-support classes, left out of the macro mean
  double macro = 0.0;
};

F1Report macro_f1(const std::vector<std::size_t>& predictions,
                  const std::vector<std::size_t>& labels, std::size_t classes);

/// Mann-Whitney estimate with average ranks for tied scores.
double roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive);

/// Frame t−1 is the input for the labels of frame t.
struct AnticipationPair {
  std::size_t input_frame;
  std::size_t label_frame;
  bool operator==(const AnticipationPair&) const = default;
};

std::vector<AnticipationPair> anticipation_shift(std::size_t frames);
std::vector<AnticipationPair> anticipation_shift(const Sequence& frames);

// --- export -------------------------------------------------------------

/// Writes rows as comma-separated lines; doubles print in shortest round-trip form.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}
  CsvWriter& header(const std::vector<std::string>& names);
  CsvWriter& cell(const std::string& v);
  CsvWriter& cell(double v);
  CsvWriter& cell(std::size_t v);
  void end_row();

 private:
  std::ostream& out_;
  bool first_ = true;
};

std::string format_double(double v);

/// Row-major matrix as CSV.
void write_matrix_csv(std::ostream& out, const Tensor& m);
/// 8-bit binary PGM; values are clamped to [0, 1] and stored as round(255 v).
void write_pgm(std::ostream& out, const Tensor& m);
void write_pgm(const std::filesystem::path& path, const Tensor& m);
/// Confusion matrix normalised per row, as a [classes, classes] tensor.
Tensor row_normalised(const ConfusionMatrix& c);

/// One record per line: image class score hx1 hy1 hx2 hy2 ox1 oy1 ox2 oy2
void write_detections(std::ostream& out, const std::vector<Detection>& dets);
std::vector<Detection> read_detections(std::istream& in);

}  // namespace gpnn

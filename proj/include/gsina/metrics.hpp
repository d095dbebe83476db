#ifndef GSINA_METRICS_HPP
#define GSINA_METRICS_HPP

#include "gsina/graph.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace gsina {

/// Fraction of rows whose argmax (first index on ties) equals the label.
double accuracy(const Matrix& logits, const std::vector<Index>& labels);

/// Mann-Whitney rank statistic; tied scores share their average rank.
/// Returns NaN when only one class is present.
double roc_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

struct InterpretMetrics {
  double edge_auc = 0.0;
  double precision_at_k = 0.0;
};

/// Edge AUC of `alpha_e` against the mask, and the fraction of the k largest
/// attentions (stable order, k capped at the edge count) that hit the mask.
InterpretMetrics interpret_metrics(const std::vector<double>& alpha_e, const std::vector<std::uint8_t>& gt_edge_mask,
                                   int k = 5);

struct SeparabilityReport {
  static constexpr int kBins = 50;
  std::vector<std::int64_t> background;   // mask 0
  std::vector<std::int64_t> explanation;  // mask 1
  double overlap = 0.0;                   // sum of bin-wise minima of the two normalized histograms
};

/// Histograms of attention over [0, 1] in 50 equal bins (1.0 lands in the last bin).
/// An empty class contributes a zero histogram and overlap 0.
SeparabilityReport separability_report(const std::vector<std::vector<double>>& alpha_e,
                                       const std::vector<std::vector<std::uint8_t>>& gt_edge_masks);

/// CSV with header bin_left,count_background,count_explanation.
void write_histogram_csv(std::ostream& out, const SeparabilityReport& report);
void write_histogram_csv(const std::filesystem::path& path, const SeparabilityReport& report);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

MeanStd mean_std(const std::vector<double>& values);

nlohmann::json to_json(const MeanStd& value);

}  // namespace gsina

#endif  // GSINA_METRICS_HPP

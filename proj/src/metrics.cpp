#include "gsina/metrics.hpp"

#include "gsina/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace gsina {

double accuracy(const Matrix& logits, const std::vector<Index>& labels) {
  if (static_cast<Index>(labels.size()) != logits.rows()) throw Error(ErrorCode::ShapeMismatch, "labels vs logits");
  if (labels.empty()) return 0.0;
  Index correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index best = 0;
    logits.row(i).maxCoeff(&best);
    correct += best == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double roc_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::ShapeMismatch, "scores vs labels");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

InterpretMetrics interpret_metrics(const std::vector<double>& alpha_e, const std::vector<std::uint8_t>& gt_edge_mask,
                                   int k) {
  if (gt_edge_mask.empty() && !alpha_e.empty()) throw Error(ErrorCode::MissingMask, "no ground-truth edge mask");
  if (alpha_e.size() != gt_edge_mask.size()) throw Error(ErrorCode::ShapeMismatch, "attention vs mask length");
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
  InterpretMetrics out;
  out.edge_auc = roc_auc(alpha_e, gt_edge_mask);
  std::vector<std::size_t> order(alpha_e.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return alpha_e[a] > alpha_e[b]; });
  const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < top; ++i) hits += gt_edge_mask[order[i]] != 0;
  out.precision_at_k = top ? static_cast<double>(hits) / static_cast<double>(top) : 0.0;
  return out;
}

SeparabilityReport separability_report(const std::vector<std::vector<double>>& alpha_e,
                                       const std::vector<std::vector<std::uint8_t>>& gt_edge_masks) {
  if (alpha_e.size() != gt_edge_masks.size()) throw Error(ErrorCode::ShapeMismatch, "attention vs mask count");
  SeparabilityReport rep;
  rep.background.assign(SeparabilityReport::kBins, 0);
  rep.explanation.assign(SeparabilityReport::kBins, 0);
  for (std::size_t g = 0; g < alpha_e.size(); ++g) {
    if (gt_edge_masks[g].empty() && !alpha_e[g].empty()) throw Error(ErrorCode::MissingMask, "graph " + std::to_string(g));
    if (alpha_e[g].size() != gt_edge_masks[g].size()) throw Error(ErrorCode::ShapeMismatch, "graph " + std::to_string(g));
    for (std::size_t e = 0; e < alpha_e[g].size(); ++e) {
      const double a = std::clamp(alpha_e[g][e], 0.0, 1.0);
      const int bin = std::min(SeparabilityReport::kBins - 1, static_cast<int>(a * SeparabilityReport::kBins));
      (gt_edge_masks[g][e] ? rep.explanation : rep.background)[bin]++;
    }
  }
  const double nb = std::accumulate(rep.background.begin(), rep.background.end(), 0.0);
  const double ne = std::accumulate(rep.explanation.begin(), rep.explanation.end(), 0.0);
  if (nb > 0 && ne > 0) {
    for (int b = 0; b < SeparabilityReport::kBins; ++b) {
      rep.overlap += std::min(static_cast<double>(rep.background[b]) / nb, static_cast<double>(rep.explanation[b]) / ne);
    }
  }
  return rep;
}

void write_histogram_csv(std::ostream& out, const SeparabilityReport& report) {
  out << "bin_left,count_background,count_explanation\n";
  for (int b = 0; b < SeparabilityReport::kBins; ++b) {
    out << static_cast<double>(b) / SeparabilityReport::kBins << ',' << report.background[b] << ','
        << report.explanation[b] << '\n';
  }
}

void write_histogram_csv(const std::filesystem::path& path, const SeparabilityReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string());
  write_histogram_csv(out, report);
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / n);
  return out;
}

nlohmann::json to_json(const MeanStd& value) { return {{"mean", value.mean}, {"std", value.std}}; }

}  // namespace gsina

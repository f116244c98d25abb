#ifndef HEDN_REPORT_HPP
#define HEDN_REPORT_HPP

#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hedn/data.hpp"

namespace hedn {

/// counts[true][pred]
using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

inline ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> pred,
                                        std::size_t classes) {
  if (truth.size() != pred.size()) throw ShapeError("confusion_matrix: length mismatch");
  ConfusionMatrix cm(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || pred[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes ||
        static_cast<std::size_t>(pred[i]) >= classes) {
      throw DataError("confusion_matrix: label outside 0.." + std::to_string(classes - 1));
    }
    ++cm[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
  }
  return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < cm.size(); ++i) {
    for (std::size_t j = 0; j < cm[i].size(); ++j) {
      total += cm[i][j];
      if (i == j) hit += cm[i][j];
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

inline double accuracy(std::span<const int> truth, std::span<const int> pred) {
  if (truth.size() != pred.size()) throw ShapeError("accuracy: length mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == pred[i];
  return truth.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(truth.size());
}

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

inline MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  for (double v : values) out.stddev += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(out.stddev / static_cast<double>(values.size()));
  return out;
}

/// Evaluation of one target domain.
struct EvalReport {
  std::string name;
  std::size_t samples = 0;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  double adaptation_seconds = 0.0;
  double inference_ms_per_sample = 0.0;
};

inline std::string confusion_string(const ConfusionMatrix& cm) {
  std::string s;
  for (std::size_t i = 0; i < cm.size(); ++i) {
    if (i) s += ';';
    for (std::size_t j = 0; j < cm[i].size(); ++j) {
      if (j) s += ' ';
      s += std::to_string(cm[i][j]);
    }
  }
  return s;
}

inline void write_report_header(std::ostream& out) {
  out << "record,name,samples,accuracy,std,confusion,adaptation_seconds,inference_ms_per_sample\n";
}

inline void write_report_row(std::ostream& out, const EvalReport& r) {
  out << "fold," << r.name << ',' << r.samples << ',' << detail::format_double(r.accuracy) << ",,"
      << confusion_string(r.confusion) << ',' << detail::format_double(r.adaptation_seconds) << ','
      << detail::format_double(r.inference_ms_per_sample) << '\n';
}

inline void write_aggregate_row(std::ostream& out, const MeanStd& acc, std::size_t folds) {
  out << "aggregate,mean," << folds << ',' << detail::format_double(acc.mean) << ','
      << detail::format_double(acc.stddev) << ",,,\n";
}

}  // namespace hedn

#endif  // HEDN_REPORT_HPP

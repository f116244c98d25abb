#ifndef HEDN_DATA_HPP
#define HEDN_DATA_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hedn/layers.hpp"
#include "hedn/matrix.hpp"

namespace hedn {

/// One domain (subject): features plus per-row class label and trial id.
/// Unlabeled rows carry label -1.
struct SubjectDataset {
  int domain_id = 0;
  Matrix features;
  std::vector<int> labels;
  std::vector<int> trial_ids;

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }

  bool labeled() const {
    return !labels.empty() && std::none_of(labels.begin(), labels.end(), [](int l) { return l < 0; });
  }

  /// Throws DataError unless lengths agree and labels lie in [-1, classes).
  void validate(std::optional<std::size_t> classes = std::nullopt) const {
    if (labels.size() != size() || trial_ids.size() != size()) {
      throw DataError("dataset " + std::to_string(domain_id) + ": feature/label/trial lengths differ");
    }
    for (int l : labels) {
      if (l < -1 || (classes && l >= static_cast<int>(*classes))) {
        throw DataError("dataset " + std::to_string(domain_id) + ": label " + std::to_string(l) +
                        " out of range");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// CSV ingestion: header `trial_id,label,f0,...,f{D-1}`, one sample per row.

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline SubjectDataset parse_subject_csv(std::istream& in, int domain_id = 0,
                                        std::optional<std::size_t> expected_dim = std::nullopt,
                                        const std::string& source_name = "<stream>") {
  auto fail = [&](std::size_t line_no, const std::string& msg) -> DataError {
    return DataError(source_name + ":" + std::to_string(line_no) + ": " + msg);
  };
  std::string line;
  if (!std::getline(in, line)) throw fail(1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_commas(line);
  if (header.size() < 3 || header[0] != "trial_id" || header[1] != "label") {
    throw fail(1, "header must start with trial_id,label followed by feature columns");
  }
  const std::size_t dim = header.size() - 2;
  for (std::size_t k = 0; k < dim; ++k) {
    if (header[k + 2] != "f" + std::to_string(k)) {
      throw fail(1, "feature column " + std::to_string(k) + " must be named f" + std::to_string(k));
    }
  }
  if (expected_dim && *expected_dim != dim) {
    throw fail(1, "feature dimension " + std::to_string(dim) + " does not match expected " +
                      std::to_string(*expected_dim));
  }

  SubjectDataset ds;
  ds.domain_id = domain_id;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_commas(line);
    if (fields.size() != dim + 2) {
      throw fail(line_no, "expected " + std::to_string(dim + 2) + " fields, found " +
                              std::to_string(fields.size()));
    }
    int trial = 0, label = 0;
    if (!detail::parse_number(fields[0], trial)) throw fail(line_no, "bad trial_id");
    if (!detail::parse_number(fields[1], label)) throw fail(line_no, "bad label");
    if (label < -1) throw fail(line_no, "label " + std::to_string(label) + " out of range");
    ds.trial_ids.push_back(trial);
    ds.labels.push_back(label);
    for (std::size_t k = 0; k < dim; ++k) {
      double v = 0.0;
      if (!detail::parse_number(fields[k + 2], v) || !std::isfinite(v)) {
        throw fail(line_no, "bad feature value in column f" + std::to_string(k));
      }
      values.push_back(v);
    }
  }
  ds.features = Matrix(ds.labels.size(), dim, std::move(values));
  return ds;
}

/// Reads a subject CSV. Errors carry the file name and line number.
inline SubjectDataset load_subject(const std::filesystem::path& path, int domain_id = 0,
                                   std::optional<std::size_t> expected_dim = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_subject_csv(in, domain_id, expected_dim, path.string());
}

inline void write_subject_csv(std::ostream& out, const SubjectDataset& ds) {
  out << "trial_id,label";
  for (std::size_t k = 0; k < ds.dim(); ++k) out << ",f" << k;
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.trial_ids[i] << ',' << ds.labels[i];
    for (double v : ds.features.row(i)) out << ',' << detail::format_double(v);
    out << '\n';
  }
}

inline void save_subject(const std::filesystem::path& path, const SubjectDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_subject_csv(out, ds);
  if (!out) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Synthetic multi-subject data with several clusters per class.

struct SynthConfig {
  std::size_t n_subjects = 6;
  std::size_t n_classes = 3;
  std::size_t clusters_per_class = 3;
  std::size_t samples_per_cluster = 120;
  std::size_t feature_dim = 64;
  double cluster_spread = 0.12;     // per-coordinate std of a cluster
  double class_separation = 1.0;    // per-coordinate std of the cluster centers
  double shift_scale = 1.0;         // strength of the per-subject affine map
  std::vector<double> label_noise;  // per subject; missing entries are 0
  std::uint64_t seed = 42;

  void validate() const {
    if (n_subjects < 1 || n_classes < 1 || clusters_per_class < 1 || samples_per_cluster < 1 ||
        feature_dim < 1) {
      throw ConfigError("synth: all counts must be >= 1");
    }
    if (cluster_spread < 0.0 || class_separation < 0.0 || shift_scale < 0.0) {
      throw ConfigError("synth: spreads and scales must be non-negative");
    }
    for (double f : label_noise) {
      if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("synth: label noise fraction outside [0,1]");
    }
  }
};

namespace detail {

inline double normal(std::mt19937_64& rng) {
  // Box-Muller over uniform01(); independent of the standard library's distributions.
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

}  // namespace detail

/**
 * Cluster centers are drawn once per (class, cluster) and shared by all
 * subjects; each subject then applies its own affine map
 * x -> (I + s*G/sqrt(D)) x + s*t with G, t standard normal. Every sample's
 * trial id is its global cluster index. A label-noise fraction f reassigns
 * the labels of round(f*N) randomly chosen rows to a different class.
 */
inline std::vector<SubjectDataset> synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const std::size_t d = cfg.feature_dim;
  const std::size_t n_clusters = cfg.n_classes * cfg.clusters_per_class;

  Matrix centers(n_clusters, d);
  for (double& v : centers.data()) v = cfg.class_separation * detail::normal(rng);

  std::vector<SubjectDataset> out;
  out.reserve(cfg.n_subjects);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t s = 0; s < cfg.n_subjects; ++s) {
    Matrix transform = Matrix::identity(d);
    for (double& v : transform.data()) v += cfg.shift_scale * inv_sqrt_d * detail::normal(rng);
    Matrix offset(1, d);
    for (double& v : offset.data()) v = cfg.shift_scale * detail::normal(rng);

    SubjectDataset ds;
    ds.domain_id = static_cast<int>(s);
    const std::size_t n = n_clusters * cfg.samples_per_cluster;
    Matrix raw(n, d);
    std::size_t row = 0;
    for (std::size_t c = 0; c < n_clusters; ++c) {
      for (std::size_t k = 0; k < cfg.samples_per_cluster; ++k, ++row) {
        for (std::size_t j = 0; j < d; ++j) {
          raw(row, j) = centers(c, j) + cfg.cluster_spread * detail::normal(rng);
        }
        ds.labels.push_back(static_cast<int>(c / cfg.clusters_per_class));
        ds.trial_ids.push_back(static_cast<int>(c));
      }
    }
    // Row vector convention: x' = x A^T + b.
    ds.features = matmul_nt(raw, transform);
    for (std::size_t i = 0; i < n; ++i) {
      auto r = ds.features.row(i);
      for (std::size_t j = 0; j < d; ++j) r[j] += offset(0, j);
    }

    const double noise = s < cfg.label_noise.size() ? cfg.label_noise[s] : 0.0;
    if (noise > 0.0 && cfg.n_classes > 1) {
      std::vector<std::size_t> idx(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
      for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[detail::uniform_index(rng, i)]);
      const auto flips = static_cast<std::size_t>(std::llround(noise * static_cast<double>(n)));
      for (std::size_t i = 0; i < flips; ++i) {
        int& l = ds.labels[idx[i]];
        const int shift = 1 + static_cast<int>(detail::uniform_index(rng, cfg.n_classes - 1));
        l = (l + shift) % static_cast<int>(cfg.n_classes);
      }
    }
    out.push_back(std::move(ds));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Protocols

/// Sources plus a target whose labels are used for evaluation only.
struct ExperimentFold {
  std::vector<SubjectDataset> sources;
  SubjectDataset target;
};

/// Leave-one-subject-out: fold i holds subject i out as the target.
inline std::vector<ExperimentFold> loso_folds(const std::vector<SubjectDataset>& subjects) {
  if (subjects.size() < 3) throw ConfigError("loso_folds: need at least 3 subjects");
  std::vector<ExperimentFold> folds;
  folds.reserve(subjects.size());
  for (std::size_t t = 0; t < subjects.size(); ++t) {
    ExperimentFold fold;
    fold.target = subjects[t];
    for (std::size_t s = 0; s < subjects.size(); ++s)
      if (s != t) fold.sources.push_back(subjects[s]);
    folds.push_back(std::move(fold));
  }
  return folds;
}

/// Four-class {0 neutral, 1 sad, 2 fear, 3 happy} to three-class
/// {0 negative, 1 neutral, 2 positive}.
inline SubjectDataset merge_labels_4to3(SubjectDataset ds) {
  for (int& l : ds.labels) {
    switch (l) {
      case -1: break;
      case 0: l = 1; break;
      case 1:
      case 2: l = 0; break;
      case 3: l = 2; break;
      default: throw DataError("merge_labels_4to3: unknown label " + std::to_string(l));
    }
  }
  return ds;
}

/// Per-feature standardization within one domain (variance floored at 1e-12).
inline SubjectDataset zscore_per_domain(SubjectDataset ds) {
  const std::size_t n = ds.size();
  if (n < 2) throw DataError("zscore_per_domain: need at least 2 samples");
  const double dn = static_cast<double>(n);
  for (std::size_t j = 0; j < ds.dim(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += ds.features(i, j);
    mean /= dn;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dv = ds.features(i, j) - mean;
      var += dv * dv;
    }
    var /= dn;
    const double sd = std::sqrt(std::max(var, 1e-12));
    for (std::size_t i = 0; i < n; ++i) {
      ds.features(i, j) = (ds.features(i, j) - mean) / sd;
    }
  }
  return ds;
}

}  // namespace hedn

#endif  // HEDN_DATA_HPP

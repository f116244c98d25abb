#ifndef HEDN_PROTOTYPES_HPP
#define HEDN_PROTOTYPES_HPP

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "hedn/clustering.hpp"
#include "hedn/data.hpp"
#include "hedn/losses.hpp"
#include "hedn/nets.hpp"

namespace hedn {

struct Prototype {
  std::vector<double> vector;
  int cluster_id = 0;
  std::optional<int> class_label;  // set for source clusters only
  double purity = 1.0;             // share of members carrying class_label

  friend bool operator==(const Prototype&, const Prototype&) = default;
};

/// Cluster-wise prototypes of one domain, keyed by cluster id.
struct PrototypeBank {
  int domain_id = 0;
  std::map<int, Prototype> prototypes;

  bool empty() const noexcept { return prototypes.empty(); }
  std::size_t size() const noexcept { return prototypes.size(); }
  friend bool operator==(const PrototypeBank&, const PrototypeBank&) = default;
};

/// One bank per source domain plus the target bank.
struct MemoryBanks {
  std::vector<PrototypeBank> sources;
  PrototypeBank target;

  std::size_t bank_count() const noexcept { return sources.size() + 1; }
};

/// Mean of the rows whose cluster id matches `cluster`, or nullopt when none does.
inline std::optional<std::vector<double>> batch_prototype(const Matrix& embeddings,
                                                          std::span<const int> cluster_ids,
                                                          int cluster) {
  if (cluster_ids.size() != embeddings.rows()) throw ShapeError("batch_prototype: id count mismatch");
  std::vector<double> sum(embeddings.cols(), 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < cluster_ids.size(); ++i) {
    if (cluster_ids[i] != cluster) continue;
    const auto r = embeddings.row(i);
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += r[k];
    ++count;
  }
  if (count == 0) return std::nullopt;
  for (double& v : sum) v /= static_cast<double>(count);
  return sum;
}

/// mu <- momentum * mu + (1 - momentum) * instant
inline void ema_update(PrototypeBank& bank, int cluster, std::span<const double> instant,
                       double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("ema_update: momentum outside [0,1)");
  auto it = bank.prototypes.find(cluster);
  if (it == bank.prototypes.end()) {
    throw DataError("ema_update: cluster " + std::to_string(cluster) + " not in bank " +
                    std::to_string(bank.domain_id));
  }
  auto& mu = it->second.vector;
  if (mu.size() != instant.size()) throw ShapeError("ema_update: dimension mismatch");
  for (std::size_t k = 0; k < mu.size(); ++k) mu[k] = momentum * mu[k] + (1.0 - momentum) * instant[k];
}

/// Applies batch_prototype + ema_update for every non-noise cluster present in the batch.
inline void ema_update_from_batch(PrototypeBank& bank, const Matrix& embeddings,
                                  std::span<const int> cluster_ids, double momentum) {
  std::vector<int> present(cluster_ids.begin(), cluster_ids.end());
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());
  for (int c : present) {
    if (c == kNoise || !bank.prototypes.contains(c)) continue;
    ema_update(bank, c, *batch_prototype(embeddings, cluster_ids, c), momentum);
  }
}

struct Match {
  int cluster_id = 0;
  double similarity = 0.0;
};

/// Highest cosine similarity; ties go to the smaller cluster id.
inline Match match_prototype(std::span<const double> query, const PrototypeBank& bank) {
  if (bank.empty()) throw DataError("match_prototype: bank " + std::to_string(bank.domain_id) + " is empty");
  Match best{0, 0.0};
  bool first = true;
  for (const auto& [id, proto] : bank.prototypes) {
    const double s = cosine_similarity(query, proto.vector);
    if (first || s > best.similarity) {
      best = {id, s};
      first = false;
    }
  }
  return best;
}

/// Maps each target cluster to the class label of its most similar prototype in `source`.
inline std::map<int, int> propagate_labels(const PrototypeBank& target, const PrototypeBank& source) {
  if (target.empty() || source.empty()) throw DataError("propagate_labels: empty bank");
  std::map<int, int> out;
  for (const auto& [tid, proto] : target.prototypes) {
    const Match m = match_prototype(proto.vector, source);
    const auto& label = source.prototypes.at(m.cluster_id).class_label;
    if (!label) throw DataError("propagate_labels: source prototype without a class label");
    out[tid] = *label;
  }
  return out;
}

inline std::map<int, int> propagate_labels(const MemoryBanks& banks, std::size_t easy_domain) {
  return propagate_labels(banks.target, banks.sources.at(easy_domain));
}

/// Most frequent label; ties go to the smallest label.
inline int majority_vote(std::span<const int> labels) {
  if (labels.empty()) throw DataError("majority_vote: no votes");
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  int best = counts.begin()->first;
  std::size_t best_count = 0;
  for (const auto& [l, c] : counts) {
    if (c > best_count) {
      best = l;
      best_count = c;
    }
  }
  return best;
}

/// Builds a bank from eval-mode embeddings and a fixed cluster assignment.
/// Source banks store the majority class label of each cluster (ties to the
/// smallest label) together with its purity.
inline PrototypeBank build_bank(int domain_id, const Matrix& embeddings,
                                const ClusterAssignment& assignment,
                                std::optional<std::span<const int>> class_labels) {
  if (assignment.labels.size() != embeddings.rows()) {
    throw ShapeError("build_bank: assignment length does not match sample count");
  }
  PrototypeBank bank;
  bank.domain_id = domain_id;
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < assignment.labels.size(); ++i) {
    if (assignment.labels[i] != kNoise) members[assignment.labels[i]].push_back(i);
  }
  for (const auto& [cid, rows] : members) {
    Prototype p;
    p.cluster_id = cid;
    p.vector.assign(embeddings.cols(), 0.0);
    for (std::size_t r : rows) {
      const auto e = embeddings.row(r);
      for (std::size_t k = 0; k < e.size(); ++k) p.vector[k] += e[k];
    }
    for (double& v : p.vector) v /= static_cast<double>(rows.size());
    if (class_labels) {
      std::vector<int> member_labels;
      member_labels.reserve(rows.size());
      for (std::size_t r : rows) member_labels.push_back((*class_labels)[r]);
      const int label = majority_vote(member_labels);
      p.class_label = label;
      p.purity = static_cast<double>(std::count(member_labels.begin(), member_labels.end(), label)) /
                 static_cast<double>(rows.size());
    }
    bank.prototypes.emplace(cid, std::move(p));
  }
  return bank;
}

/// Initial banks: centroids of eval-mode g(f(x)) over each fixed cluster.
inline MemoryBanks init_banks(const std::vector<SubjectDataset>& sources,
                              const std::vector<ClusterAssignment>& source_assignments,
                              const SubjectDataset& target, const ClusterAssignment& target_assignment,
                              const HednModel& model) {
  if (sources.size() != source_assignments.size()) {
    throw ShapeError("init_banks: one assignment per source domain required");
  }
  MemoryBanks banks;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    banks.sources.push_back(build_bank(sources[i].domain_id, embed(model, sources[i].features),
                                       source_assignments[i], std::span<const int>(sources[i].labels)));
  }
  banks.target = build_bank(target.domain_id, embed(model, target.features), target_assignment,
                            std::nullopt);
  return banks;
}

/// Vote from precomputed embedding z: nearest target prototype, then the
/// nearest prototype to it in every source bank, then majority vote.
inline int predict_embedding(const MemoryBanks& banks, std::span<const double> z) {
  const Match t = match_prototype(z, banks.target);
  const auto& anchor = banks.target.prototypes.at(t.cluster_id).vector;
  std::vector<int> votes;
  votes.reserve(banks.sources.size());
  for (const auto& bank : banks.sources) {
    const Match s = match_prototype(anchor, bank);
    const auto& label = bank.prototypes.at(s.cluster_id).class_label;
    if (!label) throw DataError("predict: source prototype without a class label");
    votes.push_back(*label);
  }
  return majority_vote(votes);
}

/// Prototype-vote labels for every row of `x`.
inline std::vector<int> predict(const MemoryBanks& banks, const HednModel& model, const Matrix& x) {
  const Matrix z = embed(model, x);
  std::vector<int> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) out[i] = predict_embedding(banks, z.row(i));
  return out;
}

/// Argmax of h(f(x)), used by the hard-network-only ablation.
inline std::vector<int> predict_classifier(const HednModel& model, const Matrix& x) {
  const Matrix logits = class_logits(model, x);
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto r = logits.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

}  // namespace hedn

#endif  // HEDN_PROTOTYPES_HPP

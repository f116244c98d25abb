#ifndef HEDN_ENGINE_HPP
#define HEDN_ENGINE_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "hedn/clustering.hpp"
#include "hedn/data.hpp"
#include "hedn/losses.hpp"
#include "hedn/nets.hpp"
#include "hedn/prototypes.hpp"
#include "hedn/rmsprop.hpp"

namespace hedn {

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-5;
  std::size_t iterations = 1000;
  std::size_t batch_size = 96;
  double lambda2 = 0.01;
  double gamma_s = 0.5;
  double gamma_t = 0.1;
  double tau = 0.1;
  double rmsprop_alpha = 0.99;
  double rmsprop_eps = 1e-8;
  double dropout = 0.5;
  std::uint64_t seed = 42;
  double lambda1_gamma = 10.0;  // steepness of the adversarial ramp
  double lambda1_max = 1.0;
  bool easy_network = true;     // false: hard-network-only ablation

  void validate() const {
    auto require = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    require(lr > 0.0 && std::isfinite(lr), "lr must be positive");
    require(weight_decay >= 0.0, "weight_decay must be >= 0");
    require(iterations >= 1, "iterations must be >= 1");
    require(batch_size >= 2, "batch_size must be >= 2");
    require(lambda2 >= 0.0, "lambda2 must be >= 0");
    require(gamma_s >= 0.0 && gamma_s < 1.0, "gamma_s must lie in [0,1)");
    require(gamma_t >= 0.0 && gamma_t < 1.0, "gamma_t must lie in [0,1)");
    require(tau > 0.0, "tau must be positive");
    require(rmsprop_alpha >= 0.0 && rmsprop_alpha < 1.0, "rmsprop_alpha must lie in [0,1)");
    require(rmsprop_eps > 0.0, "rmsprop_eps must be positive");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0,1)");
    require(lambda1_gamma > 0.0, "lambda1_gamma must be positive");
    require(lambda1_max >= 0.0, "lambda1_max must be >= 0");
  }
};

/// A sampled mini-batch of one domain with its fixed cluster ids.
struct DomainBatch {
  int domain_id = 0;
  std::vector<std::size_t> rows;  // indices into the domain
  Matrix x;
  std::vector<int> labels;    // -1 for target rows
  std::vector<int> clusters;  // kNoise for outliers
};

struct IterationBatches {
  std::vector<DomainBatch> sources;
  DomainBatch target;
};

/// Without replacement when the domain holds at least `batch_size` rows,
/// with replacement otherwise.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t batch_size,
                                               std::mt19937_64& rng) {
  if (n == 0) throw DataError("sample_batches: empty domain");
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  if (n < batch_size) {
    for (std::size_t i = 0; i < batch_size; ++i) out.push_back(detail::uniform_index(rng, n));
    return out;
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::swap(perm[i], perm[i + detail::uniform_index(rng, n - i)]);
    out.push_back(perm[i]);
  }
  return out;
}

inline DomainBatch make_batch(const SubjectDataset& ds, const ClusterAssignment& assignment,
                              std::vector<std::size_t> rows) {
  DomainBatch b;
  b.domain_id = ds.domain_id;
  b.x = gather_rows(ds.features, rows);
  b.labels.reserve(rows.size());
  b.clusters.reserve(rows.size());
  for (std::size_t r : rows) {
    b.labels.push_back(ds.labels[r]);
    b.clusters.push_back(assignment.labels[r]);
  }
  b.rows = std::move(rows);
  return b;
}

/// One batch per source (in order) followed by the target batch.
inline IterationBatches sample_batches(const std::vector<SubjectDataset>& sources,
                                       const std::vector<ClusterAssignment>& source_assignments,
                                       const SubjectDataset& target,
                                       const ClusterAssignment& target_assignment,
                                       std::size_t batch_size, std::mt19937_64& rng) {
  IterationBatches out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    out.sources.push_back(make_batch(sources[i], source_assignments[i],
                                     sample_indices(sources[i].size(), batch_size, rng)));
  }
  out.target = make_batch(target, target_assignment, sample_indices(target.size(), batch_size, rng));
  return out;
}

/// Per-source reliability R_i = -CE and the resulting roles.
struct ReliabilityReport {
  std::vector<double> scores;
  std::size_t k_easy = 0;
  std::size_t k_hard = 0;
};

/// argmax / argmin with smallest-index ties; when every score ties the hard
/// role moves to the next index so the two roles stay distinct.
inline ReliabilityReport select_roles(std::vector<double> scores) {
  if (scores.size() < 2) throw ConfigError("source reliability needs at least 2 source domains");
  ReliabilityReport r;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[r.k_easy]) r.k_easy = i;
    if (scores[i] < scores[r.k_hard]) r.k_hard = i;
  }
  if (r.k_hard == r.k_easy) r.k_hard = (r.k_easy + 1) % scores.size();
  r.scores = std::move(scores);
  return r;
}

/// Scores every source batch with h(f(.)) in eval mode; no parameter or cache changes.
inline ReliabilityReport assess_reliability(const HednModel& model,
                                            const std::vector<DomainBatch>& source_batches) {
  if (source_batches.size() < 2) throw ConfigError("source reliability needs at least 2 source domains");
  std::vector<double> scores;
  scores.reserve(source_batches.size());
  for (const auto& b : source_batches) {
    const Matrix logits = class_logits(model, b.x);
    scores.push_back(-softmax_cross_entropy(logits, one_hot(b.labels, model.classes)).loss);
  }
  return select_roles(std::move(scores));
}

/// Adversarial weight ramp: lambda_max * (2 / (1 + exp(-gamma * p)) - 1), p = iteration / total.
inline double lambda1_schedule(std::size_t iteration, std::size_t total, double gamma = 10.0,
                               double lambda_max = 1.0) {
  const double p = total == 0 ? 1.0 : static_cast<double>(iteration) / static_cast<double>(total);
  return lambda_max * (2.0 / (1.0 + std::exp(-gamma * p)) - 1.0);
}

/// Pseudo-label for each row of `target_embeddings`: nearest target
/// prototype, then that cluster's propagated label from the easy bank.
inline std::vector<int> pseudo_labels(const MemoryBanks& banks, std::size_t easy_domain,
                                      const Matrix& target_embeddings) {
  const auto cluster_label = propagate_labels(banks, easy_domain);
  std::vector<int> out(target_embeddings.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = cluster_label.at(match_prototype(target_embeddings.row(i), banks.target).cluster_id);
  }
  return out;
}

struct MainLosses {
  double cls = 0.0;
  double adv = 0.0;
  double cl = 0.0;
  double total(double lambda1, double lambda2) const { return cls + lambda1 * adv + lambda2 * cl; }
};

/**
 * Forward and backward of the Step-1 objective without updating parameters.
 *
 * The discriminator receives the gradient of L_adv; the extractor receives
 * dL_cls + lambda2 dL_cl - lambda1 dL_adv through the gradient reversal
 * layer; the classifier receives dL_cls + lambda2 dL_cl. Gradients land in
 * the layers of f, h and d. g is only read (eval mode) for pseudo-labels.
 * With `banks == nullptr` the consistency term is skipped.
 */
inline MainLosses main_objective_backward(HednModel& model, const DomainBatch& hard,
                                          const DomainBatch& target, const MemoryBanks* banks,
                                          std::size_t easy_domain, double lambda1, double lambda2,
                                          Mode mode = Mode::kTrain) {
  const std::size_t nh = hard.x.rows();
  const std::size_t nt = target.x.rows();
  const Matrix feats = forward_features(model, vstack(hard.x, target.x));
  const Matrix logits = forward_class_logits(model, feats);

  MainLosses out;
  Matrix grad_logits(nh + nt, model.classes);
  const LossResult cls = softmax_cross_entropy(slice_rows(logits, 0, nh), one_hot(hard.labels, model.classes));
  out.cls = cls.loss;
  std::copy(cls.grad.data().begin(), cls.grad.data().end(), grad_logits.data().begin());

  if (banks != nullptr && lambda2 > 0.0) {
    const Matrix z_t = model.g.infer(slice_rows(feats, nh, nh + nt));
    const auto pseudo = pseudo_labels(*banks, easy_domain, z_t);
    const LossResult cl = softmax_cross_entropy(slice_rows(logits, nh, nh + nt), one_hot(pseudo, model.classes));
    out.cl = cl.loss;
    for (std::size_t i = 0; i < nt; ++i)
      for (std::size_t j = 0; j < model.classes; ++j) grad_logits(nh + i, j) = lambda2 * cl.grad(i, j);
  }

  const Matrix prob = forward_domain(model, feats, lambda1, mode);
  const std::vector<double> ones(nh, 1.0), zeros(nt, 0.0);
  const LossResult adv_s = binary_cross_entropy(slice_rows(prob, 0, nh), ones);
  const LossResult adv_t = binary_cross_entropy(slice_rows(prob, nh, nh + nt), zeros);
  out.adv = adv_s.loss + adv_t.loss;
  const Matrix grad_prob = vstack(adv_s.grad, adv_t.grad);

  Matrix grad_feats = model.h.backward(grad_logits);
  grad_feats += backward_domain(model, grad_prob);
  model.f.backward(grad_feats);
  return out;
}

/// Step 1: one RMSprop update of f, h and d on the hard and target batches; g is frozen.
inline MainLosses step1_main(HednModel& model, const DomainBatch& hard, const DomainBatch& target,
                             const MemoryBanks* banks, std::size_t easy_domain, double lambda1,
                             double lambda2, Rmsprop& optimizer) {
  const MainLosses losses = main_objective_backward(model, hard, target, banks, easy_domain, lambda1, lambda2);
  ParamSlots slots = model.slots_f();
  model.h.slots(slots);
  model.d.slots(slots);
  optimizer.step(slots);
  return losses;
}

struct StructLosses {
  double source = 0.0;
  double target = 0.0;
  std::size_t source_anchors = 0;
  std::size_t target_anchors = 0;
};

namespace detail {

/// Supervised contrastive loss over the non-noise rows of `z` in [begin, end);
/// the gradient is written into the matching rows of `grad`.
inline SupConResult supcon_rows(const Matrix& z, std::size_t begin, std::size_t end,
                                std::span<const int> clusters, double tau, Matrix& grad) {
  std::vector<std::size_t> keep;
  std::vector<int> ids;
  for (std::size_t i = begin; i < end; ++i) {
    if (clusters[i - begin] == kNoise) continue;
    keep.push_back(i);
    ids.push_back(clusters[i - begin]);
  }
  SupConResult res = supcon_loss(gather_rows(z, keep), ids, tau);
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const auto src = res.grad.row(r);
    std::copy(src.begin(), src.end(), grad.row(keep[r]).begin());
  }
  return res;
}

}  // namespace detail

/// Forward and backward of L_clu^s + L_clu^t through g only (f is read, not cached).
inline StructLosses struct_objective_backward(HednModel& model, const DomainBatch& easy,
                                              const DomainBatch& target, double tau) {
  const std::size_t ne = easy.x.rows();
  const std::size_t nt = target.x.rows();
  const Matrix feats = vstack(model.f.infer(easy.x), model.f.infer(target.x));
  const Matrix z = model.g.forward(feats, Mode::kTrain);
  Matrix grad(ne + nt, z.cols());
  const SupConResult s = detail::supcon_rows(z, 0, ne, easy.clusters, tau, grad);
  const SupConResult t = detail::supcon_rows(z, ne, ne + nt, target.clusters, tau, grad);
  model.g.backward(grad);
  return {s.loss, t.loss, s.anchors, t.anchors};
}

/// Step 2: one RMSprop update of g from the cluster contrastive loss; f, h, d are frozen.
inline StructLosses step2_struct(HednModel& model, const DomainBatch& easy, const DomainBatch& target,
                                 double tau, Rmsprop& optimizer) {
  const StructLosses losses = struct_objective_backward(model, easy, target, tau);
  optimizer.step(model.slots_g());
  return losses;
}

/// Train-mode embeddings (batch statistics) that leave the BN running estimates untouched.
inline Matrix train_mode_embedding(const HednModel& model, const Matrix& x) {
  PrototypeHead head = model.g;
  return head.forward(model.f.infer(x), Mode::kTrain);
}

/// EMA refresh of the easy source bank (gamma_s) and the target bank
/// (gamma_t) from the clusters present in the current batches.
inline void update_prototypes(const HednModel& model, MemoryBanks& banks, const DomainBatch& easy,
                              std::size_t k_easy, const DomainBatch& target, double gamma_s,
                              double gamma_t) {
  const std::size_t ne = easy.x.rows();
  const Matrix z = train_mode_embedding(model, vstack(easy.x, target.x));
  ema_update_from_batch(banks.sources.at(k_easy), slice_rows(z, 0, ne), easy.clusters, gamma_s);
  ema_update_from_batch(banks.target, slice_rows(z, ne, z.rows()), target.clusters, gamma_t);
}

struct IterationLog {
  std::size_t iteration = 0;
  std::size_t k_easy = 0;
  std::size_t k_hard = 0;
  std::vector<double> reliability;
  double l_cls = 0.0;
  double l_adv = 0.0;
  double l_cl = 0.0;
  double l_clu_s = 0.0;
  double l_clu_t = 0.0;
  double lambda1 = 0.0;
  double wall_seconds = 0.0;
};

inline void write_log_header(std::ostream& out) {
  out << "iteration,k_easy,k_hard,l_cls,l_adv,l_cl,l_clu_s,l_clu_t,lambda1,wall_seconds\n";
}

inline void write_log_row(std::ostream& out, const IterationLog& log) {
  out << log.iteration << ',' << log.k_easy << ',' << log.k_hard << ',' << detail::format_double(log.l_cls)
      << ',' << detail::format_double(log.l_adv) << ',' << detail::format_double(log.l_cl) << ','
      << detail::format_double(log.l_clu_s) << ',' << detail::format_double(log.l_clu_t) << ','
      << detail::format_double(log.lambda1) << ',' << detail::format_double(log.wall_seconds) << '\n';
}

/// Fixed cluster structure of one experiment fold.
struct FoldClusters {
  DbscanParams params;
  double tune_score = 0.0;
  bool tune_fallback = false;
  std::vector<ClusterAssignment> sources;
  ClusterAssignment target;
};

/**
 * Tunes DBSCAN on the target (NMI against trial ids when the target has at
 * least two distinct ones, silhouette otherwise) and applies the chosen parameters to every
 * domain. A source whose clustering finds nothing falls back to class-label
 * clusters; a target to one global cluster.
 */
inline FoldClusters cluster_fold(const std::vector<SubjectDataset>& sources, const SubjectDataset& target,
                                 bool use_trial_ids = true) {
  FoldClusters out;
  std::optional<std::span<const int>> trials;
  const bool informative_trials =
      !target.trial_ids.empty() &&
      std::any_of(target.trial_ids.begin(), target.trial_ids.end(),
                  [&](int t) { return t != target.trial_ids.front(); });
  if (use_trial_ids && informative_trials) trials = std::span<const int>(target.trial_ids);
  TuneResult tuned = tune_dbscan(target.features, trials);
  out.params = tuned.params;
  out.tune_score = tuned.score;
  out.tune_fallback = tuned.fallback;
  out.target = std::move(tuned.assignment);
  for (const auto& s : sources) {
    ClusterAssignment a;
    if (!out.tune_fallback) a = dbscan(s.features, out.params);
    if (out.tune_fallback || a.n_clusters == 0) a = contiguous_assignment(s.labels);
    out.sources.push_back(std::move(a));
  }
  return out;
}

struct TrainResult {
  HednModel model;
  MemoryBanks banks;
  std::vector<IterationLog> logs;
  FoldClusters clusters;
  double adaptation_seconds = 0.0;
};

/// Runs the HEDN training loop one iteration at a time.
class Trainer {
 public:
  Trainer(std::vector<SubjectDataset> sources, SubjectDataset target, TrainConfig config,
          FoldClusters clusters)
      : sources_(std::move(sources)),
        target_(std::move(target)),
        config_(std::move(config)),
        clusters_(std::move(clusters)),
        rng_(config_.seed) {
    config_.validate();
    if (sources_.size() < 2) throw ConfigError("training needs at least 2 source domains");
    if (clusters_.sources.size() != sources_.size()) throw ConfigError("one cluster assignment per source required");
    const std::size_t dim = target_.dim();
    std::size_t classes = 0;
    for (const auto& s : sources_) {
      if (s.dim() != dim) throw DataError("source " + std::to_string(s.domain_id) + " has a different feature dimension");
      if (!s.labeled()) throw DataError("source " + std::to_string(s.domain_id) + " has unlabeled rows");
      s.validate();
      for (int l : s.labels) classes = std::max(classes, static_cast<std::size_t>(l) + 1);
    }
    classes = std::max<std::size_t>(classes, 2);
    model_ = init_model(dim, classes, config_.seed, ModelOptions{config_.dropout, 0.1, 1e-5});
    banks_ = init_banks(sources_, clusters_.sources, target_, clusters_.target, model_);
    if (banks_.target.empty()) throw DataError("target bank is empty");
    for (const auto& b : banks_.sources)
      if (b.empty()) throw DataError("source bank " + std::to_string(b.domain_id) + " is empty");
    opt_main_ = Rmsprop(config_.lr, config_.weight_decay, config_.rmsprop_alpha, config_.rmsprop_eps);
    opt_g_ = Rmsprop(config_.lr, config_.weight_decay, config_.rmsprop_alpha, config_.rmsprop_eps);
  }

  /// One iteration: sample, assess, route, refresh prototypes, Step 1, Step 2.
  IterationLog step() {
    const auto start = std::chrono::steady_clock::now();
    IterationLog log;
    log.iteration = iteration_;
    const IterationBatches batches = sample_batches(sources_, clusters_.sources, target_, clusters_.target,
                                                    config_.batch_size, rng_);
    const ReliabilityReport roles = assess_reliability(model_, batches.sources);
    log.k_easy = roles.k_easy;
    log.k_hard = roles.k_hard;
    log.reliability = roles.scores;
    log.lambda1 = lambda1_schedule(iteration_, config_.iterations, config_.lambda1_gamma, config_.lambda1_max);

    const DomainBatch& easy = batches.sources[roles.k_easy];
    const DomainBatch& hard = batches.sources[roles.k_hard];
    if (config_.easy_network) {
      update_prototypes(model_, banks_, easy, roles.k_easy, batches.target, config_.gamma_s, config_.gamma_t);
    }
    const MainLosses main = step1_main(model_, hard, batches.target, config_.easy_network ? &banks_ : nullptr,
                                       roles.k_easy, log.lambda1, config_.easy_network ? config_.lambda2 : 0.0,
                                       opt_main_);
    log.l_cls = main.cls;
    log.l_adv = main.adv;
    log.l_cl = main.cl;
    if (config_.easy_network) {
      const StructLosses st = step2_struct(model_, easy, batches.target, config_.tau, opt_g_);
      log.l_clu_s = st.source;
      log.l_clu_t = st.target;
    }
    for (double v : {log.l_cls, log.l_adv, log.l_cl, log.l_clu_s, log.l_clu_t}) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite loss at iteration " + std::to_string(iteration_));
      }
    }
    ++iteration_;
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return log;
  }

  std::vector<IterationLog> run() {
    std::vector<IterationLog> logs;
    logs.reserve(config_.iterations);
    while (iteration_ < config_.iterations) logs.push_back(step());
    return logs;
  }

  /// Predicted labels for `x`: prototype vote, or the classifier for the ablation.
  std::vector<int> predict_labels(const Matrix& x) const {
    return config_.easy_network ? predict(banks_, model_, x) : predict_classifier(model_, x);
  }

  const HednModel& model() const noexcept { return model_; }
  HednModel& model() noexcept { return model_; }
  const MemoryBanks& banks() const noexcept { return banks_; }
  MemoryBanks& banks() noexcept { return banks_; }
  const FoldClusters& clusters() const noexcept { return clusters_; }
  const TrainConfig& config() const noexcept { return config_; }
  const std::vector<SubjectDataset>& sources() const noexcept { return sources_; }
  const SubjectDataset& target() const noexcept { return target_; }
  std::size_t iteration() const noexcept { return iteration_; }
  Rmsprop& main_optimizer() noexcept { return opt_main_; }
  Rmsprop& prototype_optimizer() noexcept { return opt_g_; }

 private:
  std::vector<SubjectDataset> sources_;
  SubjectDataset target_;
  TrainConfig config_;
  FoldClusters clusters_;
  std::mt19937_64 rng_;
  HednModel model_;
  MemoryBanks banks_;
  Rmsprop opt_main_;
  Rmsprop opt_g_;
  std::size_t iteration_ = 0;
};

/// Clusters the fold, initializes the banks and runs every iteration.
inline TrainResult train(const std::vector<SubjectDataset>& sources, const SubjectDataset& target,
                         const TrainConfig& config) {
  config.validate();
  if (sources.size() < 2) throw ConfigError("training needs at least 2 source domains");
  Trainer trainer(sources, target, config, cluster_fold(sources, target));
  const auto start = std::chrono::steady_clock::now();
  TrainResult out;
  out.logs = trainer.run();
  out.adaptation_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.model = trainer.model();
  out.banks = trainer.banks();
  out.clusters = trainer.clusters();
  return out;
}

}  // namespace hedn

#endif  // HEDN_ENGINE_HPP

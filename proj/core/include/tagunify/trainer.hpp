// Mini-batch gradient descent shared by every objective: seeded shuffling,
// inverse-time learning-rate decay, mean batch gradients, dev-set early
// stopping on micro-F1, and best-checkpoint return. Deterministic for a
// fixed seed: per-instance gradients land in indexed slots and reduce in
// index order, so results do not depend on the worker count.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include "tagunify/corpus.hpp"
#include "tagunify/emissions.hpp"
#include "tagunify/evalmetrics.hpp"
#include "tagunify/objectives.hpp"

namespace tagunify {

struct TrainConfig {
  int batch_size = 10;
  double learning_rate = 0.015;
  double lr_decay = 0.05;  // eta_e = lr / (1 + decay * e), e 0-based
  int max_epochs = 30;
  int patience = 8;        // epochs without dev-F1 improvement
  double l2 = 1e-6;        // weight decay; stands in for dropout
  uint64_t seed = 1;
  int workers = 1;
  bool adam = false;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_precision = 0.0, dev_recall = 0.0, dev_f1 = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_f1 = 0.0;
  double wall_seconds = 0.0;
};

// One training instance; eval adds d loss / d params into grad.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual size_t size() const = 0;
  virtual double eval(const Model& m, size_t index, ParamVec& grad) const = 0;
};

struct TrainResult {
  Model model;
  TrainReport report;
};

// Runs SGD (or flag-gated Adam) over the objective. `dev` may be null; with
// a dev set the returned model is the checkpoint with the best micro-F1.
// Structured per-epoch records go to `log` when provided (one JSON object
// per line, no timestamps). Throws on non-finite loss or gradient.
TrainResult train(const Objective& objective, Model init, const AnnotatedCorpus* dev,
                  const TrainConfig& cfg, std::ostream* log = nullptr,
                  std::ostream* progress = nullptr);

// Viterbi decode with the BIO mask, scored against gold. Gold labels must
// parse within the model's tag set.
EvalResult evaluate_checkpoint(const Model& m, const AnnotatedCorpus& dev, int workers = 1);

// Decode every sentence of `corpus` into the model's label space.
AnnotatedCorpus tag_corpus(const Model& m, const AnnotatedCorpus& corpus, bool bio_mask = true,
                           int workers = 1);

// Supervised NLL over gold sequences in the model's own tag set.
class SupervisedObjective : public Objective {
 public:
  SupervisedObjective(const Model& proto, const AnnotatedCorpus& corpus);
  size_t size() const override { return instances_.size(); }
  double eval(const Model& m, size_t index, ParamVec& grad) const override;

 private:
  struct Instance {
    SentenceFeatures feats;
    LabelSequence gold;
  };
  std::vector<Instance> instances_;
  bool local_ = false;
};

// Marginal NLL over partially annotated corpora, each read through its
// projection onto the model's label space.
class MarginalObjective : public Objective {
 public:
  struct Source {
    const AnnotatedCorpus* corpus;
    const TagSet* tag_set;        // source tag set of the annotations
    const Projection* projection; // source -> model label space
  };
  MarginalObjective(const Model& proto, const std::vector<Source>& sources);
  size_t size() const override { return instances_.size(); }
  double eval(const Model& m, size_t index, ParamVec& grad) const override;

 private:
  struct Instance {
    SentenceFeatures feats;
    LabelConstraint constraint;
  };
  std::vector<Instance> instances_;
  bool local_ = false;
};

// Index-sliced helper: calls fn(i) for i in [0, n) from `workers` threads.
void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn);

}  // namespace tagunify

// Training losses and their analytic gradients.
//
//   nll_loss            log Z - score(y); grad = expected - observed counts
//   marginal_nll_loss   log Z - log Z_constrained over the paths compatible
//                       with a partial annotation
//   local_distill_loss  cross-entropy of teacher soft targets against
//                       group-summed per-token softmax rows
//   crf_distill_loss    cross-entropy of teacher soft targets against
//                       group-summed CRF node marginals; the gradient uses
//                       the identity  d log P(y_t in S) / dw =
//                       E[counts | y_t in S] - E[counts], one clamped
//                       forward-backward per (position, teacher label) with
//                       non-negligible target mass
//   combined_loss       alpha * student + (1 - alpha) * sum of distill terms
//
// Temperature divides every lattice score before inference; gradients pick
// up the matching 1/tau factor.

#pragma once

#include <optional>
#include <vector>

#include "tagunify/emissions.hpp"
#include "tagunify/lattice.hpp"
#include "tagunify/tagspace.hpp"

namespace tagunify {

struct DistillConfig {
  double tau = 1.0;    // softmax/lattice temperature
  double alpha = 0.5;  // student-loss weight in the combined objective

  void validate() const;
};

// Teacher-tag-set soft targets for one sentence (rows sum to 1).
struct SoftTargets {
  std::string teacher_id;
  MarginalTable q;
};

// A labeling observed under one source tag set, carried into the unified
// space through a projection: each observed label allows exactly its
// projection group.
struct PartialAnnotation {
  std::vector<int> observed;          // source-space label indices
  const Projection* projection = nullptr;

  LabelConstraint induced_constraint() const;
};

LabelConstraint induced_constraint(const std::vector<BioLabel>& labels, const TagSet& source,
                                   const Projection& proj);

// Every loss below returns its value and, when `grad` is non-null, adds
// grad_weight * (d loss / d params) into it.

double nll_loss(const Model& m, const SentenceFeatures& feats, const LabelSequence& y,
                ParamVec* grad = nullptr, double grad_weight = 1.0);

double marginal_nll_loss(const Model& m, const SentenceFeatures& feats, const LabelConstraint& c,
                         ParamVec* grad = nullptr, double grad_weight = 1.0);

// Per-token form: takes the student's softmax rows directly and returns the
// gradient with respect to the logits.
struct LocalDistillResult {
  double loss = 0.0;
  std::vector<double> dlogits;  // T*L
};
LocalDistillResult local_distill_loss(const MarginalTable& p, const MarginalTable& q,
                                      const Projection& proj);

// Model-level wrappers used in training. The local variant treats
// emission/tau as per-token logits; the CRF variant distills node marginals
// of the tempered lattice.
double local_distill_model_loss(const Model& student, const SentenceFeatures& feats,
                                const MarginalTable& q, const Projection& proj,
                                const DistillConfig& cfg, ParamVec* grad = nullptr,
                                double grad_weight = 1.0);

double crf_distill_loss(const Model& student, const SentenceFeatures& feats,
                        const MarginalTable& q, const Projection& proj, const DistillConfig& cfg,
                        ParamVec* grad = nullptr, double grad_weight = 1.0);

// Per-token supervised/marginal losses for local (softmax) models.
double local_nll_loss(const Model& m, const SentenceFeatures& feats, const LabelSequence& y,
                      ParamVec* grad = nullptr, double grad_weight = 1.0);
double local_marginal_nll_loss(const Model& m, const SentenceFeatures& feats,
                               const LabelConstraint& c, ParamVec* grad = nullptr,
                               double grad_weight = 1.0);

struct LossGrad {
  double loss = 0.0;
  ParamVec grad;
};

// alpha * student + (1 - alpha) * sum(distill) when a student loss is
// present, else the plain sum. At least one term must be present.
LossGrad combined_loss(const std::vector<LossGrad>& distill,
                       const std::optional<LossGrad>& student, double alpha);

double entropy(std::span<const double> p);

// Gradient-skip threshold for negligible target mass.
inline constexpr double kDistillMassCutoff = 1e-8;

}  // namespace tagunify

// Multi-teacher orchestration: MARDI distillation, MARDI-Data, progressive
// transfer, and the post-processing merge baseline. Teachers are frozen
// models wrapped with their projection onto the unified leaf space; their
// soft targets are computed once per (teacher, corpus, tau) and optionally
// cached on disk.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tagunify/corpus.hpp"
#include "tagunify/emissions.hpp"
#include "tagunify/objectives.hpp"
#include "tagunify/tagspace.hpp"
#include "tagunify/trainer.hpp"

namespace tagunify {

enum class ScenarioMode { mardi, mardi_data, progressive, postprocess };

ScenarioMode parse_mode(const std::string& name);
std::string mode_name(ScenarioMode mode);

struct TeacherHandle {
  Model model;            // never mutated
  Projection projection;  // teacher tag set -> unified leaves
  std::string id;
};

// Binds a frozen model to the hierarchy tag set matching its tag space;
// throws on teacher/hierarchy mismatch.
TeacherHandle make_teacher(Model m, const TagHierarchy& h);

// Soft targets for every sentence: CRF node marginals or local softmax rows
// at temperature tau. cache_dir may be empty (no disk cache).
std::vector<MarginalTable> teacher_targets(const TeacherHandle& teacher,
                                           const AnnotatedCorpus& corpus, double tau,
                                           const std::string& cache_dir, int workers);

// One labeled corpus bound to the hierarchy tag set its annotations use.
struct BoundCorpus {
  AnnotatedCorpus corpus;
  std::string tagset_id;
};

struct ScenarioConfig {
  ScenarioMode mode = ScenarioMode::mardi;
  DistillConfig distill;
  TrainConfig train;
  ModelKind student_kind = ModelKind::crf;
  uint64_t hash_seed = 0;
  std::string cache_dir;  // teacher-target cache; empty disables
};

// Distillation training objective: per sentence,
//   alpha * marginal NLL (when the sentence is labeled and the mode has a
//   student loss) + distill_weight * sum over teachers of the distillation
//   loss, with distill_weight = 1 - alpha when a student loss exists, 1
//   otherwise.
class DistillObjective final : public Objective {
 public:
  struct TargetRef {
    MarginalTable q;
    const Projection* projection;
  };
  struct Instance {
    SentenceFeatures feats;
    std::optional<LabelConstraint> constraint;
    std::vector<TargetRef> targets;
  };

  DistillObjective(std::vector<Instance> instances, DistillConfig cfg, ModelKind student_kind,
                   bool has_student_loss);
  size_t size() const override { return instances_.size(); }
  double eval(const Model& m, size_t index, ParamVec& grad) const override;

 private:
  std::vector<Instance> instances_;
  DistillConfig cfg_;
  ModelKind student_kind_;
  bool has_student_loss_;
};

// Trains a unified student.
//   mardi:        >= 1 teacher, >= 1 unlabeled corpus, no labeled corpora.
//   mardi_data:   >= 1 teacher, >= 1 labeled corpus; distills over the
//                 labeled text plus any unlabeled corpora.
//   progressive:  exactly 1 source teacher + labeled target data; distills
//                 over the target text plus optional source unlabeled text.
// Throws when the mode's requirements are not met.
TrainResult distill(const ScenarioConfig& cfg, const TagHierarchy& h,
                    const std::vector<TeacherHandle>& teachers,
                    const std::vector<BoundCorpus>& labeled,
                    const std::vector<AnnotatedCorpus>& unlabeled, const AnnotatedCorpus* dev,
                    std::ostream* log = nullptr, std::ostream* progress = nullptr);

// Post-processing baseline: every teacher decodes independently; per token
// the non-O decoded label with the highest node marginal wins and is mapped
// to a unified label via its representative leaf; a repair pass restores
// BIO validity.
LabelSequence postprocess_merge(const std::vector<TeacherHandle>& teachers, const TagHierarchy& h,
                                const Sentence& s);
AnnotatedCorpus postprocess_merge_corpus(const std::vector<TeacherHandle>& teachers,
                                         const TagHierarchy& h, const AnnotatedCorpus& text,
                                         int workers = 1);

}  // namespace tagunify

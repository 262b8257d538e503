#include "tagunify/unify.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "tagunify/common.hpp"

namespace tagunify {

ScenarioMode parse_mode(const std::string& name) {
  if (name == "mardi") return ScenarioMode::mardi;
  if (name == "mardi-data") return ScenarioMode::mardi_data;
  if (name == "progressive") return ScenarioMode::progressive;
  if (name == "postprocess") return ScenarioMode::postprocess;
  throw std::invalid_argument("unknown scenario mode: " + name);
}

std::string mode_name(ScenarioMode mode) {
  switch (mode) {
    case ScenarioMode::mardi: return "mardi";
    case ScenarioMode::mardi_data: return "mardi-data";
    case ScenarioMode::progressive: return "progressive";
    case ScenarioMode::postprocess: return "postprocess";
  }
  return "?";
}

TeacherHandle make_teacher(Model m, const TagHierarchy& h) {
  const TagSet* match = h.find_tag_set(m.tag_set.id);
  if (match) {
    if (match->types != m.tag_set.types)
      throw std::runtime_error("teacher/hierarchy mismatch: tag set '" + m.tag_set.id +
                               "' declares different entity types in the hierarchy");
  } else {
    match = &h.match_tag_set(m.tag_set.types);
    if (match->types != m.tag_set.types)
      throw std::runtime_error("teacher/hierarchy mismatch: no hierarchy tag set equals the "
                               "teacher's tag set '" +
                               m.tag_set.id + "'");
  }
  TeacherHandle t;
  t.projection = h.projection_for(match->id);
  t.id = match->id + "-" + hex64(model_hash(m));
  t.model = std::move(m);
  return t;
}

namespace {

constexpr char kTargetsMagic[] = "TAGUNIFY-TARGETS\n";

std::vector<MarginalTable> compute_targets(const TeacherHandle& teacher,
                                           const AnnotatedCorpus& corpus, double tau,
                                           int workers) {
  std::vector<MarginalTable> out(corpus.sentences.size());
  parallel_for(corpus.sentences.size(), workers, [&](size_t n) {
    SentenceFeatures feats =
        extract_sentence_features(corpus.sentences[n].sentence, teacher.model.hash_seed);
    out[n] = soft_targets(teacher.model, feats, tau);
  });
  return out;
}

bool load_targets(const std::string& path, size_t expect, std::vector<MarginalTable>& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[sizeof(kTargetsMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kTargetsMagic, sizeof(magic)) != 0) return false;
  uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || count != expect) return false;
  out.assign(count, {});
  for (auto& table : out) {
    uint32_t T = 0, L = 0;
    in.read(reinterpret_cast<char*>(&T), sizeof(T));
    in.read(reinterpret_cast<char*>(&L), sizeof(L));
    if (!in) return false;
    table = MarginalTable(static_cast<int>(T), static_cast<int>(L));
    in.read(reinterpret_cast<char*>(table.p.data()),
            static_cast<std::streamsize>(table.p.size() * sizeof(double)));
    if (!in) return false;
  }
  return true;
}

void save_targets(const std::string& path, const std::vector<MarginalTable>& tables) {
  std::ofstream out(path, std::ios::binary);
  if (!out) return;  // cache is best-effort
  out.write(kTargetsMagic, sizeof(kTargetsMagic) - 1);
  uint64_t count = tables.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& table : tables) {
    uint32_t T = static_cast<uint32_t>(table.T), L = static_cast<uint32_t>(table.L);
    out.write(reinterpret_cast<const char*>(&T), sizeof(T));
    out.write(reinterpret_cast<const char*>(&L), sizeof(L));
    out.write(reinterpret_cast<const char*>(table.p.data()),
              static_cast<std::streamsize>(table.p.size() * sizeof(double)));
  }
}

}  // namespace

std::vector<MarginalTable> teacher_targets(const TeacherHandle& teacher,
                                           const AnnotatedCorpus& corpus, double tau,
                                           const std::string& cache_dir, int workers) {
  std::string path;
  if (!cache_dir.empty()) {
    char tau_buf[32];
    std::snprintf(tau_buf, sizeof(tau_buf), "%.6g", tau);
    path = cache_dir + "/targets-" + hex64(model_hash(teacher.model)) + "-" +
           hex64(corpus_hash(corpus)) + "-tau" + tau_buf + ".bin";
    std::vector<MarginalTable> cached;
    if (load_targets(path, corpus.sentences.size(), cached)) return cached;
  }
  std::vector<MarginalTable> fresh = compute_targets(teacher, corpus, tau, workers);
  if (!path.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(cache_dir, ec);
    if (!ec) save_targets(path, fresh);
  }
  return fresh;
}

DistillObjective::DistillObjective(std::vector<Instance> instances, DistillConfig cfg,
                                   ModelKind student_kind, bool has_student_loss)
    : instances_(std::move(instances)),
      cfg_(cfg),
      student_kind_(student_kind),
      has_student_loss_(has_student_loss) {
  cfg_.validate();
}

double DistillObjective::eval(const Model& m, size_t index, ParamVec& grad) const {
  const Instance& inst = instances_[index];
  double loss = 0.0;
  double distill_weight = has_student_loss_ ? 1.0 - cfg_.alpha : 1.0;
  if (has_student_loss_ && cfg_.alpha > 0.0 && inst.constraint) {
    double student = student_kind_ == ModelKind::local
                         ? local_marginal_nll_loss(m, inst.feats, *inst.constraint, &grad, cfg_.alpha)
                         : marginal_nll_loss(m, inst.feats, *inst.constraint, &grad, cfg_.alpha);
    loss += cfg_.alpha * student;
  }
  if (distill_weight > 0.0) {
    for (const auto& target : inst.targets) {
      double d = student_kind_ == ModelKind::local
                     ? local_distill_model_loss(m, inst.feats, target.q, *target.projection, cfg_,
                                                &grad, distill_weight)
                     : crf_distill_loss(m, inst.feats, target.q, *target.projection, cfg_, &grad,
                                        distill_weight);
      loss += distill_weight * d;
    }
  }
  return loss;
}

TrainResult distill(const ScenarioConfig& cfg, const TagHierarchy& h,
                    const std::vector<TeacherHandle>& teachers,
                    const std::vector<BoundCorpus>& labeled,
                    const std::vector<AnnotatedCorpus>& unlabeled, const AnnotatedCorpus* dev,
                    std::ostream* log, std::ostream* progress) {
  cfg.distill.validate();
  if (teachers.empty()) throw std::invalid_argument("distill: at least one teacher required");
  switch (cfg.mode) {
    case ScenarioMode::mardi:
      if (unlabeled.empty())
        throw std::invalid_argument("mardi: unlabeled text is required");
      if (!labeled.empty())
        throw std::invalid_argument("mardi: labeled corpora are not used; pass them as unlabeled "
                                    "text or switch to mardi-data");
      break;
    case ScenarioMode::mardi_data:
      if (labeled.empty()) throw std::invalid_argument("mardi-data: labeled corpora are required");
      break;
    case ScenarioMode::progressive:
      if (teachers.size() != 1)
        throw std::invalid_argument("progressive: exactly one source teacher expected");
      if (labeled.empty())
        throw std::invalid_argument("progressive: labeled target data is required");
      break;
    case ScenarioMode::postprocess:
      throw std::invalid_argument("postprocess is not a training mode; use the merge entry point");
  }

  bool has_student_loss = cfg.mode != ScenarioMode::mardi;

  Model student = Model::init(h.unified(), cfg.student_kind, cfg.hash_seed);
  student.hierarchy_id = h.id();

  std::vector<DistillObjective::Instance> instances;
  auto add_targets = [&](const AnnotatedCorpus& text, auto&& init_instance) {
    std::vector<std::vector<MarginalTable>> targets;
    targets.reserve(teachers.size());
    for (const auto& teacher : teachers)
      targets.push_back(
          teacher_targets(teacher, text, cfg.distill.tau, cfg.cache_dir, cfg.train.workers));
    for (size_t n = 0; n < text.sentences.size(); ++n) {
      DistillObjective::Instance inst;
      inst.feats = extract_sentence_features(text.sentences[n].sentence, cfg.hash_seed);
      init_instance(inst, n);
      for (size_t k = 0; k < teachers.size(); ++k)
        inst.targets.push_back({std::move(targets[k][n]), &teachers[k].projection});
      instances.push_back(std::move(inst));
    }
  };

  for (const auto& bound : labeled) {
    const TagSet* source = h.find_tag_set(bound.tagset_id);
    if (!source)
      throw std::invalid_argument("labeled corpus bound to unknown tag set " + bound.tagset_id);
    const Projection& proj = h.projection_for(bound.tagset_id);
    add_targets(bound.corpus, [&](DistillObjective::Instance& inst, size_t n) {
      inst.constraint =
          induced_constraint(bound.corpus.sentences[n].labels, *source, proj);
    });
  }
  for (const auto& text : unlabeled)
    add_targets(text, [](DistillObjective::Instance&, size_t) {});

  DistillObjective objective(std::move(instances), cfg.distill, cfg.student_kind,
                             has_student_loss);
  return train(objective, std::move(student), dev, cfg.train, log, progress);
}

LabelSequence postprocess_merge(const std::vector<TeacherHandle>& teachers, const TagHierarchy& h,
                                const Sentence& s) {
  if (teachers.empty()) throw std::invalid_argument("merge: at least one teacher required");
  const TagSet& unified = h.unified();
  const int T = s.T();

  struct Decode {
    LabelSequence path;
    MarginalTable marginals;
  };
  std::vector<Decode> decodes;
  decodes.reserve(teachers.size());
  for (const auto& teacher : teachers) {
    SentenceFeatures feats = extract_sentence_features(s, teacher.model.hash_seed);
    Decode d;
    d.path = decode(teacher.model, feats, /*bio_mask=*/true);
    d.marginals = soft_targets(teacher.model, feats, /*tau=*/1.0);
    decodes.push_back(std::move(d));
  }

  LabelSequence merged(static_cast<size_t>(T), 0);
  for (int t = 0; t < T; ++t) {
    int best_teacher = -1;
    double best_prob = 0.0;
    for (size_t k = 0; k < teachers.size(); ++k) {
      int label = decodes[k].path[static_cast<size_t>(t)];
      if (label == 0) continue;  // O never beats a non-O claim
      double prob = decodes[k].marginals.at(t, label);
      if (best_teacher < 0 || prob > best_prob) {  // ties go to the earlier teacher
        best_teacher = static_cast<int>(k);
        best_prob = prob;
      }
    }
    if (best_teacher < 0) continue;
    const TeacherHandle& winner = teachers[static_cast<size_t>(best_teacher)];
    BioLabel src = winner.model.tag_set.label_at(
        decodes[static_cast<size_t>(best_teacher)].path[static_cast<size_t>(t)]);
    EntityType leaf = h.representative_leaf(src.type);
    merged[static_cast<size_t>(t)] =
        unified.index_of(src.kind == BioKind::B ? BioLabel::b(leaf) : BioLabel::i(leaf));
  }

  // Repair pass: orphan I-X (and I-X after a different type) becomes B-X.
  for (int t = 0; t < T; ++t) {
    int& v = merged[static_cast<size_t>(t)];
    if (v == 0 || v % 2 == 1) continue;
    bool legal = t > 0 && (merged[static_cast<size_t>(t - 1)] == v ||
                           merged[static_cast<size_t>(t - 1)] == v - 1);
    if (!legal) v = v - 1;
  }
  return merged;
}

AnnotatedCorpus postprocess_merge_corpus(const std::vector<TeacherHandle>& teachers,
                                         const TagHierarchy& h, const AnnotatedCorpus& text,
                                         int workers) {
  AnnotatedCorpus out = text;
  out.tagset_id = h.unified().id;
  parallel_for(text.sentences.size(), workers, [&](size_t n) {
    LabelSequence y = postprocess_merge(teachers, h, text.sentences[n].sentence);
    auto& labels = out.sentences[n].labels;
    labels.resize(y.size());
    for (size_t t = 0; t < y.size(); ++t) labels[t] = h.unified().label_at(y[t]);
  });
  return out;
}

}  // namespace tagunify

// Deterministic feature extraction and the log-linear emission scorer that
// produces lattices from sentences. Features are hashed strings in a 2^22
// id space; emission weights live in a sparse feature -> dense label-row
// table, so the whole model is a linear function of its weights and every
// gradient is an expected-count expression.

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tagunify/corpus.hpp"
#include "tagunify/lattice.hpp"
#include "tagunify/tagspace.hpp"

namespace tagunify {

inline constexpr int kFeatureSpaceBits = 22;
inline constexpr uint32_t kFeatureSpaceMask = (1u << kFeatureSpaceBits) - 1;

uint32_t feature_id(const std::string& feature, uint64_t hash_seed);

using TokenFeatures = std::vector<uint32_t>;  // sorted, deduplicated

struct SentenceFeatures {
  std::vector<TokenFeatures> tokens;
  int T() const { return static_cast<int>(tokens.size()); }
};

// Token surface features: lowercased identity, collapsed word shape,
// prefixes/suffixes of lengths 1-3, lowercased neighbors at offsets +-1 and
// +-2 (<BOS>/<EOS> sentinels out of range), and a bias always present.
TokenFeatures extract_features(const Sentence& s, int t, uint64_t hash_seed);
SentenceFeatures extract_sentence_features(const Sentence& s, uint64_t hash_seed);

// Collapsed character-class shape: "Paris" -> "Aa", "W3C" -> "A0A".
std::string word_shape(const std::string& token);

// Parameter block shaped like a model: sparse emission rows plus dense
// transition/start/stop. Doubles as the gradient accumulator.
struct ParamVec {
  int L = 0;
  std::unordered_map<uint32_t, std::vector<double>> emission;  // feature -> L weights
  std::vector<double> transition;                              // L*L
  std::vector<double> start, stop;                             // L

  void init(int labels);
  double& trans(int i, int j) { return transition[static_cast<size_t>(i) * L + j]; }
  double trans(int i, int j) const { return transition[static_cast<size_t>(i) * L + j]; }
  std::vector<double>& emission_row(uint32_t feature);         // creates zero row
  const std::vector<double>* find_row(uint32_t feature) const; // null if absent

  void axpy(double a, const ParamVec& g);  // this += a * g
  void scale(double a);
  double max_abs() const;
  size_t nonzero_rows() const { return emission.size(); }
};

enum class ModelKind : uint8_t { crf = 0, local = 1 };

// Feature weights + transition weights bound to a tag space. Plays both the
// teacher and the student role; teachers are simply never updated.
struct Model {
  TagSet tag_set;
  std::string hierarchy_id;  // empty when trained without a hierarchy
  ModelKind kind = ModelKind::crf;
  uint64_t hash_seed = 0;
  uint32_t format_version = 1;
  ParamVec w;

  int L() const { return tag_set.label_count(); }
  static Model init(TagSet ts, ModelKind kind = ModelKind::crf, uint64_t hash_seed = 0);
};

// emission[t][i] = sum of weight(f, i) over features active at t; unseen
// features contribute 0. Transition/start/stop copied from the model.
Lattice score_lattice(const Model& m, const SentenceFeatures& feats);

// Accumulates `weight` * expected counts into `out`:
//   emission  E[count(f,i)] = sum_t p_{t,i} [f active at t]
//   transition            = sum_t pairwise(t,i,j)
//   start/stop            = first/last marginal rows
// `pairwise` may be null when T == 1.
void accumulate_expected_counts(const SentenceFeatures& feats, const MarginalTable& marg,
                                const double* pairwise, double weight, ParamVec& out);

// Observed-count accumulation for a gold path, structured identically to
// the expected-count pass so the two cancel bit-exactly on one-hot
// posteriors.
void accumulate_observed_counts(const SentenceFeatures& feats, const LabelSequence& y,
                                double weight, ParamVec& out);

ParamVec expected_feature_counts(const Model& m, const SentenceFeatures& feats,
                                 const MarginalTable& marg, const double* pairwise);

// Viterbi decode (CRF kind) or per-token argmax (local kind); bio_mask adds
// sentinel scores forbidding I-X after anything but B-X/I-X and at the
// sequence start.
LabelSequence decode(const Model& m, const SentenceFeatures& feats, bool bio_mask);
void apply_bio_mask(Lattice& lat, const TagSet& ts);

// Token-level posteriors: CRF node marginals or per-token softmax, with all
// scores divided by tau first.
MarginalTable soft_targets(const Model& m, const SentenceFeatures& feats, double tau);

// Self-describing binary container, magic "TAGUNIFY-MODEL". Round-trips
// bit-exactly; emission rows are written in sorted feature order so equal
// models serialize to equal bytes.
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);
uint64_t model_hash(const Model& m);

}  // namespace tagunify

// Corpus I/O (two-column CoNLL), tag-set surgery for building experiments,
// and a seeded synthetic generator that provides exact ground truth at desk
// scale.

#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "tagunify/tagspace.hpp"

namespace tagunify {

struct Sentence {
  std::vector<std::string> tokens;
  int T() const { return static_cast<int>(tokens.size()); }
};

struct AnnotatedSentence {
  Sentence sentence;
  std::vector<BioLabel> labels;
};

struct AnnotatedCorpus {
  std::string tagset_id;
  std::vector<AnnotatedSentence> sentences;
  std::string provenance;

  size_t size() const { return sentences.size(); }
  // Entity types observed in the labels, ordered by first appearance.
  std::vector<EntityType> observed_types() const;
  // Tag set over the observed types (id = tagset_id).
  TagSet inferred_tag_set() const;
};

// Two-column whitespace-separated lines (token, BIO label), blank line
// between sentences, UTF-8. Reading repairs illegal I-X continuations to
// B-X with a warning on `warnings` (stderr by default). Malformed lines
// throw with the offending line number.
AnnotatedCorpus read_conll(const std::string& path, std::ostream* warnings = nullptr);
AnnotatedCorpus parse_conll(std::istream& in, const std::string& origin,
                            std::ostream* warnings = nullptr);
void write_conll(const AnnotatedCorpus& corpus, const std::string& path);
std::string format_conll(const AnnotatedCorpus& corpus);

// Spans of entity types outside `keep` become O; the result declares the
// reduced tag set.
AnnotatedCorpus selective_retag(const AnnotatedCorpus& corpus,
                                const std::vector<EntityType>& keep);

// Replaces every label with O. Used to feed text into distillation without
// exposing annotations.
AnnotatedCorpus strip_labels(const AnnotatedCorpus& corpus);

// Maps a unified-label corpus into tag set k's label space through the
// hierarchy (each unified label belongs to exactly one source label group).
AnnotatedCorpus coarsen_labels(const AnnotatedCorpus& unified_corpus, const TagHierarchy& h,
                               const std::string& tagset_id);

struct GeneratorSpec {
  TagSet tag_set;                    // unified entity types
  std::vector<int> vocab_sizes;      // one per entity type
  int background_vocab = 1000;
  double entity_start_prob = 0.1;    // in (0,1); 0 degenerates to all-O text
  double mean_entity_len = 1.5;      // >= 1; geometric continuation
  int len_min = 4, len_max = 16;     // sentence length range, inclusive
  uint64_t seed = 1;

  void validate() const;
};

// First-order generative chain. Each entity type draws tokens from its own
// disjoint vocabulary block; background tokens come from a separate block.
// Labels are exact ground truth and always BIO-valid.
AnnotatedCorpus generate_synthetic(const GeneratorSpec& spec, int n_sentences);

// Deterministic partition by seeded shuffle; sizes follow the ratios with
// floor rounding, remainder to train.
std::array<AnnotatedCorpus, 3> split_corpus(const AnnotatedCorpus& corpus, double train_ratio,
                                            double dev_ratio, double test_ratio, uint64_t seed);

// Stable content hash (used for teacher-target cache keys).
uint64_t corpus_hash(const AnnotatedCorpus& corpus);

}  // namespace tagunify

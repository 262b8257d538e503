// Entity-span extraction from BIO sequences and micro-averaged
// precision/recall/F1 with a per-type breakdown. Scoring is exact span
// match: start, end, and type must all agree.

#pragma once

#include <compare>
#include <map>
#include <string>
#include <vector>

#include "tagunify/corpus.hpp"

namespace tagunify {

struct Span {
  int start = 0;  // inclusive token index
  int end = 0;    // exclusive
  EntityType type;

  auto operator<=>(const Span&) const = default;
};

// Maximal B-led runs; an orphan I-X starts a new span (CoNLL-style repair).
std::vector<Span> extract_spans(const std::vector<BioLabel>& labels);

struct TypeCounts {
  long gold = 0;
  long predicted = 0;
  long correct = 0;
};

struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long gold_total = 0;
  long predicted_total = 0;
  long correct_total = 0;
  std::map<EntityType, TypeCounts> per_type;
};

// Predictions must align with gold sentence-by-sentence and token-by-token;
// throws on mismatch. Empty-prediction precision is defined as 0.
EvalResult micro_prf(const AnnotatedCorpus& gold, const AnnotatedCorpus& predicted);

std::string format_report(const EvalResult& r);
std::string report_json(const EvalResult& r);

}  // namespace tagunify

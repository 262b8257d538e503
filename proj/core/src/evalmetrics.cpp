#include "tagunify/evalmetrics.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace tagunify {

std::vector<Span> extract_spans(const std::vector<BioLabel>& labels) {
  std::vector<Span> spans;
  int T = static_cast<int>(labels.size());
  int t = 0;
  while (t < T) {
    const BioLabel& l = labels[static_cast<size_t>(t)];
    if (l.kind == BioKind::O) {
      ++t;
      continue;
    }
    // B-X starts a span; an orphan I-X does too.
    Span s{t, t + 1, l.type};
    ++t;
    while (t < T && labels[static_cast<size_t>(t)].kind == BioKind::I &&
           labels[static_cast<size_t>(t)].type == s.type) {
      s.end = ++t;
    }
    spans.push_back(std::move(s));
  }
  return spans;
}

EvalResult micro_prf(const AnnotatedCorpus& gold, const AnnotatedCorpus& predicted) {
  if (gold.sentences.size() != predicted.sentences.size())
    throw std::invalid_argument("micro_prf: corpora have different sentence counts");

  EvalResult r;
  for (size_t n = 0; n < gold.sentences.size(); ++n) {
    const auto& g = gold.sentences[n];
    const auto& p = predicted.sentences[n];
    if (g.sentence.tokens.size() != p.sentence.tokens.size())
      throw std::invalid_argument("micro_prf: sentence " + std::to_string(n) +
                                  " lengths differ between gold and prediction");
    auto gold_spans = extract_spans(g.labels);
    auto pred_spans = extract_spans(p.labels);
    std::set<Span> gold_set(gold_spans.begin(), gold_spans.end());

    for (const auto& s : gold_spans) {
      ++r.per_type[s.type].gold;
      ++r.gold_total;
    }
    for (const auto& s : pred_spans) {
      ++r.per_type[s.type].predicted;
      ++r.predicted_total;
      if (gold_set.count(s)) {
        ++r.per_type[s.type].correct;
        ++r.correct_total;
      }
    }
  }
  r.precision = r.predicted_total > 0
                    ? static_cast<double>(r.correct_total) / static_cast<double>(r.predicted_total)
                    : 0.0;
  r.recall = r.gold_total > 0
                 ? static_cast<double>(r.correct_total) / static_cast<double>(r.gold_total)
                 : 0.0;
  r.f1 = (r.precision + r.recall) > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                                      : 0.0;
  return r;
}

namespace {
std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}
}  // namespace

std::string format_report(const EvalResult& r) {
  std::string out;
  out += "type                 gold   pred  correct      P      R     F1\n";
  auto line = [&](const std::string& name, long g, long p, long c) {
    double prec = p > 0 ? static_cast<double>(c) / static_cast<double>(p) : 0.0;
    double rec = g > 0 ? static_cast<double>(c) / static_cast<double>(g) : 0.0;
    double f1 = (prec + rec) > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-18s %6ld %6ld %8ld  %s  %s  %s\n", name.c_str(), g, p, c,
                  fixed3(prec).c_str(), fixed3(rec).c_str(), fixed3(f1).c_str());
    out += buf;
  };
  for (const auto& [type, counts] : r.per_type) line(type, counts.gold, counts.predicted, counts.correct);
  line("ALL (micro)", r.gold_total, r.predicted_total, r.correct_total);
  return out;
}

std::string report_json(const EvalResult& r) {
  std::string out = "{\"precision\":" + fixed3(r.precision) + ",\"recall\":" + fixed3(r.recall) +
                    ",\"f1\":" + fixed3(r.f1) + ",\"gold\":" + std::to_string(r.gold_total) +
                    ",\"predicted\":" + std::to_string(r.predicted_total) +
                    ",\"correct\":" + std::to_string(r.correct_total) + ",\"per_type\":{";
  bool first = true;
  for (const auto& [type, c] : r.per_type) {
    if (!first) out += ",";
    first = false;
    out += "\"" + type + "\":{\"gold\":" + std::to_string(c.gold) +
           ",\"predicted\":" + std::to_string(c.predicted) +
           ",\"correct\":" + std::to_string(c.correct) + "}";
  }
  out += "}}";
  return out;
}

}  // namespace tagunify

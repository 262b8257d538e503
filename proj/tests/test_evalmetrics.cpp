#include <doctest.h>

#include <sstream>

#include "tagunify/evalmetrics.hpp"

using namespace tagunify;

namespace {
std::vector<BioLabel> labels(std::initializer_list<const char*> strs) {
  std::vector<BioLabel> out;
  for (const char* s : strs) out.push_back(BioLabel::parse(s));
  return out;
}

AnnotatedCorpus corpus_of(std::initializer_list<std::initializer_list<const char*>> sentences) {
  AnnotatedCorpus c;
  c.tagset_id = "t";
  for (const auto& sent : sentences) {
    AnnotatedSentence s;
    int i = 0;
    for (const char* l : sent) {
      s.sentence.tokens.push_back("tok" + std::to_string(i++));
      s.labels.push_back(BioLabel::parse(l));
    }
    c.sentences.push_back(std::move(s));
  }
  return c;
}
}  // namespace

TEST_CASE("span extraction: basic, empty, orphan repair") {
  CHECK(extract_spans(labels({"B-GPE", "I-GPE", "O"})) == std::vector<Span>{{0, 2, "GPE"}});
  CHECK(extract_spans(labels({"O", "O"})).empty());
  CHECK(extract_spans(labels({"I-GPE", "O"})) == std::vector<Span>{{0, 1, "GPE"}});
  CHECK(extract_spans(labels({"B-GPE", "I-DATE"})) ==
        std::vector<Span>{{0, 1, "GPE"}, {1, 2, "DATE"}});
  CHECK(extract_spans(labels({"B-GPE", "B-GPE"})) ==
        std::vector<Span>{{0, 1, "GPE"}, {1, 2, "GPE"}});
}

TEST_CASE("micro prf: identity predictions score 1") {
  AnnotatedCorpus g = corpus_of({{"B-GPE", "I-GPE", "O"}, {"O", "B-DATE"}});
  EvalResult r = micro_prf(g, g);
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 1.0);
  CHECK(r.f1 == 1.0);
}

TEST_CASE("micro prf: one of two gold spans found") {
  AnnotatedCorpus g = corpus_of({{"B-GPE", "O", "B-DATE"}});
  AnnotatedCorpus p = corpus_of({{"B-GPE", "O", "O"}});
  EvalResult r = micro_prf(g, p);
  CHECK(r.precision == doctest::Approx(1.0));
  CHECK(r.recall == doctest::Approx(0.5));
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("micro prf: empty predictions yield zero precision by convention") {
  AnnotatedCorpus g = corpus_of({{"B-GPE", "O"}});
  AnnotatedCorpus p = corpus_of({{"O", "O"}});
  EvalResult r = micro_prf(g, p);
  CHECK(r.precision == 0.0);
  CHECK(r.recall == 0.0);
  CHECK(r.f1 == 0.0);
}

TEST_CASE("boundary and type must both match exactly") {
  AnnotatedCorpus g = corpus_of({{"B-GPE", "I-GPE", "O"}});
  AnnotatedCorpus shifted = corpus_of({{"B-GPE", "O", "O"}});
  CHECK(micro_prf(g, shifted).correct_total == 0);
  AnnotatedCorpus wrong_type = corpus_of({{"B-DATE", "I-DATE", "O"}});
  CHECK(micro_prf(g, wrong_type).correct_total == 0);
}

TEST_CASE("micro prf is permutation-invariant over sentences") {
  AnnotatedCorpus g = corpus_of({{"B-GPE", "O"}, {"O", "B-DATE"}, {"B-GPE", "I-GPE"}});
  AnnotatedCorpus p = corpus_of({{"B-GPE", "O"}, {"B-DATE", "O"}, {"O", "B-GPE"}});
  EvalResult r1 = micro_prf(g, p);

  AnnotatedCorpus g2, p2;
  g2.tagset_id = p2.tagset_id = "t";
  for (int i : {2, 0, 1}) {
    g2.sentences.push_back(g.sentences[static_cast<size_t>(i)]);
    p2.sentences.push_back(p.sentences[static_cast<size_t>(i)]);
  }
  EvalResult r2 = micro_prf(g2, p2);
  CHECK(r1.precision == r2.precision);
  CHECK(r1.recall == r2.recall);
  CHECK(r1.f1 == r2.f1);
}

TEST_CASE("per-type correct counts sum to the micro numerator") {
  AnnotatedCorpus g = corpus_of({{"B-GPE", "O", "B-DATE"}, {"B-GPE", "I-GPE"}});
  AnnotatedCorpus p = corpus_of({{"B-GPE", "O", "B-DATE"}, {"B-GPE", "O"}});
  EvalResult r = micro_prf(g, p);
  long sum = 0;
  for (const auto& [type, c] : r.per_type) {
    sum += c.correct;
    CHECK(c.correct <= std::min(c.gold, c.predicted));
  }
  CHECK(sum == r.correct_total);
}

TEST_CASE("alignment mismatches are rejected") {
  AnnotatedCorpus g = corpus_of({{"O", "O"}});
  AnnotatedCorpus extra = corpus_of({{"O", "O"}, {"O"}});
  CHECK_THROWS(micro_prf(g, extra));
  AnnotatedCorpus shorter = corpus_of({{"O"}});
  CHECK_THROWS(micro_prf(g, shorter));
}

TEST_CASE("report formats include the micro line and per-type json") {
  AnnotatedCorpus g = corpus_of({{"B-GPE", "O"}});
  EvalResult r = micro_prf(g, g);
  CHECK(format_report(r).find("ALL (micro)") != std::string::npos);
  std::string js = report_json(r);
  CHECK(js.find("\"f1\":1.000") != std::string::npos);
  CHECK(js.find("\"GPE\"") != std::string::npos);
}

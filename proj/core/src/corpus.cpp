#include "tagunify/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tagunify/common.hpp"

namespace tagunify {

std::vector<EntityType> AnnotatedCorpus::observed_types() const {
  std::vector<EntityType> out;
  std::set<EntityType> seen;
  for (const auto& s : sentences)
    for (const auto& l : s.labels)
      if (l.kind != BioKind::O && seen.insert(l.type).second) out.push_back(l.type);
  return out;
}

TagSet AnnotatedCorpus::inferred_tag_set() const { return TagSet(tagset_id, observed_types()); }

AnnotatedCorpus parse_conll(std::istream& in, const std::string& origin, std::ostream* warnings) {
  std::ostream* warn = warnings ? warnings : &std::cerr;
  AnnotatedCorpus corpus;
  corpus.tagset_id = origin;
  corpus.provenance = origin;

  AnnotatedSentence cur;
  std::string line;
  int lineno = 0;
  auto flush = [&]() {
    if (!cur.sentence.tokens.empty()) {
      corpus.sentences.push_back(std::move(cur));
      cur = {};
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    std::istringstream ls(line);
    std::string token, label, extra;
    if (!(ls >> token >> label) || (ls >> extra)) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                               ": expected 'TOKEN LABEL', got '" + line + "'");
    }
    BioLabel parsed;
    try {
      parsed = BioLabel::parse(label);
    } catch (const std::exception&) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": unknown label string '" +
                               label + "'");
    }
    // Repair illegal continuations: I-X may only follow B-X or I-X.
    if (parsed.kind == BioKind::I) {
      bool legal = !cur.labels.empty() && cur.labels.back().kind != BioKind::O &&
                   cur.labels.back().type == parsed.type;
      if (!legal) {
        (*warn) << origin << ":" << lineno << ": warning: orphan " << parsed.str()
                << " repaired to B-" << parsed.type << "\n";
        parsed.kind = BioKind::B;
      }
    }
    cur.sentence.tokens.push_back(token);
    cur.labels.push_back(parsed);
  }
  flush();
  return corpus;
}

AnnotatedCorpus read_conll(const std::string& path, std::ostream* warnings) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  return parse_conll(in, path, warnings);
}

std::string format_conll(const AnnotatedCorpus& corpus) {
  std::string out;
  for (const auto& s : corpus.sentences) {
    for (size_t t = 0; t < s.sentence.tokens.size(); ++t) {
      out += s.sentence.tokens[t];
      out += ' ';
      out += s.labels[t].str();
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

void write_conll(const AnnotatedCorpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  out << format_conll(corpus);
}

AnnotatedCorpus selective_retag(const AnnotatedCorpus& corpus,
                                const std::vector<EntityType>& keep) {
  std::set<EntityType> keep_set(keep.begin(), keep.end());
  AnnotatedCorpus out = corpus;
  for (auto& s : out.sentences)
    for (auto& l : s.labels)
      if (l.kind != BioKind::O && !keep_set.count(l.type)) l = BioLabel::o();
  return out;
}

AnnotatedCorpus strip_labels(const AnnotatedCorpus& corpus) {
  AnnotatedCorpus out = corpus;
  for (auto& s : out.sentences)
    for (auto& l : s.labels) l = BioLabel::o();
  return out;
}

AnnotatedCorpus coarsen_labels(const AnnotatedCorpus& unified_corpus, const TagHierarchy& h,
                               const std::string& tagset_id) {
  const Projection& proj = h.projection_for(tagset_id);
  const TagSet* target = h.find_tag_set(tagset_id);
  const TagSet& unified = h.unified();
  AnnotatedCorpus out = unified_corpus;
  out.tagset_id = tagset_id;
  for (auto& s : out.sentences) {
    for (auto& l : s.labels) {
      int u = unified.index_of(l);
      int src = proj.group_of[static_cast<size_t>(u)];
      l = target->label_at(src);
    }
    // Coarsening can map an I-label into O's group (a leaf the target set
    // does not cover); restore BIO validity.
    for (size_t t = 0; t < s.labels.size(); ++t) {
      if (s.labels[t].kind != BioKind::I) continue;
      bool legal = t > 0 && s.labels[t - 1].kind != BioKind::O &&
                   s.labels[t - 1].type == s.labels[t].type;
      if (!legal) s.labels[t].kind = BioKind::B;
    }
  }
  return out;
}

void GeneratorSpec::validate() const {
  if (tag_set.types.empty()) throw std::invalid_argument("generator: no entity types");
  if (tag_set.types.size() > 12) throw std::invalid_argument("generator: at most 12 entity types");
  if (vocab_sizes.size() != tag_set.types.size())
    throw std::invalid_argument("generator: one vocab size per entity type required");
  for (int v : vocab_sizes)
    if (v < 1 || v > 20000)
      throw std::invalid_argument("generator: vocab sizes must be in [1, 20000]");
  if (background_vocab < 1 || background_vocab > 90000)
    throw std::invalid_argument("generator: background vocab must be in [1, 90000]");
  if (entity_start_prob < 0.0 || entity_start_prob >= 1.0)
    throw std::invalid_argument("generator: entity start probability must be in [0,1)");
  if (mean_entity_len < 1.0) throw std::invalid_argument("generator: mean entity length must be >= 1");
  if (len_min < 1 || len_max < len_min)
    throw std::invalid_argument("generator: bad sentence length range");
}

namespace {
std::string padded(uint64_t v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}
}  // namespace

AnnotatedCorpus generate_synthetic(const GeneratorSpec& spec, int n_sentences) {
  spec.validate();
  Rng rng(spec.seed);
  const int K = static_cast<int>(spec.tag_set.types.size());

  // Entity surface forms deliberately collide pairwise: types k and
  // k + ceil(K/2) share a prefix letter, and their numeric ids are scattered
  // over a common range by a multiplicative bijection mod a prime, so no
  // prefix, suffix, or shape feature reveals the type of an unseen entity
  // word. Full word identity always does: the id blocks stay disjoint. The
  // scatter depends only on (type index, vocab layout), never on the seed,
  // so corpora generated for the same tag set share their vocabulary.
  const int n_classes = std::max(1, (K + 1) / 2);
  const int stride = (K + n_classes - 1) / n_classes;
  constexpr uint64_t kIdPrime = 99991;
  constexpr uint64_t kIdMixer = 12347;
  auto entity_token = [&](int k, uint64_t word) {
    char prefix = static_cast<char>('q' + k % n_classes);
    uint64_t raw = word * static_cast<uint64_t>(stride) + static_cast<uint64_t>(k / n_classes);
    return std::string(1, prefix) + padded(raw * kIdMixer % kIdPrime, 5);
  };

  AnnotatedCorpus corpus;
  corpus.tagset_id = spec.tag_set.id;
  corpus.provenance = "synthetic seed=" + std::to_string(spec.seed);

  double cont_prob = 1.0 - 1.0 / spec.mean_entity_len;
  for (int n = 0; n < n_sentences; ++n) {
    int T = rng.range(spec.len_min, spec.len_max);
    AnnotatedSentence s;
    int t = 0;
    while (t < T) {
      if (rng.uniform() < spec.entity_start_prob) {
        int k = static_cast<int>(rng.below(static_cast<uint64_t>(K)));
        int len = 1;
        while (t + len < T && rng.uniform() < cont_prob) ++len;
        for (int j = 0; j < len; ++j) {
          uint64_t word = rng.below(static_cast<uint64_t>(spec.vocab_sizes[static_cast<size_t>(k)]));
          s.sentence.tokens.push_back(entity_token(k, word));
          s.labels.push_back(j == 0 ? BioLabel::b(spec.tag_set.types[static_cast<size_t>(k)])
                                    : BioLabel::i(spec.tag_set.types[static_cast<size_t>(k)]));
        }
        t += len;
      } else {
        uint64_t word = rng.below(static_cast<uint64_t>(spec.background_vocab));
        s.sentence.tokens.push_back("w" + padded(word, 5));
        s.labels.push_back(BioLabel::o());
        ++t;
      }
    }
    corpus.sentences.push_back(std::move(s));
  }
  return corpus;
}

std::array<AnnotatedCorpus, 3> split_corpus(const AnnotatedCorpus& corpus, double train_ratio,
                                            double dev_ratio, double test_ratio, uint64_t seed) {
  if (train_ratio < 0 || dev_ratio < 0 || test_ratio < 0 ||
      std::abs(train_ratio + dev_ratio + test_ratio - 1.0) > 1e-9)
    throw std::invalid_argument("split: ratios must be non-negative and sum to 1");
  std::vector<size_t> order(corpus.sentences.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  size_t n = order.size();
  size_t n_dev = static_cast<size_t>(std::floor(dev_ratio * static_cast<double>(n)));
  size_t n_test = static_cast<size_t>(std::floor(test_ratio * static_cast<double>(n)));
  size_t n_train = n - n_dev - n_test;  // remainder goes to train

  std::array<AnnotatedCorpus, 3> out;
  for (auto& c : out) {
    c.tagset_id = corpus.tagset_id;
    c.provenance = corpus.provenance;
  }
  for (size_t i = 0; i < n; ++i) {
    const auto& s = corpus.sentences[order[i]];
    if (i < n_train)
      out[0].sentences.push_back(s);
    else if (i < n_train + n_dev)
      out[1].sentences.push_back(s);
    else
      out[2].sentences.push_back(s);
  }
  return out;
}

uint64_t corpus_hash(const AnnotatedCorpus& corpus) {
  return fnv1a64(format_conll(corpus));
}

}  // namespace tagunify

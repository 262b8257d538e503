#include "tagunify/emissions.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "tagunify/common.hpp"

namespace tagunify {

uint32_t feature_id(const std::string& feature, uint64_t hash_seed) {
  return static_cast<uint32_t>(fnv1a64(feature, hash_seed)) & kFeatureSpaceMask;
}

std::string word_shape(const std::string& token) {
  std::string shape;
  char prev = 0;
  for (unsigned char c : token) {
    char cls;
    if (std::isupper(c))
      cls = 'A';
    else if (std::islower(c))
      cls = 'a';
    else if (std::isdigit(c))
      cls = '0';
    else
      cls = static_cast<char>(c);
    if (cls != prev) shape.push_back(cls);
    prev = cls;
  }
  return shape;
}

namespace {
std::string lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

const std::string kBos = "<BOS>";
const std::string kEos = "<EOS>";

std::string neighbor(const Sentence& s, int pos) {
  if (pos < 0) return kBos;
  if (pos >= s.T()) return kEos;
  return lower(s.tokens[static_cast<size_t>(pos)]);
}
}  // namespace

TokenFeatures extract_features(const Sentence& s, int t, uint64_t hash_seed) {
  if (t < 0 || t >= s.T()) throw std::invalid_argument("feature position out of range");
  const std::string& tok = s.tokens[static_cast<size_t>(t)];
  std::string low = lower(tok);

  std::vector<std::string> feats;
  feats.reserve(16);
  feats.push_back("bias");
  feats.push_back("word=" + low);
  feats.push_back("shape=" + word_shape(tok));
  for (size_t n = 1; n <= 3 && n <= low.size(); ++n) {
    feats.push_back("pre" + std::to_string(n) + "=" + low.substr(0, n));
    feats.push_back("suf" + std::to_string(n) + "=" + low.substr(low.size() - n));
  }
  feats.push_back("prev1=" + neighbor(s, t - 1));
  feats.push_back("prev2=" + neighbor(s, t - 2));
  feats.push_back("next1=" + neighbor(s, t + 1));
  feats.push_back("next2=" + neighbor(s, t + 2));

  TokenFeatures ids;
  ids.reserve(feats.size());
  for (const auto& f : feats) ids.push_back(feature_id(f, hash_seed));
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

SentenceFeatures extract_sentence_features(const Sentence& s, uint64_t hash_seed) {
  SentenceFeatures out;
  out.tokens.reserve(static_cast<size_t>(s.T()));
  for (int t = 0; t < s.T(); ++t) out.tokens.push_back(extract_features(s, t, hash_seed));
  return out;
}

void ParamVec::init(int labels) {
  L = labels;
  emission.clear();
  transition.assign(static_cast<size_t>(L) * L, 0.0);
  start.assign(static_cast<size_t>(L), 0.0);
  stop.assign(static_cast<size_t>(L), 0.0);
}

std::vector<double>& ParamVec::emission_row(uint32_t feature) {
  auto [it, inserted] = emission.try_emplace(feature);
  if (inserted) it->second.assign(static_cast<size_t>(L), 0.0);
  return it->second;
}

const std::vector<double>* ParamVec::find_row(uint32_t feature) const {
  auto it = emission.find(feature);
  return it == emission.end() ? nullptr : &it->second;
}

void ParamVec::axpy(double a, const ParamVec& g) {
  if (g.L != L) throw std::invalid_argument("ParamVec dimension mismatch");
  for (const auto& [f, row] : g.emission) {
    auto& dst = emission_row(f);
    for (int i = 0; i < L; ++i) dst[static_cast<size_t>(i)] += a * row[static_cast<size_t>(i)];
  }
  for (size_t i = 0; i < transition.size(); ++i) transition[i] += a * g.transition[i];
  for (size_t i = 0; i < start.size(); ++i) start[i] += a * g.start[i];
  for (size_t i = 0; i < stop.size(); ++i) stop[i] += a * g.stop[i];
}

void ParamVec::scale(double a) {
  for (auto& [f, row] : emission)
    for (double& x : row) x *= a;
  for (double& x : transition) x *= a;
  for (double& x : start) x *= a;
  for (double& x : stop) x *= a;
}

double ParamVec::max_abs() const {
  double m = 0.0;
  for (const auto& [f, row] : emission)
    for (double x : row) m = std::max(m, std::abs(x));
  for (double x : transition) m = std::max(m, std::abs(x));
  for (double x : start) m = std::max(m, std::abs(x));
  for (double x : stop) m = std::max(m, std::abs(x));
  return m;
}

Model Model::init(TagSet ts, ModelKind kind, uint64_t hash_seed) {
  Model m;
  m.tag_set = std::move(ts);
  m.kind = kind;
  m.hash_seed = hash_seed;
  m.w.init(m.tag_set.label_count());
  return m;
}

Lattice score_lattice(const Model& m, const SentenceFeatures& feats) {
  const int L = m.L();
  Lattice lat = Lattice::zeros(feats.T(), L);
  for (int t = 0; t < feats.T(); ++t) {
    for (uint32_t f : feats.tokens[static_cast<size_t>(t)]) {
      const auto* row = m.w.find_row(f);
      if (!row) continue;
      for (int i = 0; i < L; ++i) lat.emis(t, i) += (*row)[static_cast<size_t>(i)];
    }
  }
  lat.transition = m.w.transition;
  lat.start = m.w.start;
  lat.stop = m.w.stop;
  return lat;
}

void accumulate_expected_counts(const SentenceFeatures& feats, const MarginalTable& marg,
                                const double* pairwise, double weight, ParamVec& out) {
  const int T = marg.T, L = marg.L;
  if (feats.T() != T || out.L != L)
    throw std::invalid_argument("expected-count accumulation: dimension mismatch");
  for (int t = 0; t < T; ++t) {
    for (uint32_t f : feats.tokens[static_cast<size_t>(t)]) {
      auto& row = out.emission_row(f);
      for (int i = 0; i < L; ++i) row[static_cast<size_t>(i)] += weight * marg.at(t, i);
    }
  }
  if (pairwise) {
    for (int t = 0; t + 1 < T; ++t) {
      const double* slice = pairwise + static_cast<size_t>(t) * L * L;
      for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j)
          out.trans(i, j) += weight * slice[static_cast<size_t>(i) * L + j];
    }
  }
  for (int i = 0; i < L; ++i) {
    out.start[static_cast<size_t>(i)] += weight * marg.at(0, i);
    out.stop[static_cast<size_t>(i)] += weight * marg.at(T - 1, i);
  }
}

void accumulate_observed_counts(const SentenceFeatures& feats, const LabelSequence& y,
                                double weight, ParamVec& out) {
  const int T = feats.T();
  if (static_cast<int>(y.size()) != T)
    throw std::invalid_argument("observed-count accumulation: length mismatch");
  for (int t = 0; t < T; ++t) {
    int label = y[static_cast<size_t>(t)];
    if (label < 0 || label >= out.L) throw std::invalid_argument("label out of range");
    for (uint32_t f : feats.tokens[static_cast<size_t>(t)])
      out.emission_row(f)[static_cast<size_t>(label)] += weight;
  }
  for (int t = 0; t + 1 < T; ++t)
    out.trans(y[static_cast<size_t>(t)], y[static_cast<size_t>(t + 1)]) += weight;
  out.start[static_cast<size_t>(y[0])] += weight;
  out.stop[static_cast<size_t>(y[static_cast<size_t>(T - 1)])] += weight;
}

ParamVec expected_feature_counts(const Model& m, const SentenceFeatures& feats,
                                 const MarginalTable& marg, const double* pairwise) {
  ParamVec out;
  out.init(m.L());
  accumulate_expected_counts(feats, marg, pairwise, 1.0, out);
  return out;
}

void apply_bio_mask(Lattice& lat, const TagSet& ts) {
  const int L = ts.label_count();
  if (lat.L != L) throw std::invalid_argument("bio mask: label dimension mismatch");
  for (size_t j = 0; j < ts.types.size(); ++j) {
    int b = static_cast<int>(2 * j + 1), i = static_cast<int>(2 * j + 2);
    // I-X is reachable only from B-X or I-X.
    for (int prev = 0; prev < L; ++prev)
      if (prev != b && prev != i) lat.trans(prev, i) += kForbidden;
    lat.start[static_cast<size_t>(i)] += kForbidden;
  }
}

LabelSequence decode(const Model& m, const SentenceFeatures& feats, bool bio_mask) {
  Lattice lat = score_lattice(m, feats);
  if (m.kind == ModelKind::local) {
    LabelSequence y(static_cast<size_t>(lat.T), 0);
    for (int t = 0; t < lat.T; ++t) {
      int best = 0;
      for (int i = 1; i < lat.L; ++i)
        if (lat.emis(t, i) > lat.emis(t, best)) best = i;
      y[static_cast<size_t>(t)] = best;
    }
    if (bio_mask) {
      // Local decodes can emit orphan I; repair to B like the span scorer.
      for (int t = 0; t < lat.T; ++t) {
        int& v = y[static_cast<size_t>(t)];
        if (v == 0 || v % 2 == 1) continue;
        bool legal = t > 0 && (y[static_cast<size_t>(t - 1)] == v || y[static_cast<size_t>(t - 1)] == v - 1);
        if (!legal) v = v - 1;
      }
    }
    return y;
  }
  if (bio_mask) apply_bio_mask(lat, m.tag_set);
  return viterbi(lat).path;
}

MarginalTable soft_targets(const Model& m, const SentenceFeatures& feats, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("temperature must be positive");
  Lattice lat = score_lattice(m, feats);
  lat.scale_scores(1.0 / tau);
  if (m.kind == ModelKind::local) {
    MarginalTable q(lat.T, lat.L);
    for (int t = 0; t < lat.T; ++t) {
      for (int i = 0; i < lat.L; ++i) q.at(t, i) = lat.emis(t, i);
      softmax_inplace({q.p.data() + static_cast<size_t>(t) * lat.L, static_cast<size_t>(lat.L)});
    }
    return q;
  }
  return node_marginals(lat);
}

}  // namespace tagunify

// Microbenchmarks for the inference and gradient kernels that dominate
// training time.

#include <benchmark/benchmark.h>

#include "tagunify/common.hpp"
#include "tagunify/emissions.hpp"
#include "tagunify/lattice.hpp"
#include "tagunify/objectives.hpp"
#include "tagunify/tagspace.hpp"

using namespace tagunify;

namespace {

Lattice make_lattice(int T, int L, uint64_t seed) {
  Rng rng(seed);
  Lattice lat = Lattice::zeros(T, L);
  for (double& x : lat.emission) x = rng.gaussian();
  for (double& x : lat.transition) x = rng.gaussian();
  for (double& x : lat.start) x = rng.gaussian();
  for (double& x : lat.stop) x = rng.gaussian();
  return lat;
}

Sentence make_sentence(int T, uint64_t seed) {
  Rng rng(seed);
  Sentence s;
  for (int t = 0; t < T; ++t) s.tokens.push_back("tok" + std::to_string(rng.below(64)));
  return s;
}

void BM_ForwardBackward(benchmark::State& state) {
  Lattice lat = make_lattice(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 1);
  for (auto _ : state) {
    ForwardBackward fb = forward_backward(lat);
    benchmark::DoNotOptimize(fb.log_z);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Args({16, 9})->Args({32, 9})->Args({16, 21})->Args({64, 37});

void BM_Viterbi(benchmark::State& state) {
  Lattice lat = make_lattice(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 2);
  for (auto _ : state) {
    ViterbiResult v = viterbi(lat);
    benchmark::DoNotOptimize(v.score);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Viterbi)->Args({16, 9})->Args({32, 9})->Args({64, 37});

void BM_NodeMarginals(benchmark::State& state) {
  Lattice lat = make_lattice(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 3);
  for (auto _ : state) {
    MarginalTable m = node_marginals(lat);
    benchmark::DoNotOptimize(m.p.data());
  }
}
BENCHMARK(BM_NodeMarginals)->Args({16, 9})->Args({32, 21});

void BM_FeatureExtraction(benchmark::State& state) {
  Sentence s = make_sentence(static_cast<int>(state.range(0)), 4);
  for (auto _ : state) {
    SentenceFeatures f = extract_sentence_features(s, 0);
    benchmark::DoNotOptimize(f.tokens.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FeatureExtraction)->Arg(16)->Arg(64);

void BM_NllGradient(benchmark::State& state) {
  const int T = static_cast<int>(state.range(0));
  TagSet ts("bench", {"A", "B", "C", "D"});
  Sentence s = make_sentence(T, 5);
  Rng rng(6);
  Model m = Model::init(ts);
  SentenceFeatures feats = extract_sentence_features(s, m.hash_seed);
  for (const auto& tok : feats.tokens)
    for (uint32_t f : tok) {
      auto& row = m.w.emission_row(f);
      for (double& x : row) x = 0.2 * rng.gaussian();
    }
  LabelSequence y(static_cast<size_t>(T), 0);
  for (auto _ : state) {
    ParamVec grad;
    grad.init(m.L());
    double loss = nll_loss(m, feats, y, &grad);
    benchmark::DoNotOptimize(loss);
  }
  state.SetItemsProcessed(state.iterations() * T);
}
BENCHMARK(BM_NllGradient)->Arg(16)->Arg(32);

void BM_CrfDistillGradient(benchmark::State& state) {
  const int T = static_cast<int>(state.range(0));
  TagSet ts("bench", {"A", "B", "C", "D"});
  TagHierarchy h = TagHierarchy::identity(ts);
  Sentence s = make_sentence(T, 7);
  Rng rng(8);
  Model m = Model::init(ts);
  SentenceFeatures feats = extract_sentence_features(s, m.hash_seed);
  for (const auto& tok : feats.tokens)
    for (uint32_t f : tok) {
      auto& row = m.w.emission_row(f);
      for (double& x : row) x = 0.2 * rng.gaussian();
    }
  MarginalTable q = soft_targets(m, feats, 1.0);
  DistillConfig cfg;
  const Projection& proj = h.projection_for(ts.id);
  for (auto _ : state) {
    ParamVec grad;
    grad.init(m.L());
    double loss = crf_distill_loss(m, feats, q, proj, cfg, &grad);
    benchmark::DoNotOptimize(loss);
  }
  state.SetItemsProcessed(state.iterations() * T);
}
BENCHMARK(BM_CrfDistillGradient)->Arg(8)->Arg(16);

}  // namespace

BENCHMARK_MAIN();

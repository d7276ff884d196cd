#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "facelab/embedding_store.hpp"
#include "facelab/eval.hpp"
#include "facelab/pairs.hpp"
#include "facelab/random.hpp"

// Deliberately naive reference implementations of the evaluation protocols.
namespace facelab::testing {

inline double naive_cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// Every candidate threshold scored by a full pass; first maximum wins.
inline ThresholdResult brute_threshold(const std::vector<double>& sims, const std::vector<std::uint8_t>& same) {
  std::vector<double> values(sims.begin(), sims.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> candidates{values.front() - 1.0};
  for (std::size_t i = 0; i + 1 < values.size(); ++i) candidates.push_back((values[i] + values[i + 1]) / 2.0);
  candidates.push_back(values.back() + 1.0);
  ThresholdResult best{0.0, -1.0};
  for (double t : candidates) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < sims.size(); ++i) {
      if ((sims[i] >= t) == (same[i] != 0)) ++correct;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(sims.size());
    if (acc > best.accuracy) best = {t, acc};
  }
  return best;
}

inline VerificationReport brute_verify(const EmbeddingStore& store, const PairList& pairs) {
  std::vector<double> sims;
  for (const auto& e : pairs.entries) sims.push_back(naive_cosine(store.at(e.key_a).vector, store.at(e.key_b).vector));
  VerificationReport r;
  r.pair_count = pairs.entries.size();
  for (int f = 0; f < pairs.fold_count; ++f) {
    std::vector<double> ts;
    std::vector<std::uint8_t> tl;
    for (std::size_t i = 0; i < sims.size(); ++i) {
      if (pairs.entries[i].fold != f) {
        ts.push_back(sims[i]);
        tl.push_back(pairs.entries[i].same_identity ? 1 : 0);
      }
    }
    const double t = brute_threshold(ts, tl).threshold;
    int correct = 0, count = 0;
    for (std::size_t i = 0; i < sims.size(); ++i) {
      if (pairs.entries[i].fold != f) continue;
      ++count;
      if ((sims[i] >= t) == pairs.entries[i].same_identity) ++correct;
    }
    r.fold_accuracy.push_back(static_cast<double>(correct) / count);
    r.thresholds.push_back(t);
  }
  double sum = 0;
  for (double a : r.fold_accuracy) sum += a;
  r.mean = sum / static_cast<double>(r.fold_accuracy.size());
  double var = 0;
  for (double a : r.fold_accuracy) var += (a - r.mean) * (a - r.mean);
  r.std = std::sqrt(var / static_cast<double>(r.fold_accuracy.size()));
  return r;
}

// Full stable sort of all candidates per probe.
inline std::vector<double> brute_cmc(const EmbeddingStore& probes, const EmbeddingStore& gallery,
                                     const EmbeddingStore& distractors, int kmax) {
  std::vector<const EmbeddingRecord*> cands;
  for (const auto& r : gallery.records()) cands.push_back(&r);
  for (const auto& r : distractors.records()) cands.push_back(&r);
  std::vector<int> first_hit;
  for (const auto& p : probes.records()) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t c = 0; c < cands.size(); ++c) scored.push_back({naive_cosine(p.vector, cands[c]->vector), c});
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    int rank = -1;
    for (std::size_t k = 0; k < scored.size(); ++k) {
      const std::size_t c = scored[k].second;
      if (c < gallery.size() && cands[c]->id == p.id) {
        rank = static_cast<int>(k) + 1;
        break;
      }
    }
    first_hit.push_back(rank);
  }
  std::vector<double> acc(static_cast<std::size_t>(kmax), 0.0);
  for (int k = 1; k <= kmax; ++k) {
    int hits = 0;
    for (int r : first_hit) hits += (r > 0 && r <= k) ? 1 : 0;
    acc[static_cast<std::size_t>(k - 1)] = static_cast<double>(hits) / static_cast<double>(first_hit.size());
  }
  return acc;
}

inline std::vector<float> unit_noise(Rng& rng, std::vector<float> v, double sigma) {
  double n2 = 0;
  for (auto& x : v) {
    x = static_cast<float>(x + sigma * rng.normal());
    n2 += static_cast<double>(x) * x;
  }
  for (auto& x : v) x = static_cast<float>(x / std::sqrt(n2));
  return v;
}

inline std::vector<float> random_unit_vector(Rng& rng, int dim) {
  std::vector<float> v(static_cast<std::size_t>(dim), 0.0f);
  return unit_noise(rng, v, 1.0);
}

// Random verification instance: identities with noisy embeddings, pairs
// drawn as same/different with probability 1/2.
struct VerifyInstance {
  EmbeddingStore store;
  PairList pairs;
};

inline VerifyInstance random_verify_instance(std::uint64_t seed, int pair_count, int dim, double noise,
                                             int folds = 10) {
  Rng rng(seed);
  const int ids = 20;
  const int per_id = 5;
  std::vector<std::vector<float>> centres;
  for (int i = 0; i < ids; ++i) centres.push_back(random_unit_vector(rng, dim));
  VerifyInstance inst;
  for (int i = 0; i < ids; ++i) {
    for (int k = 0; k < per_id; ++k) {
      EmbeddingRecord r;
      r.id = "id" + std::to_string(i);
      r.image_key = r.id + "/" + std::to_string(k);
      r.vector = unit_noise(rng, centres[static_cast<std::size_t>(i)], noise);
      r.normalized = true;
      inst.store.add(r);
    }
  }
  for (int p = 0; p < pair_count; ++p) {
    const bool same = rng.bernoulli(0.5);
    const int a = static_cast<int>(rng.uniform_int(ids));
    int b = a;
    while (!same && b == a) b = static_cast<int>(rng.uniform_int(ids));
    const int ka = static_cast<int>(rng.uniform_int(per_id));
    int kb = ka;
    while (kb == ka) kb = static_cast<int>(rng.uniform_int(per_id));
    inst.pairs.entries.push_back({"id" + std::to_string(a) + "/" + std::to_string(ka),
                                  "id" + std::to_string(b) + "/" + std::to_string(kb), same, 0});
  }
  assign_folds(inst.pairs, folds);
  return inst;
}

struct IdentifyInstance {
  EmbeddingStore probes;
  EmbeddingStore gallery;
  EmbeddingStore distractors;
};

inline IdentifyInstance random_identify_instance(std::uint64_t seed, int probe_count, int distractor_count,
                                                 int dim, double noise) {
  Rng rng(seed);
  IdentifyInstance inst;
  for (int i = 0; i < probe_count; ++i) {
    const auto v = random_unit_vector(rng, dim);
    const std::string id = "p" + std::to_string(i);
    EmbeddingRecord pr{id, id + "/probe", v, true};
    EmbeddingRecord gr{id, id + "/gallery", unit_noise(rng, v, noise), true};
    inst.probes.add(pr);
    inst.gallery.add(gr);
  }
  for (int d = 0; d < distractor_count; ++d) {
    const std::string id = "d" + std::to_string(d);
    inst.distractors.add({id, id, random_unit_vector(rng, dim), true});
  }
  return inst;
}

}  // namespace facelab::testing

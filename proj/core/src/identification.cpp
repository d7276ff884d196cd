#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "facelab/error.hpp"
#include "facelab/eval.hpp"

namespace facelab {

namespace {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Writes renormalised rows [begin, end) of the store into out from row `at`.
void load_rows(const EmbeddingStore& store, std::size_t begin, std::size_t end, MatD& out, std::size_t at = 0) {
  const auto d = static_cast<Eigen::Index>(store.dim());
  for (std::size_t i = begin; i < end; ++i) {
    const auto& v = store[i].vector;
    double norm2 = 0.0;
    for (float x : v) norm2 += static_cast<double>(x) * x;
    if (!(norm2 > 0.0) || !std::isfinite(norm2)) {
      throw ValueError("record '" + store[i].image_key + "' has a zero or non-finite vector");
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (Eigen::Index k = 0; k < d; ++k) {
      out(static_cast<Eigen::Index>(at + i - begin), k) = v[static_cast<std::size_t>(k)] * inv;
    }
  }
}

struct Candidate {
  double sim;
  std::size_t index;
};

// Strict ranking order: higher similarity first, then earlier record.
bool ranks_before(const Candidate& a, const Candidate& b) {
  return a.sim > b.sim || (a.sim == b.sim && a.index < b.index);
}

// Bounded selection of the k best candidates, kept as a heap whose top is
// the worst retained entry.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k); }
  void offer(const Candidate& c) {
    if (heap_.size() < k_) {
      heap_.push_back(c);
      std::push_heap(heap_.begin(), heap_.end(), ranks_before);
    } else if (ranks_before(c, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), ranks_before);
      heap_.back() = c;
      std::push_heap(heap_.begin(), heap_.end(), ranks_before);
    }
  }
  std::vector<Candidate> sorted() const {
    auto out = heap_;
    std::sort(out.begin(), out.end(), ranks_before);
    return out;
  }

 private:
  std::size_t k_;
  std::vector<Candidate> heap_;
};

CMCReport rank_k(const EmbeddingStore& probes, const EmbeddingStore& gallery,
                 const EmbeddingStore& distractors, const IdentifyOptions& opt,
                 const std::string& protocol) {
  if (probes.empty()) throw ValueError("identification: no probe records");
  if (gallery.empty()) throw ValueError("identification: empty gallery");
  if (opt.block_size == 0) throw ValueError("identification: block_size must be > 0");
  const int d = probes.dim();
  if (gallery.dim() != d || (!distractors.empty() && distractors.dim() != d)) {
    throw ShapeError("identification: dimension mismatch (probe " + std::to_string(d) +
                     ", gallery " + std::to_string(gallery.dim()) + ", distractors " +
                     std::to_string(distractors.dim()) + ")");
  }
  const std::size_t g = gallery.size();
  const std::size_t n = g + distractors.size();
  if (opt.kmax < 1 || static_cast<std::size_t>(opt.kmax) > n) {
    throw ValueError("kmax must be in [1, " + std::to_string(n) + "], got " + std::to_string(opt.kmax));
  }
  std::unordered_set<std::string> gallery_ids;
  for (const auto& r : gallery.records()) gallery_ids.insert(r.id);
  std::unordered_set<std::string> probe_ids;
  for (const auto& r : probes.records()) {
    if (!gallery_ids.count(r.id)) {
      throw LookupError("probe identity '" + r.id + "' (" + r.image_key + ") has no gallery record");
    }
    probe_ids.insert(r.id);
  }
  for (const auto& r : distractors.records()) {
    if (probe_ids.count(r.id)) {
      throw ValueError("distractor '" + r.image_key + "' shares probe identity '" + r.id + "'");
    }
  }

  const std::size_t k = static_cast<std::size_t>(opt.kmax);
  std::vector<std::size_t> hits(k, 0);
  MatD probe_block, cand_block, sims;
  for (std::size_t p0 = 0; p0 < probes.size(); p0 += opt.block_size) {
    const std::size_t p1 = std::min(probes.size(), p0 + opt.block_size);
    probe_block.resize(static_cast<Eigen::Index>(p1 - p0), d);
    load_rows(probes, p0, p1, probe_block);
    std::vector<TopK> top(p1 - p0, TopK(k));
    for (std::size_t c0 = 0; c0 < n; c0 += opt.block_size) {
      const std::size_t c1 = std::min(n, c0 + opt.block_size);
      // A block may straddle the gallery/distractor boundary.
      cand_block.resize(static_cast<Eigen::Index>(c1 - c0), d);
      std::size_t row = 0;
      for (auto [store, lo, hi] : {std::tuple{&gallery, c0, std::min(c1, g)},
                                   std::tuple{&distractors, std::max(c0, g) - g, c1 > g ? c1 - g : 0}}) {
        if (lo >= hi) continue;
        load_rows(*store, lo, hi, cand_block, row);
        row += hi - lo;
      }
      sims.noalias() = probe_block * cand_block.transpose();
      for (std::size_t i = 0; i < p1 - p0; ++i) {
        for (std::size_t j = 0; j < c1 - c0; ++j) {
          top[i].offer({sims(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), c0 + j});
        }
      }
    }
    for (std::size_t i = 0; i < p1 - p0; ++i) {
      const auto& id = probes[p0 + i].id;
      const auto ranked = top[i].sorted();
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        if (ranked[r].index < g && gallery[ranked[r].index].id == id) {
          ++hits[r];
          break;
        }
      }
    }
  }
  CMCReport report;
  report.protocol = protocol;
  report.probe_count = probes.size();
  report.gallery_count = g;
  report.distractor_count = distractors.size();
  std::size_t cumulative = 0;
  for (std::size_t r = 0; r < k; ++r) {
    cumulative += hits[r];
    report.rank_acc.push_back(static_cast<double>(cumulative) / static_cast<double>(probes.size()));
  }
  return report;
}

}  // namespace

CMCReport identify_rank_k(const EmbeddingStore& probes, const EmbeddingStore& gallery,
                          const EmbeddingStore& distractors, const IdentifyOptions& options) {
  return rank_k(probes, gallery, distractors, options, "identify");
}

CMCReport evaluate_masked(const EmbeddingStore& masked_probes, const EmbeddingStore& gallery,
                          const EmbeddingStore& distractors, const IdentifyOptions& options) {
  return rank_k(masked_probes, gallery, distractors, options, "identify-masked");
}

}  // namespace facelab

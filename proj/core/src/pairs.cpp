#include "facelab/pairs.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <map>
#include <sstream>

#include "facelab/embedding_store.hpp"
#include "facelab/error.hpp"
#include "facelab/random.hpp"

namespace facelab {

std::vector<std::size_t> PairList::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(fold_count), 0);
  for (const auto& e : entries) {
    if (e.fold < 0 || e.fold >= fold_count) throw ValueError("pair fold index out of range");
    ++sizes[static_cast<std::size_t>(e.fold)];
  }
  return sizes;
}

void assign_folds(PairList& pairs, int fold_count) {
  if (fold_count < 2) throw ValueError("fold count must be >= 2, got " + std::to_string(fold_count));
  pairs.fold_count = fold_count;
  const std::size_t n = pairs.entries.size();
  const std::size_t k = static_cast<std::size_t>(fold_count);
  const std::size_t base = n / k, extra = n % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < len; ++i) pairs.entries[pos++].fold = static_cast<int>(f);
  }
}

PairList parse_pairs(const std::filesystem::path& path, int fold_count, const EmbeddingStore* known) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pairs file " + path.string());
  PairList pairs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 3 || cols[0].empty() || cols[1].empty()) {
      throw FormatError(at_line(path.string(), line_no) +
                        "expected key_a<TAB>key_b<TAB>{0|1}, found " + std::to_string(cols.size()) +
                        " column(s)");
    }
    if (cols[2] != "0" && cols[2] != "1") {
      throw FormatError(at_line(path.string(), line_no) + "label must be 0 or 1, found '" + cols[2] + "'");
    }
    if (known) {
      for (int c = 0; c < 2; ++c) {
        if (!known->contains(cols[static_cast<std::size_t>(c)])) {
          throw LookupError(at_line(path.string(), line_no) + "unknown key '" +
                            cols[static_cast<std::size_t>(c)] + "'");
        }
      }
    }
    pairs.entries.push_back({cols[0], cols[1], cols[2] == "1", 0});
  }
  if (pairs.entries.empty()) throw FormatError(path.string() + ": no pairs");
  assign_folds(pairs, fold_count);
  if (pairs.entries.size() % static_cast<std::size_t>(fold_count) != 0) {
    spdlog::warn("{}: {} pairs do not divide into {} equal folds; fold sizes differ by one",
                 path.string(), pairs.entries.size(), fold_count);
  }
  return pairs;
}

void write_pairs(const std::filesystem::path& path, const PairList& pairs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write pairs file " + path.string());
  for (const auto& e : pairs.entries) {
    out << e.key_a << '\t' << e.key_b << '\t' << (e.same_identity ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

PairList generate_pairs(const DatasetManifest& manifest, int pair_count, std::uint64_t seed,
                        int fold_count) {
  if (pair_count < fold_count) throw ValueError("need at least one pair per fold");
  std::map<std::string, std::vector<std::string>> by_id;
  for (const auto& s : manifest.samples) by_id[s.identity].push_back(s.image_path);
  std::vector<const std::vector<std::string>*> multi, all;
  for (const auto& [id, keys] : by_id) {
    all.push_back(&keys);
    if (keys.size() >= 2) multi.push_back(&keys);
  }
  if (multi.empty() || all.size() < 2) {
    throw ValueError("generate_pairs: need an identity with two images and at least two identities");
  }
  Rng rng(derive_seed(seed, "pairs"));
  PairList pairs;
  for (int i = 0; i < pair_count; ++i) {
    if (i % 2 == 0) {
      const auto& keys = *multi[rng.uniform_int(multi.size())];
      const auto a = rng.uniform_int(keys.size());
      auto b = rng.uniform_int(keys.size() - 1);
      if (b >= a) ++b;
      pairs.entries.push_back({keys[a], keys[b], true, 0});
    } else {
      const auto ia = rng.uniform_int(all.size());
      auto ib = rng.uniform_int(all.size() - 1);
      if (ib >= ia) ++ib;
      const auto& ka = *all[ia];
      const auto& kb = *all[ib];
      pairs.entries.push_back({ka[rng.uniform_int(ka.size())], kb[rng.uniform_int(kb.size())], false, 0});
    }
  }
  assign_folds(pairs, fold_count);
  return pairs;
}

}  // namespace facelab

#include "facelab/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "facelab/error.hpp"

namespace facelab {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) throw FormatError(where + "bad number '" + s + "'");
  return v;
}

Landmarks5 parse_landmarks(const std::string& field, const std::string& where) {
  const auto points = split(field, ';');
  if (points.size() != 5) {
    throw FormatError(where + "landmarks need exactly 5 points, got " +
                      std::to_string(points.size()));
  }
  Landmarks5 lm;
  for (std::size_t i = 0; i < 5; ++i) {
    const auto xy = split(points[i], ',');
    if (xy.size() != 2) throw FormatError(where + "landmark '" + points[i] + "' is not x,y");
    lm[i] = {parse_double(xy[0], where), parse_double(xy[1], where)};
  }
  return lm;
}

std::string format_landmarks(const Landmarks5& lm) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < 5; ++i) {
    if (i) os << ';';
    os << lm[i].x << ',' << lm[i].y;
  }
  return os.str();
}

}  // namespace

std::vector<std::string> DatasetManifest::identities() const {
  std::set<std::string> ids;
  for (const auto& s : samples) ids.insert(s.identity);
  return {ids.begin(), ids.end()};
}

std::vector<int> DatasetManifest::labels() const {
  const auto ids = identities();
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = static_cast<int>(i);
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(index.at(s.identity));
  return out;
}

std::filesystem::path DatasetManifest::resolve(const SampleRecord& s) const {
  std::filesystem::path p(s.image_path);
  return p.is_absolute() ? p : root / p;
}

DatasetManifest make_manifest(std::filesystem::path root, std::vector<SampleRecord> samples) {
  DatasetManifest m;
  m.root = std::move(root);
  m.samples = std::move(samples);
  m.num_identities = static_cast<int>(m.identities().size());
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path, const ManifestOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const std::filesystem::path root = path.parent_path();
  std::vector<SampleRecord> samples;
  std::unordered_set<std::string> keys;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = at_line(path.string(), lineno);
    const auto cols = split(line, '\t');
    if (cols.size() < 2 || cols[1].empty()) {
      throw FormatError(where + "missing identity column");
    }
    if (cols[0].empty()) throw FormatError(where + "missing image path");
    if (cols.size() > 4) throw FormatError(where + "too many columns");
    SampleRecord s;
    s.image_path = cols[0];
    s.identity = cols[1];
    for (std::size_t c = 2; c < cols.size(); ++c) {
      if (cols[c] == "masked") {
        if (c + 1 != cols.size()) throw FormatError(where + "'masked' must be the last column");
        s.masked = true;
      } else if (c == 2 && (cols[c] == "-" || cols[c].empty())) {
        // explicit "no landmarks"
      } else if (c == 2) {
        s.landmarks = parse_landmarks(cols[c], where);
      } else {
        throw FormatError(where + "unexpected column '" + cols[c] + "'");
      }
    }
    if (!keys.insert(s.image_path).second) {
      throw FormatError(where + "duplicate image key '" + s.image_path + "'");
    }
    if (options.check_paths) {
      std::filesystem::path p(s.image_path);
      if (!p.is_absolute()) p = root / p;
      if (!std::filesystem::exists(p)) {
        throw IoError(where + "image does not exist: " + p.string());
      }
    }
    samples.push_back(std::move(s));
  }
  return make_manifest(root, std::move(samples));
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  for (const auto& s : manifest.samples) {
    out << s.image_path << '\t' << s.identity;
    if (s.landmarks) out << '\t' << format_landmarks(*s.landmarks);
    if (s.masked) out << "\tmasked";
    out << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

double images_per_identity(const DatasetManifest& manifest) {
  if (manifest.num_identities == 0) return 0.0;
  return static_cast<double>(manifest.samples.size()) / manifest.num_identities;
}

}  // namespace facelab

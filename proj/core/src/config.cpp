#include "facelab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "facelab/error.hpp"

namespace facelab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void type_error(const std::string& key, const std::string& type, const std::string& value) {
  throw ConfigError(key + ": expected " + type + ", got '" + value + "'");
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) type_error(key, "an integer", v);
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) type_error(key, "a real number", v);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  type_error(key, "a boolean (true/false)", v);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename Int>
std::string fmt_int(Int v) {
  return std::to_string(v);
}

struct KeyDef {
  ConfigKeyInfo info;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  bool echo = true;
};

int as_int(const std::string& k, const std::string& v) {
  const long long x = parse_int(k, v);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) type_error(k, "a 32-bit integer", v);
  return static_cast<int>(x);
}

std::array<double, 3> as_real3(const std::string& k, const std::string& v) {
  const auto items = split_list(v);
  if (items.size() != 3) type_error(k, "three comma-separated reals", v);
  return {parse_real(k, items[0]), parse_real(k, items[1]), parse_real(k, items[2])};
}

std::string fmt3(const std::array<double, 3>& a) { return fmt(a[0]) + ", " + fmt(a[1]) + ", " + fmt(a[2]); }

#define FACELAB_INT(KEY, FIELD, HELP)                                                    \
  KeyDef{{KEY, "int", HELP}, [](RunConfig& c, const std::string& v) { c.FIELD = as_int(KEY, v); }, \
         [](const RunConfig& c) { return fmt_int(c.FIELD); }}
#define FACELAB_REAL(KEY, FIELD, HELP)                                                          \
  KeyDef{{KEY, "real", HELP}, [](RunConfig& c, const std::string& v) { c.FIELD = parse_real(KEY, v); }, \
         [](const RunConfig& c) { return fmt(c.FIELD); }}
#define FACELAB_BOOL(KEY, FIELD, HELP)                                                          \
  KeyDef{{KEY, "bool", HELP}, [](RunConfig& c, const std::string& v) { c.FIELD = parse_bool(KEY, v); }, \
         [](const RunConfig& c) { return fmt(c.FIELD); }}
#define FACELAB_REAL3(KEY, FIELD, HELP)                                                          \
  KeyDef{{KEY, "real3", HELP}, [](RunConfig& c, const std::string& v) { c.FIELD = as_real3(KEY, v); }, \
         [](const RunConfig& c) { return fmt3(c.FIELD); }}

// Order matters: preset-like keys come first in each section.
const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      {{"run.seed", "int", "root seed for every random stream"},
       [](RunConfig& c, const std::string& v) {
         const long long x = parse_int("run.seed", v);
         if (x < 0) type_error("run.seed", "a non-negative integer", v);
         c.seed = static_cast<std::uint64_t>(x);
       },
       [](const RunConfig& c) { return fmt_int(c.seed); }},
      {{"run.mode", "string", "conventional | semi_siamese"},
       [](RunConfig& c, const std::string& v) { c.mode = parse_train_mode(v); },
       [](const RunConfig& c) { return to_string(c.mode); }},
      {{"backbone.name", "string", "registered backbone (mobileface_mini, resnet_ir)"},
       [](RunConfig& c, const std::string& v) { c.backbone.name = v; },
       [](const RunConfig& c) { return c.backbone.name; }},
      FACELAB_INT("backbone.embedding_dim", backbone.embedding_dim, "embedding dimension D"),
      FACELAB_REAL("backbone.width", backbone.width, "channel width multiplier"),
      FACELAB_INT("backbone.depth", backbone.depth, "blocks per stage (mobileface_mini) or layers (resnet_ir); -1 = default"),
      FACELAB_INT("backbone.input_height", backbone.input_height, "input height, multiple of 16"),
      FACELAB_INT("backbone.input_width", backbone.input_width, "input width, multiple of 16"),
      {{"head.variant", "string", "supervisory head; resets the other head keys to its defaults"},
       [](RunConfig& c, const std::string& v) {
         c.head = default_head_spec(parse_head_variant(v), c.head.num_classes, c.head.dim);
       },
       [](const RunConfig& c) { return to_string(c.head.variant); }},
      FACELAB_REAL("head.scale", head.scale, "logit scale s"),
      FACELAB_REAL("head.margin", head.margin, "margin m (m0 for npcface)"),
      FACELAB_REAL("head.margin2", head.margin2, "npcface margin slope m1"),
      FACELAB_REAL("head.mv_weight", head.mv_weight, "hard-negative weight t (mv_softmax, npcface)"),
      FACELAB_REAL("head.lambda", head.lambda, "adam_softmax margin regulariser weight"),
      FACELAB_REAL("head.alpha", head.alpha, "curricular_face EMA momentum"),
      {{"schedule.preset", "string", "msceleb18 | sst250; resets the schedule keys"},
       [](RunConfig& c, const std::string& v) { c.schedule = schedule_preset(v); },
       [](const RunConfig&) { return std::string(); },
       false},
      FACELAB_INT("schedule.total_epochs", schedule.total_epochs, "number of epochs"),
      FACELAB_REAL("schedule.lr", schedule.base_lr, "base learning rate"),
      {{"schedule.milestones", "int-list", "0-indexed epochs where the rate decays"},
       [](RunConfig& c, const std::string& v) {
         c.schedule.milestones.clear();
         for (const auto& item : split_list(v)) c.schedule.milestones.push_back(as_int("schedule.milestones", item));
       },
       [](const RunConfig& c) {
         std::string out;
         for (std::size_t i = 0; i < c.schedule.milestones.size(); ++i) {
           out += (i ? ", " : "") + std::to_string(c.schedule.milestones[i]);
         }
         return out;
       }},
      FACELAB_REAL("schedule.decay", schedule.decay, "rate multiplier at each milestone"),
      FACELAB_INT("schedule.batch_size", schedule.batch_size, "global batch size"),
      FACELAB_REAL("optim.momentum", optim.momentum, "SGD momentum"),
      FACELAB_REAL("optim.weight_decay", optim.weight_decay, "L2 weight decay"),
      FACELAB_INT("transform.resize_width", transform.resize_width, "0 keeps the input size"),
      FACELAB_INT("transform.resize_height", transform.resize_height, "0 keeps the input size"),
      FACELAB_REAL3("transform.mean", transform.mean, "per-channel mean"),
      FACELAB_REAL3("transform.scale", transform.scale, "per-channel divisor"),
      FACELAB_BOOL("transform.crop_enabled", transform.crop_enabled, "random crop"),
      FACELAB_INT("transform.crop_width", transform.crop_width, "crop width"),
      FACELAB_INT("transform.crop_height", transform.crop_height, "crop height"),
      FACELAB_REAL("transform.flip_probability", transform.flip_probability, "horizontal flip probability"),
      FACELAB_REAL("transform.rotation_degrees", transform.rotation_degrees, "random rotation range (+/-)"),
      FACELAB_REAL("sst.gallery_momentum", sst.gallery_momentum, "gallery network EMA momentum"),
      FACELAB_INT("sst.queue_capacity", sst.queue_capacity, "prototype queue length"),
      FACELAB_REAL("sst.scale", sst.scale, "prototype logit scale"),
      FACELAB_REAL("sst.margin", sst.margin, "additive margin on the positive"),
  };
  return table;
}

#undef FACELAB_INT
#undef FACELAB_REAL
#undef FACELAB_BOOL
#undef FACELAB_REAL3

const KeyDef* find_key(const std::string& key) {
  for (const auto& k : key_table()) {
    if (k.info.key == key) return &k;
  }
  return nullptr;
}

[[noreturn]] void unknown_key(const std::string& where, const std::string& key) {
  throw ConfigError(where + "unknown key '" + key + "' (did you mean '" + nearest_config_key(key) + "'?)");
}

struct Assignment {
  std::string value;
  std::string origin;
};

void parse_text(const std::string& text, const std::string& origin, std::map<std::string, Assignment>& out) {
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = at_line(origin, line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    if (section.empty()) throw ConfigError(where + "key outside of a [section]");
    const std::string key = section + "." + trim(line.substr(0, eq));
    if (!find_key(key)) unknown_key(where, key);
    out[key] = {trim(line.substr(eq + 1)), where};
  }
}

void apply_overrides(const std::vector<std::string>& overrides, std::map<std::string, Assignment>& out) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' must look like section.key=value");
    const std::string key = trim(o.substr(0, eq));
    if (!find_key(key)) unknown_key("override: ", key);
    out[key] = {trim(o.substr(eq + 1)), "override --set " + key + ": "};
  }
}

RunConfig build(const std::map<std::string, Assignment>& assigned) {
  RunConfig c;
  auto apply = [&](const KeyDef& k) {
    const auto it = assigned.find(k.info.key);
    if (it == assigned.end()) return;
    try {
      k.set(c, it->second.value);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(it->second.origin + k.info.key + ": " + e.what());
    }
  };
  // Resetting keys first, then everything else.
  for (const char* first : {"schedule.preset", "head.variant"}) apply(*find_key(first));
  for (const auto& k : key_table()) {
    if (k.info.key != "schedule.preset" && k.info.key != "head.variant") apply(k);
  }
  c.head.dim = c.backbone.embedding_dim;
  return c;
}

}  // namespace

const std::vector<ConfigKeyInfo>& config_keys() {
  static const std::vector<ConfigKeyInfo> keys = [] {
    std::vector<ConfigKeyInfo> out;
    for (const auto& k : key_table()) out.push_back(k.info);
    return out;
  }();
  return keys;
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string nearest_config_key(const std::string& key) {
  std::string best;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (const auto& k : key_table()) {
    const std::size_t d = levenshtein(key, k.info.key);
    if (d < best_d) {
      best_d = d;
      best = k.info.key;
    }
  }
  return best;
}

RunConfig resolve_config_text(const std::string& text, const std::vector<std::string>& overrides,
                              const std::string& origin) {
  std::map<std::string, Assignment> assigned;
  parse_text(text, origin, assigned);
  apply_overrides(overrides, assigned);
  RunConfig c = build(assigned);
  validate_run_config(c);
  return c;
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::vector<std::string>& overrides) {
  std::string text;
  std::string origin = "<defaults>";
  if (file) {
    const auto path = find_config_file(*file);
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
    origin = path.string();
  }
  return resolve_config_text(text, overrides, origin);
}

std::string config_to_text(const RunConfig& c) {
  std::ostringstream out;
  out << "# resolved facelab run configuration\n";
  std::string section;
  for (const auto& k : key_table()) {
    if (!k.echo) continue;
    const auto dot = k.info.key.find('.');
    const std::string s = k.info.key.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << "[" << s << "]\n";
      section = s;
    }
    out << k.info.key.substr(dot + 1) << " = " << k.get(c) << "\n";
  }
  return out.str();
}

void write_config_echo(const std::filesystem::path& path, const RunConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write config echo " + path.string());
  out << config_to_text(config);
}

std::filesystem::path find_config_file(const std::filesystem::path& name) {
  if (std::filesystem::exists(name)) return name;
  if (name.is_relative()) {
    if (const char* env = std::getenv(kConfigPathEnv)) {
      std::stringstream ss(env);
      std::string dir;
      while (std::getline(ss, dir, ':')) {
        if (dir.empty()) continue;
        const auto candidate = std::filesystem::path(dir) / name;
        if (std::filesystem::exists(candidate)) return candidate;
      }
    }
  }
  throw IoError("config file not found: " + name.string() + " (also searched $" + kConfigPathEnv + ")");
}

}  // namespace facelab

#include "magr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "magr/error.hpp"

namespace magr {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return std::string(line.substr(0, i));
  }
  return std::string(line);
}

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
  }
  return true;
}

}  // namespace

ConfigTable ConfigTable::parse(std::string_view text) {
  ConfigTable table;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorKind::Config, where + "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!valid_key(section)) throw Error(ErrorKind::Config, where + "bad section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Config, where + "expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!valid_key(key)) throw Error(ErrorKind::Config, where + "bad key '" + key + "'");
    if (value.empty()) throw Error(ErrorKind::Config, where + "missing value for " + key);
    const std::string full = section.empty() ? key : section + "." + key;
    if (!table.values_.emplace(full, value).second) {
      throw Error(ErrorKind::Config, where + "duplicate key " + full);
    }
  }
  return table;
}

void ConfigTable::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw Error(ErrorKind::Config, "override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  if (!valid_key(key) || key.find('.') == std::string::npos) {
    throw Error(ErrorKind::Config, "override key '" + key + "' must be section.key");
  }
  if (value.empty()) throw Error(ErrorKind::Config, "override " + key + " has no value");
  values_[key] = value;
}

namespace {

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eE") == std::string::npos && s.find("inf") == std::string::npos &&
      s.find("nan") == std::string::npos) {
    s += ".0";
  }
  return s;
}

double to_double(const std::string& raw) {
  double x = 0.0;
  const auto res = std::from_chars(raw.data(), raw.data() + raw.size(), x);
  if (res.ec != std::errc() || res.ptr != raw.data() + raw.size()) {
    throw Error(ErrorKind::Config, "expected a number, got '" + raw + "'");
  }
  return x;
}

std::uint64_t to_uint(const std::string& raw) {
  std::uint64_t x = 0;
  const auto res = std::from_chars(raw.data(), raw.data() + raw.size(), x);
  if (res.ec != std::errc() || res.ptr != raw.data() + raw.size()) {
    throw Error(ErrorKind::Config, "expected a non-negative integer, got '" + raw + "'");
  }
  return x;
}

bool to_bool(const std::string& raw) {
  if (raw == "true") return true;
  if (raw == "false") return false;
  throw Error(ErrorKind::Config, "expected true or false, got '" + raw + "'");
}

std::string to_str(const std::string& raw) {
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
      if (raw[i] == '\\' && i + 2 < raw.size()) ++i;
      out += raw[i];
    }
    return out;
  }
  if (raw.find_first_of(" \t\"[]") != std::string::npos) {
    throw Error(ErrorKind::Config, "expected a string, got '" + raw + "'");
  }
  return raw;
}

std::vector<std::string> to_items(const std::string& raw) {
  if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') {
    throw Error(ErrorKind::Config, "expected an array, got '" + raw + "'");
  }
  std::vector<std::string> items;
  const std::string body = raw.substr(1, raw.size() - 2);
  std::size_t start = 0;
  while (start <= body.size()) {
    const auto comma = body.find(',', start);
    const std::string item =
        trim(std::string_view(body).substr(start, comma == std::string::npos ? std::string::npos
                                                                             : comma - start));
    if (!item.empty()) items.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return items;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F fmt) {
  std::string out = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += fmt(xs[i]);
  }
  return out + "]";
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> read;
  std::function<std::string(const RunConfig&)> write;
};

// Binders for the common value kinds. Getters are generic lambdas, so one
// accessor serves both the reader and the writer.
template <typename Get>
Field dbl(std::string key, Get get) {
  return {std::move(key), [get](RunConfig& c, const std::string& r) { get(c) = to_double(r); },
          [get](const RunConfig& c) { return format_double(get(c)); }};
}

template <typename Get>
Field uint(std::string key, Get get) {
  return {std::move(key),
          [get](RunConfig& c, const std::string& r) {
            get(c) = static_cast<std::remove_reference_t<decltype(get(c))>>(to_uint(r));
          },
          [get](const RunConfig& c) { return std::to_string(get(c)); }};
}

template <typename Get>
Field boolean(std::string key, Get get) {
  return {std::move(key), [get](RunConfig& c, const std::string& r) { get(c) = to_bool(r); },
          [get](const RunConfig& c) {
            return std::string(get(c) ? "true" : "false");
          }};
}

template <typename Get>
Field str(std::string key, Get get) {
  return {std::move(key), [get](RunConfig& c, const std::string& r) { get(c) = to_str(r); },
          [get](const RunConfig& c) { return quote(get(c)); }};
}

template <typename Get>
Field path(std::string key, Get get) {
  return {std::move(key),
          [get](RunConfig& c, const std::string& r) { get(c) = std::filesystem::path(to_str(r)); },
          [get](const RunConfig& c) { return quote(get(c).string()); }};
}

CandidateMode parse_mode(const std::string& s) {
  if (s == "hybrid") return CandidateMode::Hybrid;
  if (s == "structure_only") return CandidateMode::StructureOnly;
  throw Error(ErrorKind::Config, "mode must be hybrid or structure_only, got '" + s + "'");
}

CheckpointMetric parse_metric(const std::string& s) {
  if (s == "R@10" || s == "recall@10") return CheckpointMetric::RecallAt10;
  if (s == "weighted-recall") return CheckpointMetric::WeightedRecall;
  throw Error(ErrorKind::Config, "unknown checkpoint metric '" + s + "'");
}

std::optional<RewireMode> parse_rewire(const std::string& s) {
  if (s == "none") return std::nullopt;
  if (s == "uniform") return RewireMode::UniformRandom;
  if (s == "degree") return RewireMode::DegreePreserving;
  throw Error(ErrorKind::Config, "randomize_edges must be none, uniform or degree");
}

std::string rewire_name(const std::optional<RewireMode>& m) {
  if (!m) return "none";
  return *m == RewireMode::UniformRandom ? "uniform" : "degree";
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(str("data.source", [](auto& c) -> auto& { return c.data.kind; }));
    f.push_back(path("data.features_v",
                     [](auto& c) -> auto& { return c.data.paths.features_v; }));
    f.push_back(path("data.features_t",
                     [](auto& c) -> auto& { return c.data.paths.features_t; }));
    f.push_back(path("data.edges",
                     [](auto& c) -> auto& { return c.data.paths.edges; }));
    f.push_back({"data.categories",
                 [](RunConfig& c, const std::string& r) {
                   const auto s = to_str(r);
                   if (s.empty()) {
                     c.data.paths.categories.reset();
                   } else {
                     c.data.paths.categories = s;
                   }
                 },
                 [](const RunConfig& c) {
                   return quote(c.data.paths.categories ? c.data.paths.categories->string() : "");
                 }});

    f.push_back(uint("synthetic.num_nodes",
                     [](auto& c) -> auto& { return c.data.synthetic.num_nodes; }));
    f.push_back(uint("synthetic.num_classes",
                     [](auto& c) -> auto& { return c.data.synthetic.num_classes; }));
    f.push_back(uint("synthetic.dim", [](auto& c) -> auto& { return c.data.synthetic.dim; }));
    f.push_back(dbl("synthetic.p_in", [](auto& c) -> auto& { return c.data.synthetic.p_in; }));
    f.push_back(dbl("synthetic.p_out", [](auto& c) -> auto& { return c.data.synthetic.p_out; }));
    f.push_back(dbl("synthetic.sigma_v", [](auto& c) -> auto& { return c.data.synthetic.sigma_v; }));
    f.push_back(dbl("synthetic.sigma_t", [](auto& c) -> auto& { return c.data.synthetic.sigma_t; }));
    f.push_back(dbl("synthetic.theta", [](auto& c) -> auto& { return c.data.synthetic.theta; }));
    f.push_back(uint("synthetic.seed", [](auto& c) -> auto& { return c.data.synthetic.seed; }));

    f.push_back(dbl("split.train", [](auto& c) -> auto& { return c.split.train; }));
    f.push_back(dbl("split.val", [](auto& c) -> auto& { return c.split.val; }));
    f.push_back(dbl("split.test", [](auto& c) -> auto& { return c.split.test; }));
    f.push_back(uint("split.seed", [](auto& c) -> auto& { return c.split.seed; }));

    f.push_back({"candidates.mode",
                 [](RunConfig& c, const std::string& r) { c.candidates.mode = parse_mode(to_str(r)); },
                 [](const RunConfig& c) { return quote(to_string(c.candidates.mode)); }});
    f.push_back(uint("candidates.k_intra", [](auto& c) -> auto& { return c.candidates.k_intra; }));
    f.push_back(uint("candidates.k_cross", [](auto& c) -> auto& { return c.candidates.k_cross; }));
    f.push_back(str("candidates.knn_features", [](auto& c) -> auto& { return c.knn_features; }));

    f.push_back(uint("model.dim", [](auto& c) -> auto& { return c.model.dim; }));
    f.push_back(uint("model.scorer_hidden", [](auto& c) -> auto& { return c.model.scorer_hidden; }));
    f.push_back(uint("smoothing.depth", [](auto& c) -> auto& { return c.model.smoothing.depth; }));
    f.push_back(dbl("smoothing.beta", [](auto& c) -> auto& { return c.model.smoothing.beta; }));
    f.push_back(dbl("smoothing.alpha", [](auto& c) -> auto& { return c.model.smoothing.alpha; }));
    f.push_back(boolean("smoothing.normalize",
                        [](auto& c) -> auto& { return c.model.smoothing.normalize_each_step; }));
    f.push_back(dbl("readout.rho", [](auto& c) -> auto& { return c.model.readout.rho; }));
    f.push_back(uint("readout.width", [](auto& c) -> auto& { return c.model.readout.width; }));

    f.push_back(dbl("loss.cde", [](auto& c) -> auto& { return c.loss.cde; }));
    f.push_back(dbl("loss.topo", [](auto& c) -> auto& { return c.loss.topo; }));
    f.push_back(dbl("loss.direct", [](auto& c) -> auto& { return c.loss.direct; }));
    f.push_back(dbl("loss.gamma", [](auto& c) -> auto& { return c.loss.gamma; }));
    f.push_back(dbl("loss.temperature", [](auto& c) -> auto& { return c.loss.temperature; }));
    f.push_back(uint("loss.negatives", [](auto& c) -> auto& { return c.loss.negatives; }));
    f.push_back(uint("loss.topo_positives", [](auto& c) -> auto& { return c.loss.topo_positives; }));

    f.push_back(dbl("train.lr", [](auto& c) -> auto& { return c.train.lr; }));
    f.push_back(dbl("train.beta1", [](auto& c) -> auto& { return c.train.beta1; }));
    f.push_back(dbl("train.beta2", [](auto& c) -> auto& { return c.train.beta2; }));
    f.push_back(dbl("train.eps", [](auto& c) -> auto& { return c.train.eps; }));
    f.push_back(uint("train.batch_size", [](auto& c) -> auto& { return c.train.batch_size; }));
    f.push_back(uint("train.epochs", [](auto& c) -> auto& { return c.train.epochs; }));
    f.push_back(uint("train.warmup_epochs", [](auto& c) -> auto& { return c.train.warmup_epochs; }));
    f.push_back(uint("train.patience", [](auto& c) -> auto& { return c.train.patience; }));
    f.push_back({"train.metric",
                 [](RunConfig& c, const std::string& r) { c.train.metric = parse_metric(to_str(r)); },
                 [](const RunConfig& c) { return quote(to_string(c.train.metric)); }});
    f.push_back(uint("train.seed", [](auto& c) -> auto& { return c.train.seed; }));

    f.push_back(boolean("ablation.no_cross_modal", [](auto& c) -> auto& { return c.ablation.no_cross_modal; }));
    f.push_back(boolean("ablation.no_restart", [](auto& c) -> auto& { return c.ablation.no_restart; }));
    f.push_back(boolean("ablation.uniform_readout", [](auto& c) -> auto& { return c.ablation.uniform_readout; }));
    f.push_back(boolean("ablation.uniform_operators",
                        [](auto& c) -> auto& { return c.ablation.uniform_operators; }));

    f.push_back({"control.randomize_edges",
                 [](RunConfig& c, const std::string& r) { c.control.randomize_edges = parse_rewire(to_str(r)); },
                 [](const RunConfig& c) { return quote(rewire_name(c.control.randomize_edges)); }});
    f.push_back(boolean("control.allow_self_pairs", [](auto& c) -> auto& { return c.control.allow_self_pairs; }));
    f.push_back(boolean("control.only_self_pairs", [](auto& c) -> auto& { return c.control.only_self_pairs; }));
    f.push_back(boolean("control.adapter_only", [](auto& c) -> auto& { return c.control.adapter_only; }));

    f.push_back(boolean("eval.full_gallery", [](auto& c) -> auto& { return c.full_gallery; }));
    f.push_back(boolean("eval.export_depths", [](auto& c) -> auto& { return c.export_depths; }));

    f.push_back(uint("diagnose.k", [](auto& c) -> auto& { return c.diagnose.k; }));
    f.push_back({"diagnose.depths",
                 [](RunConfig& c, const std::string& r) {
                   c.diagnose.depths.clear();
                   for (const auto& it : to_items(r)) c.diagnose.depths.push_back(to_uint(it));
                 },
                 [](const RunConfig& c) {
                   return join(c.diagnose.depths, [](std::size_t x) { return std::to_string(x); });
                 }});
    f.push_back(dbl("diagnose.low_quantile", [](auto& c) -> auto& { return c.diagnose.low_quantile; }));
    f.push_back(dbl("diagnose.high_quantile", [](auto& c) -> auto& { return c.diagnose.high_quantile; }));
    f.push_back(uint("diagnose.max_pairs", [](auto& c) -> auto& { return c.diagnose.max_pairs; }));

    f.push_back(uint("oracles.nodes", [](auto& c) -> auto& { return c.oracles.nodes; }));
    f.push_back(uint("oracles.trials", [](auto& c) -> auto& { return c.oracles.trials; }));
    f.push_back({"oracles.alphas",
                 [](RunConfig& c, const std::string& r) {
                   c.oracles.alphas.clear();
                   for (const auto& it : to_items(r)) c.oracles.alphas.push_back(to_double(it));
                 },
                 [](const RunConfig& c) { return join(c.oracles.alphas, format_double); }});
    f.push_back({"oracles.betas",
                 [](RunConfig& c, const std::string& r) {
                   c.oracles.betas.clear();
                   for (const auto& it : to_items(r)) c.oracles.betas.push_back(to_double(it));
                 },
                 [](const RunConfig& c) { return join(c.oracles.betas, format_double); }});
    f.push_back(uint("oracles.gap_steps", [](auto& c) -> auto& { return c.oracles.gap_steps; }));
    f.push_back(uint("oracles.collapse_steps",
                     [](auto& c) -> auto& { return c.oracles.collapse_steps; }));
    f.push_back(uint("oracles.seed", [](auto& c) -> auto& { return c.oracles.seed; }));

    f.push_back(str("sweep.param", [](auto& c) -> auto& { return c.sweep.param; }));
    f.push_back({"sweep.values",
                 [](RunConfig& c, const std::string& r) {
                   c.sweep.values.clear();
                   for (const auto& it : to_items(r)) c.sweep.values.push_back(to_double(it));
                 },
                 [](const RunConfig& c) { return join(c.sweep.values, format_double); }});
    f.push_back({"multiseed.seeds",
                 [](RunConfig& c, const std::string& r) {
                   c.seeds.clear();
                   for (const auto& it : to_items(r)) c.seeds.push_back(to_uint(it));
                 },
                 [](const RunConfig& c) {
                   return join(c.seeds, [](std::uint64_t x) { return std::to_string(x); });
                 }});
    return f;
  }();
  return table;
}

}  // namespace

RunConfig run_config_from(const ConfigTable& table) {
  RunConfig cfg;
  std::vector<std::string> problems;
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;
  for (const auto& [key, raw] : table.entries()) {
    const auto it = by_key.find(key);
    if (it == by_key.end()) {
      problems.push_back(key + ": unknown key");
      continue;
    }
    try {
      it->second->read(cfg, raw);
    } catch (const Error& e) {
      problems.push_back(key + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw Error(ErrorKind::Config, msg);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& path,
                          const std::vector<std::string>& overrides) {
  ConfigTable table;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw Error(ErrorKind::Config, "cannot read config " + path->string());
    std::stringstream ss;
    ss << in.rdbuf();
    table = ConfigTable::parse(ss.str());
  }
  for (const auto& o : overrides) table.set(o);
  return run_config_from(table);
}

std::string to_config_text(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string sec = f.key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += '\n';
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += f.key.substr(dot + 1) + " = " + f.write(cfg) + "\n";
  }
  return out;
}

void RunConfig::validate() const {
  std::vector<std::string> problems;
  auto check = [&](const char* field, const auto& fn) {
    try {
      fn();
    } catch (const Error& e) {
      problems.push_back(std::string(field) + ": " + e.what());
    }
  };
  if (data.kind == "synthetic") {
    check("synthetic", [&] { data.synthetic.validate(); });
  } else if (data.kind == "files") {
    if (data.paths.features_v.empty()) problems.push_back("data.features_v: required for files");
    if (data.paths.features_t.empty()) problems.push_back("data.features_t: required for files");
    if (data.paths.edges.empty()) problems.push_back("data.edges: required for files");
  } else {
    problems.push_back("data.source: must be synthetic or files");
  }
  check("split", [&] { split.validate(); });
  if (knn_features != "frozen" && knn_features != "adapted") {
    problems.push_back("candidates.knn_features: must be frozen or adapted");
  }
  check("model", [&] { model.validate(); });
  check("loss", [&] { loss.validate(); });
  check("train", [&] { train.validate(); });
  if (control.allow_self_pairs && control.only_self_pairs) {
    problems.push_back("control.only_self_pairs: conflicts with control.allow_self_pairs");
  }
  if (control.adapter_only) {
    const bool any_ablation = ablation.no_cross_modal || ablation.no_restart ||
                              ablation.uniform_readout || ablation.uniform_operators;
    if (any_ablation) problems.push_back("control.adapter_only: conflicts with ablation switches");
    if (control.allow_self_pairs || control.only_self_pairs) {
      problems.push_back("control.adapter_only: conflicts with self-pair controls");
    }
  }
  if (diagnose.k == 0) problems.push_back("diagnose.k: must be >= 1");
  for (std::size_t i = 1; i < diagnose.depths.size(); ++i) {
    if (diagnose.depths[i] <= diagnose.depths[i - 1]) {
      problems.push_back("diagnose.depths: must increase strictly");
      break;
    }
  }
  if (!(diagnose.low_quantile >= 0.0 && diagnose.high_quantile <= 1.0 &&
        diagnose.low_quantile <= diagnose.high_quantile)) {
    problems.push_back("diagnose.low_quantile/high_quantile: need 0 <= low <= high <= 1");
  }
  if (oracles.nodes < 2) problems.push_back("oracles.nodes: must be >= 2");
  if (oracles.nodes > kMaxDenseNodes) problems.push_back("oracles.nodes: above the dense-solve limit");
  for (double a : oracles.alphas) {
    if (!(a > 0.0 && a <= 1.0)) problems.push_back("oracles.alphas: each must lie in (0,1]");
  }
  for (double b : oracles.betas) {
    if (!(b >= 0.0 && b < 1.0)) problems.push_back("oracles.betas: each must lie in [0,1)");
  }
  if (sweep.param != "depth" && sweep.param != "alpha" && sweep.param != "beta") {
    problems.push_back("sweep.param: must be depth, alpha or beta");
  }
  if (sweep.values.empty()) problems.push_back("sweep.values: must be nonempty");
  if (seeds.empty()) problems.push_back("multiseed.seeds: must be nonempty");
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw Error(ErrorKind::Config, msg);
  }
}

ModelConfig RunConfig::effective_model() const {
  ModelConfig m = model;
  if (ablation.no_cross_modal) m.smoothing.beta = 0.0;
  if (ablation.no_restart) m.smoothing.alpha = 0.0;
  if (ablation.uniform_readout) m.readout.adaptive = false;
  if (ablation.uniform_operators) m.learn_topology = false;
  m.adapter_only = control.adapter_only;
  return m;
}

CandidateConfig RunConfig::effective_candidates() const {
  CandidateConfig c = candidates;
  c.self_pairs = control.only_self_pairs    ? SelfPairPolicy::Only
                 : control.allow_self_pairs ? SelfPairPolicy::Allow
                                            : SelfPairPolicy::Exclude;
  return c;
}

std::string RunConfig::protocol() const {
  return control.allow_self_pairs || control.only_self_pairs ? "control-only" : "in-protocol";
}

}  // namespace magr

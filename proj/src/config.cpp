#include "ssdg/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ssdg/errors.hpp"

extern char** environ;

namespace ssdg {

using nlohmann::json;
using nlohmann::ordered_json;

ModelDims RunConfig::model_dims() const {
  return {dataset.params.input_dim, hidden, feature_dim, dataset.params.num_classes};
}

void RunConfig::validate() const {
  if (schema_version != kSchemaVersion) {
    throw ConfigError("schema_version " + std::to_string(schema_version) + " is not supported (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }
  const auto& p = dataset.params;
  if (p.num_classes < 2) throw ConfigError("dataset.num_classes must be >= 2");
  if (p.num_domains < 2) throw ConfigError("dataset.num_domains must be >= 2");
  if (p.input_dim < 2) throw ConfigError("dataset.input_dim must be >= 2");
  if (p.labels_per_class < 1 || p.labels_per_class > p.per_class_per_domain)
    throw ConfigError("dataset.labels_per_class must lie in [1, per_class_per_domain]");
  model_dims().validate();
  train.validate();
  train.loss.validate(p.num_classes);
  if (eval.target_domain && (*eval.target_domain < 0 || *eval.target_domain >= p.num_domains))
    throw ConfigError("eval.target_domain out of range: " + std::to_string(*eval.target_domain));
  const auto specs = component_ablation_specs();
  for (const auto& name : eval.ablation) {
    if (std::none_of(specs.begin(), specs.end(), [&](const AblationSpec& s) { return s.name == name; }))
      throw ConfigError("eval.ablation: unknown row '" + name + "'");
  }
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (gradcheck.configurations < 1) throw ConfigError("gradcheck.configurations must be >= 1");
  if (!(gradcheck.step > 0.0)) throw ConfigError("gradcheck.step must be > 0");
}

EnvList process_environment() {
  EnvList out;
  for (char** e = environ; e && *e; ++e) {
    const std::string kv = *e;
    if (kv.rfind("SSDG_", 0) != 0) continue;
    const auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    out.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* raw(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& key, int& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_integer()) throw type_error(key, "an integer");
      const auto x = v->get<long long>();
      if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(field(key) + ": out of range");
      out = static_cast<int>(x);
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (const json* v = raw(key)) out = as_u64(*v, field(key));
  }
  void get(const std::string& key, double& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number()) throw type_error(key, "a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = raw(key)) {
      if (!v->is_boolean()) throw type_error(key, "a boolean");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = raw(key)) {
      if (!v->is_string()) throw type_error(key, "a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::vector<int>& out) {
    if (const json* v = raw(key)) {
      if (!v->is_array()) throw type_error(key, "an array of integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) throw type_error(key, "an array of integers");
        out.push_back(e.get<int>());
      }
    }
  }
  void get(const std::string& key, std::vector<std::string>& out) {
    if (const json* v = raw(key)) {
      if (!v->is_array()) throw type_error(key, "an array of strings");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_string()) throw type_error(key, "an array of strings");
        out.push_back(e.get<std::string>());
      }
    }
  }

  Section child(const std::string& key) {
    static const json empty = json::object();
    const json* v = raw(key);
    return Section(v ? *v : empty, field(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError("unknown key '" + field(it.key()) + "'");
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  static std::uint64_t as_u64(const json& v, const std::string& where) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
    throw ConfigError(where + ": expected a non-negative integer");
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }
  ConfigError type_error(const std::string& key, const char* expected) const {
    return ConfigError(field(key) + ": expected " + expected);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

void apply_env(json& root, const EnvList& env) {
  for (const auto& [name, value] : env) {
    if (name.rfind("SSDG_", 0) != 0) continue;
    std::vector<std::string> parts;
    std::string rest = lower(name.substr(5));
    for (std::size_t pos; (pos = rest.find("__")) != std::string::npos; rest = rest.substr(pos + 2))
      parts.push_back(rest.substr(0, pos));
    parts.push_back(rest);
    json* node = &root;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      json& next = (*node)[parts[i]];
      if (next.is_null()) next = json::object();
      if (!next.is_object()) throw ConfigError(name + ": '" + parts[i] + "' is not a section");
      node = &next;
    }
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::parse_error&) {
      parsed = value;
    }
    (*node)[parts.back()] = std::move(parsed);
  }
}

std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const EnvList& env) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports the byte just past the offending token.
    const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    throw ConfigError("config parse error at line " + std::to_string(line_of(text, byte)) + ": " + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  apply_env(root, env);

  RunConfig cfg;
  Section top(root, "");
  if (!top.has("schema_version")) throw ConfigError("schema_version is required");
  top.get("schema_version", cfg.schema_version);
  top.get("seed", cfg.seed);
  if (const json* s = top.raw("seeds")) {
    if (!s->is_array()) throw ConfigError("seeds: expected an array of non-negative integers");
    cfg.seeds.clear();
    for (const auto& e : *s) cfg.seeds.push_back(Section::as_u64(e, "seeds"));
  }
  top.get("workers", cfg.workers);

  {
    Section d = top.child("dataset");
    auto& p = cfg.dataset.params;
    d.get("num_classes", p.num_classes);
    d.get("num_domains", p.num_domains);
    d.get("input_dim", p.input_dim);
    d.get("per_class_per_domain", p.per_class_per_domain);
    d.get("labels_per_class", p.labels_per_class);
    std::string shift = to_string(cfg.dataset.preset);
    d.get("shift", shift);
    try {
      cfg.dataset.preset = parse_shift_preset(shift);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("dataset.shift: ") + e.what());
    }
    d.get("rotation_step", cfg.dataset.rotation_step);
    d.get("offset_step", cfg.dataset.offset_step);
    d.get("corruption_step", cfg.dataset.corruption_step);
    d.get("noise_scale", cfg.dataset.noise_scale);
    d.get("class_separation", cfg.dataset.class_separation);
    if (const json* path = d.raw("path"); path && !path->is_null()) {
      if (!path->is_string()) throw ConfigError("dataset.path: expected a string");
      cfg.dataset_path = path->get<std::string>();
    }
    d.finish();
  }
  {
    Section m = top.child("model");
    m.get("hidden", cfg.hidden);
    m.get("feature_dim", cfg.feature_dim);
    m.finish();
  }
  {
    Section t = top.child("train");
    t.get("epochs", cfg.train.epochs);
    t.get("batches_per_epoch", cfg.train.batches_per_epoch);
    t.get("labeled_per_domain", cfg.train.labeled_per_domain);
    t.get("unlabeled_per_domain", cfg.train.unlabeled_per_domain);
    t.get("lr_encoder", cfg.train.lr_encoder);
    t.get("lr_classifier", cfg.train.lr_classifier);
    t.get("momentum", cfg.train.momentum);
    t.get("weight_decay", cfg.train.weight_decay);
    t.finish();
  }
  {
    Section a = top.child("augment");
    a.get("weak_noise", cfg.train.augment.weak_noise);
    a.get("strong_noise", cfg.train.augment.strong_noise);
    a.get("strong_drop", cfg.train.augment.strong_drop);
    a.finish();
  }
  {
    Section l = top.child("loss");
    auto& lc = cfg.train.loss;
    l.get("tau", lc.tau);
    l.get("top_n", lc.top_n);
    l.get("temperature", lc.temperature);
    l.get("features_from_weak_view", lc.features_from_weak_view);
    l.get("fbc_same", lc.terms.fbc_same);
    l.get("fbc_diff", lc.terms.fbc_diff);
    l.get("sa_same", lc.terms.sa_same);
    l.get("sa_diff", lc.terms.sa_diff);
    l.finish();
  }
  {
    Section e = top.child("eval");
    if (const json* td = e.raw("target_domain"); td && !td->is_null()) {
      if (!td->is_number_integer()) throw ConfigError("eval.target_domain: expected an integer or null");
      cfg.eval.target_domain = td->get<int>();
    }
    e.get("export_features", cfg.eval.export_features);
    e.get("write_logs", cfg.eval.write_logs);
    e.get("ablation", cfg.eval.ablation);
    e.finish();
  }
  {
    Section g = top.child("gradcheck");
    auto& o = cfg.gradcheck;
    g.get("configurations", o.configurations);
    g.get("step", o.step);
    g.get("tolerance", o.tolerance);
    g.get("min_margin", o.min_margin);
    g.get("max_attempts", o.max_attempts);
    g.get("hidden", o.hidden);
    g.get("feature_dim", o.feature_dim);
    g.get("input_dim", o.input_dim);
    g.get("min_classes", o.min_classes);
    g.get("max_classes", o.max_classes);
    g.get("min_domains", o.min_domains);
    g.get("max_domains", o.max_domains);
    g.get("labeled_per_domain", o.labeled_per_domain);
    g.get("unlabeled_per_domain", o.unlabeled_per_domain);
    g.get("tau", o.tau);
    g.get("temperature", o.temperature);
    g.finish();
  }
  top.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const EnvList& env) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), env);
}

std::string effective_config_json(const RunConfig& cfg) {
  ordered_json j;
  j["schema_version"] = cfg.schema_version;
  j["seed"] = cfg.seed;
  j["seeds"] = cfg.seeds;
  j["workers"] = cfg.workers;
  const auto& p = cfg.dataset.params;
  j["dataset"] = {{"num_classes", p.num_classes},
                  {"num_domains", p.num_domains},
                  {"input_dim", p.input_dim},
                  {"per_class_per_domain", p.per_class_per_domain},
                  {"labels_per_class", p.labels_per_class},
                  {"shift", to_string(cfg.dataset.preset)},
                  {"rotation_step", cfg.dataset.rotation_step},
                  {"offset_step", cfg.dataset.offset_step},
                  {"corruption_step", cfg.dataset.corruption_step},
                  {"noise_scale", cfg.dataset.noise_scale},
                  {"class_separation", cfg.dataset.class_separation},
                  {"path", cfg.dataset_path ? ordered_json(cfg.dataset_path->string()) : ordered_json(nullptr)}};
  j["model"] = {{"hidden", cfg.hidden}, {"feature_dim", cfg.feature_dim}};
  const auto& t = cfg.train;
  j["train"] = {{"epochs", t.epochs},
                {"batches_per_epoch", t.batches_per_epoch},
                {"labeled_per_domain", t.labeled_per_domain},
                {"unlabeled_per_domain", t.unlabeled_per_domain},
                {"lr_encoder", t.lr_encoder},
                {"lr_classifier", t.lr_classifier},
                {"momentum", t.momentum},
                {"weight_decay", t.weight_decay}};
  j["augment"] = {{"weak_noise", t.augment.weak_noise},
                  {"strong_noise", t.augment.strong_noise},
                  {"strong_drop", t.augment.strong_drop}};
  j["loss"] = {{"tau", t.loss.tau},
               {"top_n", t.loss.top_n},
               {"temperature", t.loss.temperature},
               {"features_from_weak_view", t.loss.features_from_weak_view},
               {"fbc_same", t.loss.terms.fbc_same},
               {"fbc_diff", t.loss.terms.fbc_diff},
               {"sa_same", t.loss.terms.sa_same},
               {"sa_diff", t.loss.terms.sa_diff}};
  j["eval"] = {{"target_domain", cfg.eval.target_domain ? ordered_json(*cfg.eval.target_domain) : ordered_json(nullptr)},
               {"export_features", cfg.eval.export_features},
               {"write_logs", cfg.eval.write_logs},
               {"ablation", cfg.eval.ablation}};
  const auto& g = cfg.gradcheck;
  j["gradcheck"] = {{"configurations", g.configurations},
                    {"step", g.step},
                    {"tolerance", g.tolerance},
                    {"min_margin", g.min_margin},
                    {"max_attempts", g.max_attempts},
                    {"hidden", g.hidden},
                    {"feature_dim", g.feature_dim},
                    {"input_dim", g.input_dim},
                    {"min_classes", g.min_classes},
                    {"max_classes", g.max_classes},
                    {"min_domains", g.min_domains},
                    {"max_domains", g.max_domains},
                    {"labeled_per_domain", g.labeled_per_domain},
                    {"unlabeled_per_domain", g.unlabeled_per_domain},
                    {"tau", g.tau},
                    {"temperature", g.temperature}};
  return j.dump(2) + "\n";
}

}  // namespace ssdg

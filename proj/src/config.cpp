#include "neat/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "neat/errors.hpp"

namespace neat {

using nlohmann::json;

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::finetune: return "finetune";
    case ExperimentKind::compare: return "compare";
    case ExperimentKind::depth_sweep: return "depth_sweep";
    case ExperimentKind::activation_sweep: return "activation_sweep";
    case ExperimentKind::targeting_sweep: return "targeting_sweep";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (auto k : {ExperimentKind::finetune, ExperimentKind::compare, ExperimentKind::depth_sweep,
                 ExperimentKind::activation_sweep, ExperimentKind::targeting_sweep})
    if (to_string(k) == name) return k;
  throw ConfigError("experiment: unknown value '" + name +
                    "' (expected finetune, compare, depth_sweep, activation_sweep or targeting_sweep)");
}

namespace {

// Typed access to one JSON object with its dotted path for diagnostics.
class Section {
 public:
  Section(const json& node, std::string path, std::set<std::string> allowed) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(label() + " must be an object");
    for (const auto& [key, value] : node_.items())
      if (!allowed.count(key)) throw ConfigError("unknown key '" + field(key) + "'");
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& raw(const std::string& key) const { return node_.at(key); }

  std::size_t count(const std::string& key, std::size_t fallback, std::size_t min = 0) const {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min))
      throw ConfigError(field(key) + " must be an integer >= " + std::to_string(min));
    return v.get<std::size_t>();
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    return as_seed(raw(key), field(key));
  }

  double number(const std::string& key, double fallback, double lo, double hi, bool open_lo = false) const {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number()) throw ConfigError(field(key) + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x > hi || (open_lo ? x <= lo : x < lo))
      throw ConfigError(field(key) + " = " + v.dump() + " is out of range " + (open_lo ? "(" : "[") +
                        json(lo).dump() + ", " + json(hi).dump() + "]");
    return x;
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!raw(key).is_boolean()) throw ConfigError(field(key) + " must be true or false");
    return raw(key).get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    if (!raw(key).is_string()) throw ConfigError(field(key) + " must be a string");
    return raw(key).get<std::string>();
  }

  std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> fallback, std::size_t min,
                                  bool allow_empty) const {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_array() || (!allow_empty && v.empty()))
      throw ConfigError(field(key) + (allow_empty ? " must be an array" : " must be a non-empty array"));
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_integer() || v[i].get<long long>() < static_cast<long long>(min))
        throw ConfigError(field(key) + "[" + std::to_string(i) + "] must be an integer >= " + std::to_string(min));
      out.push_back(v[i].get<std::size_t>());
    }
    return out;
  }

  static std::uint64_t as_seed(const json& v, const std::string& where) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw ConfigError(where + " must be a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  template <class F>
  auto parsed(const std::string& key, F&& parse) const {
    try {
      return parse(text(key, ""));
    } catch (const ConfigError& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json& node_;
  std::string path_;
};

const json& child(const json& doc, const char* key) {
  static const json empty = json::object();
  return doc.contains(key) ? doc.at(key) : empty;
}

void parse_optimizer(const Section& s, train::OptimizerConfig& o) {
  o.lr = s.number("lr", o.lr, 0.0, 1e3);
  o.beta1 = s.number("beta1", o.beta1, 0.0, 1.0);
  o.beta2 = s.number("beta2", o.beta2, 0.0, 1.0);
  o.eps = s.number("eps", o.eps, 0.0, 1.0, true);
  o.weight_decay = s.number("weight_decay", o.weight_decay, 0.0, 1e3);
  o.warmup_steps = s.count("warmup_steps", o.warmup_steps);
  if (o.beta1 >= 1.0 || o.beta2 >= 1.0) throw ConfigError(s.field("beta1/beta2") + " must be < 1");
}

json optimizer_json(const train::OptimizerConfig& o) {
  return {{"lr", o.lr},   {"beta1", o.beta1},
          {"beta2", o.beta2}, {"eps", o.eps},
          {"weight_decay", o.weight_decay}, {"warmup_steps", o.warmup_steps}};
}

}  // namespace

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  c.pretrain.epochs = 20;
  c.pretrain.batch_size = 16;
  c.pretrain.optimizer.lr = 1e-2;
  c.pretrain.optimizer.warmup_steps = 0;
  c.adapter.adapter.hidden = 32;
  c.adapter.adapter.dropout_p = 0.05;
  c.adapter.adapter.scaling = 32.0 / 32.0;
  c.train.epochs = 1;
  c.train.batch_size = 16;
  return c;
}

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c = default_experiment_config();
  const Section top(doc, "",
                    {"experiment", "task", "model", "adapter", "optimizer", "train", "seeds", "compare", "sweep",
                     "output_dir"});
  if (top.has("experiment")) c.experiment = top.parsed("experiment", parse_experiment_kind);
  c.output_dir = top.text("output_dir", c.output_dir);
  if (top.has("seeds")) {
    const json& v = top.raw("seeds");
    if (!v.is_array() || v.empty()) throw ConfigError("seeds must be a non-empty array");
    c.seeds.clear();
    for (std::size_t i = 0; i < v.size(); ++i) c.seeds.push_back(Section::as_seed(v[i], "seeds[" + std::to_string(i) + "]"));
  }

  {
    const Section s(child(doc, "task"), "task",
                    {"kind", "d_in", "d_out", "hidden", "n_train", "n_val", "noise", "shift", "seed", "csv_path"});
    train::TaskSpec& t = c.task;
    if (s.has("kind")) t.kind = s.parsed("kind", train::parse_task_kind);
    t.d_in = s.count("d_in", t.d_in, 1);
    t.d_out = s.count("d_out", t.d_out, 1);
    t.hidden = s.counts("hidden", t.hidden, 1, true);
    t.n_train = s.count("n_train", t.n_train, 1);
    t.n_val = s.count("n_val", t.n_val, 1);
    t.noise = s.number("noise", t.noise, 0.0, 1e6);
    t.shift = s.number("shift", t.shift, 0.0, 1e6);
    t.seed = s.seed("seed", t.seed);
    t.csv_path = s.text("csv_path", t.csv_path);
    if (t.kind == train::TaskKind::csv_classification && t.csv_path.empty())
      throw ConfigError("task.csv_path is required for csv_classification");
  }

  {
    const Section s(child(doc, "model"), "model",
                    {"hidden", "pretrain_epochs", "pretrain_batch_size", "pretrain_optimizer"});
    c.model_hidden = s.counts("hidden", c.model_hidden, 1, true);
    c.pretrain.epochs = s.count("pretrain_epochs", c.pretrain.epochs);
    c.pretrain.batch_size = s.count("pretrain_batch_size", c.pretrain.batch_size, 1);
    parse_optimizer(Section(child(child(doc, "model"), "pretrain_optimizer"), "model.pretrain_optimizer",
                            {"lr", "beta1", "beta2", "eps", "weight_decay", "warmup_steps"}),
                    c.pretrain.optimizer);
  }

  {
    const Section s(child(doc, "adapter"), "adapter",
                    {"kind", "r", "depth", "activation", "alpha", "scaling", "dropout", "residual",
                     "output_activation", "target_layers"});
    AdapterConfig& a = c.adapter.adapter;
    if (s.has("kind")) {
      const std::string kind = s.text("kind", "");
      if (kind == "neat") a.kind = AdapterKind::neat;
      else if (kind == "lora") a.kind = AdapterKind::lora;
      else throw ConfigError("adapter.kind: unknown value '" + kind + "' (expected neat or lora)");
    }
    a.hidden = s.count("r", a.hidden, 1);
    a.depth = s.count("depth", a.depth, 2);
    if (s.has("activation")) a.activation = s.parsed("activation", [](const std::string& n) { return ad::parse_activation(n); });
    if (s.has("alpha") && s.has("scaling"))
      throw ConfigError("adapter.alpha and adapter.scaling are mutually exclusive (scaling = alpha / r)");
    a.scaling = s.has("scaling") ? s.number("scaling", 1.0, 0.0, 1e6)
                                 : s.number("alpha", 32.0, 0.0, 1e6) / static_cast<double>(a.hidden);
    a.dropout_p = s.number("dropout", a.dropout_p, 0.0, 1.0);
    if (a.dropout_p >= 1.0) throw ConfigError("adapter.dropout must be < 1");
    a.residual = s.flag("residual", a.residual);
    a.output_activation = s.flag("output_activation", a.output_activation);
    c.adapter.target_layers = s.counts("target_layers", {}, 0, true);
    if (a.kind == AdapterKind::lora && a.depth != 2) throw ConfigError("adapter.depth must be 2 for lora");
  }

  parse_optimizer(Section(child(doc, "optimizer"), "optimizer",
                          {"lr", "beta1", "beta2", "eps", "weight_decay", "warmup_steps"}),
                  c.train.optimizer);

  {
    const Section s(child(doc, "train"), "train", {"epochs", "batch_size", "full_batch"});
    c.train.epochs = s.count("epochs", c.train.epochs);
    c.train.batch_size = s.count("batch_size", c.train.batch_size, 1);
    c.train.full_batch = s.flag("full_batch", c.train.full_batch);
  }

  {
    const Section s(child(doc, "compare"), "compare", {"rank"});
    c.compare_rank = s.count("rank", c.compare_rank, 1);
  }

  {
    const Section s(child(doc, "sweep"), "sweep", {"depths", "activations", "suffix_from"});
    c.sweep.depths = s.counts("depths", c.sweep.depths, 2, false);
    if (s.has("activations")) {
      const json& v = s.raw("activations");
      if (!v.is_array() || v.empty()) throw ConfigError("sweep.activations must be a non-empty array");
      c.sweep.activations.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_string()) throw ConfigError("sweep.activations[" + std::to_string(i) + "] must be a string");
        try {
          c.sweep.activations.push_back(ad::parse_activation(v[i].get<std::string>()));
        } catch (const ConfigError& e) {
          throw ConfigError("sweep.activations[" + std::to_string(i) + "]: " + e.what());
        }
      }
    }
    if (s.has("suffix_from")) c.sweep.suffix_from = s.count("suffix_from", 0);
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
  const AdapterConfig& a = c.adapter.adapter;
  json activations = json::array();
  for (auto act : c.sweep.activations) activations.push_back(std::string(ad::to_string(act)));
  json sweep = {{"depths", c.sweep.depths}, {"activations", activations}};
  if (c.sweep.suffix_from) sweep["suffix_from"] = *c.sweep.suffix_from;
  return {
      {"experiment", to_string(c.experiment)},
      {"task",
       {{"kind", train::to_string(c.task.kind)},
        {"d_in", c.task.d_in},
        {"d_out", c.task.d_out},
        {"hidden", c.task.hidden},
        {"n_train", c.task.n_train},
        {"n_val", c.task.n_val},
        {"noise", c.task.noise},
        {"shift", c.task.shift},
        {"seed", c.task.seed},
        {"csv_path", c.task.csv_path}}},
      {"model",
       {{"hidden", c.model_hidden},
        {"pretrain_epochs", c.pretrain.epochs},
        {"pretrain_batch_size", c.pretrain.batch_size},
        {"pretrain_optimizer", optimizer_json(c.pretrain.optimizer)}}},
      {"adapter",
       {{"kind", a.kind == AdapterKind::neat ? "neat" : "lora"},
        {"r", a.hidden},
        {"depth", a.depth},
        {"activation", std::string(ad::to_string(a.activation))},
        {"scaling", a.scaling},
        {"dropout", a.dropout_p},
        {"residual", a.residual},
        {"output_activation", a.output_activation},
        {"target_layers", c.adapter.target_layers}}},
      {"optimizer", optimizer_json(c.train.optimizer)},
      {"train", {{"epochs", c.train.epochs}, {"batch_size", c.train.batch_size}, {"full_batch", c.train.full_batch}}},
      {"seeds", c.seeds},
      {"compare", {{"rank", c.compare_rank}}},
      {"sweep", sweep},
      {"output_dir", c.output_dir},
  };
}

}  // namespace neat

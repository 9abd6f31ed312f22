#include "nal/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "nal/errors.hpp"
#include "nal/rng.hpp"

namespace nal {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  return out;
}

std::vector<double> to_doubles(const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split(v, ',')) out.push_back(to_double(item));
  return out;
}

std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
std::string join(const std::vector<T>& values, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += sep;
    if constexpr (std::is_floating_point_v<T>) {
      out += num(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

Shape to_shape(const std::string& v) {
  Shape out;
  for (const auto& item : split(v, 'x')) out.push_back(to_size(item));
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

// Keys shared by the global na.* section and the per-attribute overrides.
bool set_schedule(UnitSchedule& s, const std::string& field, const std::string& v) {
  if (field == "max_units") s.max_units = to_size(v);
  else if (field == "pretrain_epochs") s.pretrain_epochs = to_size(v);
  else if (field == "patience") s.patience = to_size(v);
  else if (field == "threshold") s.threshold = to_double(v);
  else if (field == "decay_base") s.decay_base = to_double(v);
  else if (field == "decay_growth") s.decay_growth = to_double(v);
  else if (field == "max_epochs") s.max_epochs = to_size(v);
  else if (field == "init_mix") s.init_mix = to_double(v);
  else return false;
  return true;
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed", [](ExperimentConfig& c, const std::string& v) { c.seed = to_u64(v); }},
      {"out", [](ExperimentConfig& c, const std::string& v) { c.out_dir = v; }},
      {"data.source",
       [](ExperimentConfig& c, const std::string& v) {
         if (v == "synthetic") c.source = ExperimentConfig::Source::Synthetic;
         else if (v == "file") c.source = ExperimentConfig::Source::File;
         else throw ConfigError("data.source must be synthetic or file");
       }},
      {"data.train", [](ExperimentConfig& c, const std::string& v) { c.train_path = v; }},
      {"data.test", [](ExperimentConfig& c, const std::string& v) { c.test_path = v; }},
      {"data.shape", [](ExperimentConfig& c, const std::string& v) { c.sample_shape = to_shape(v); }},
      {"synth.kind",
       [](ExperimentConfig& c, const std::string& v) {
         using K = SyntheticSpec::Kind;
         if (v == "blobs") c.synthetic.kind = K::GaussianBlobs;
         else if (v == "moons") c.synthetic.kind = K::TwoMoons;
         else if (v == "patches") c.synthetic.kind = K::ImagePatches;
         else throw ConfigError("synth.kind must be blobs, moons or patches");
       }},
      {"synth.classes", [](ExperimentConfig& c, const std::string& v) { c.synthetic.classes = to_size(v); }},
      {"synth.dim", [](ExperimentConfig& c, const std::string& v) { c.synthetic.dim = to_size(v); }},
      {"synth.sigma", [](ExperimentConfig& c, const std::string& v) { c.synthetic.sigma = to_double(v); }},
      {"synth.separation", [](ExperimentConfig& c, const std::string& v) { c.synthetic.separation = to_double(v); }},
      {"synth.height", [](ExperimentConfig& c, const std::string& v) { c.synthetic.height = to_size(v); }},
      {"synth.width", [](ExperimentConfig& c, const std::string& v) { c.synthetic.width = to_size(v); }},
      {"synth.n_train", [](ExperimentConfig& c, const std::string& v) { c.synthetic.n_train = to_size(v); }},
      {"synth.n_test", [](ExperimentConfig& c, const std::string& v) { c.synthetic.n_test = to_size(v); }},
      {"noise.mode",
       [](ExperimentConfig& c, const std::string& v) {
         using M = NoiseSpec::Mode;
         c.inject = v != "none";
         if (v == "uniform") c.noise.mode = M::Uniform;
         else if (v == "matrix") c.noise.mode = M::Matrix;
         else if (v == "per_class") c.noise.mode = M::PerClass;
         else if (v != "none") throw ConfigError("noise.mode must be none, uniform, matrix or per_class");
       }},
      {"noise.rho", [](ExperimentConfig& c, const std::string& v) { c.noise.rho = to_double(v); }},
      {"noise.per_class", [](ExperimentConfig& c, const std::string& v) { c.noise.per_class = to_doubles(v); }},
      {"noise.matrix",
       [](ExperimentConfig& c, const std::string& v) {
         auto values = to_doubles(v);
         std::size_t n = 0;
         while (n * n < values.size()) ++n;
         if (n * n != values.size()) throw ConfigError("noise.matrix needs C*C values");
         c.noise.matrix = Tensor({n, n}, std::move(values));
       }},
      {"model.layers", [](ExperimentConfig& c, const std::string& v) { c.layers = parse_architecture(v); }},
      {"optim.lr", [](ExperimentConfig& c, const std::string& v) { c.sgd.learning_rate = to_double(v); }},
      {"optim.momentum", [](ExperimentConfig& c, const std::string& v) { c.sgd.momentum = to_double(v); }},
      {"optim.weight_decay", [](ExperimentConfig& c, const std::string& v) { c.sgd.weight_decay = to_double(v); }},
      {"optim.batch_size", [](ExperimentConfig& c, const std::string& v) { c.setup.batch_size = to_size(v); }},
      {"na.unit_lr", [](ExperimentConfig& c, const std::string& v) { c.setup.unit_learning_rate = to_double(v); }},
      {"na.unit_momentum", [](ExperimentConfig& c, const std::string& v) { c.setup.unit_momentum = to_double(v); }},
      {"na.validation_fraction",
       [](ExperimentConfig& c, const std::string& v) { c.validation_fraction = to_double(v); }},
      {"rec.max_iterations",
       [](ExperimentConfig& c, const std::string& v) { c.recursion.max_iterations = to_size(v); }},
      {"rec.alpha_base", [](ExperimentConfig& c, const std::string& v) { c.recursion.alpha_base = to_double(v); }},
      {"rec.min_improvement",
       [](ExperimentConfig& c, const std::string& v) { c.recursion.min_improvement = to_double(v); }},
      {"rec.epochs", [](ExperimentConfig& c, const std::string& v) { c.recursion.epochs = to_size(v); }},
  };
  return table;
}

const std::set<std::string> kAttributeFields = {"classes", "separation", "noise_rho", "weight"};

}  // namespace

std::vector<LayerToken> parse_architecture(const std::string& text) {
  std::vector<LayerToken> out;
  for (const auto& item : split(text, ',')) {
    const auto parts = split(item, ':');
    const std::string& kind = parts[0];
    LayerToken t;
    auto arity = [&](std::size_t lo, std::size_t hi) {
      if (parts.size() - 1 < lo || parts.size() - 1 > hi) throw ConfigError("bad layer '" + item + "'");
    };
    if (kind == "dense") {
      arity(1, 1);
      t.kind = LayerToken::Kind::Dense;
      t.out = to_size(parts[1]);
    } else if (kind == "conv") {
      arity(2, 3);
      t.kind = LayerToken::Kind::Conv;
      t.out = to_size(parts[1]);
      t.kernel = to_size(parts[2]);
      if (parts.size() == 4) t.stride = to_size(parts[3]);
    } else if (kind == "relu") {
      arity(0, 0);
      t.kind = LayerToken::Kind::ReLU;
    } else if (kind == "maxpool") {
      arity(0, 0);
      t.kind = LayerToken::Kind::MaxPool;
    } else if (kind == "flatten") {
      arity(0, 0);
      t.kind = LayerToken::Kind::Flatten;
    } else {
      throw ConfigError("unknown layer '" + item + "'");
    }
    if ((t.kind == LayerToken::Kind::Dense || t.kind == LayerToken::Kind::Conv) && t.out == 0) {
      throw ConfigError("layer '" + item + "' needs a positive width");
    }
    out.push_back(t);
  }
  return out;
}

std::string format_architecture(const std::vector<LayerToken>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ", ";
    switch (t.kind) {
      case LayerToken::Kind::Dense: out += "dense:" + std::to_string(t.out); break;
      case LayerToken::Kind::Conv:
        out += "conv:" + std::to_string(t.out) + ":" + std::to_string(t.kernel) + ":" + std::to_string(t.stride);
        break;
      case LayerToken::Kind::ReLU: out += "relu"; break;
      case LayerToken::Kind::MaxPool: out += "maxpool"; break;
      case LayerToken::Kind::Flatten: out += "flatten"; break;
    }
  }
  return out;
}

std::vector<LayerSpec> resolve_architecture(const std::vector<LayerToken>& tokens, const Shape& sample_shape,
                                            std::uint64_t seed) {
  std::vector<LayerSpec> specs;
  Shape shape = sample_shape;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    const std::uint64_t layer_seed = derive_seed(seed, i);
    const std::string where = "layer " + std::to_string(i) + ": ";
    switch (t.kind) {
      case LayerToken::Kind::Dense:
        if (shape.size() != 1) throw ConfigError(where + "dense needs a flat input, got " + shape_to_string(shape));
        specs.push_back(DenseSpec{shape[0], t.out, layer_seed});
        shape = {t.out};
        break;
      case LayerToken::Kind::Conv: {
        if (shape.size() != 3) throw ConfigError(where + "conv needs a [C, H, W] input, got " + shape_to_string(shape));
        if (t.kernel == 0 || t.stride == 0 || t.kernel > shape[1] || t.kernel > shape[2]) {
          throw ConfigError(where + "kernel does not fit " + shape_to_string(shape));
        }
        specs.push_back(Conv2DSpec{shape[0], t.out, t.kernel, t.stride, layer_seed});
        shape = {t.out, (shape[1] - t.kernel) / t.stride + 1, (shape[2] - t.kernel) / t.stride + 1};
        break;
      }
      case LayerToken::Kind::ReLU: specs.push_back(ReLUSpec{}); break;
      case LayerToken::Kind::MaxPool:
        if (shape.size() != 3) throw ConfigError(where + "maxpool needs a [C, H, W] input");
        specs.push_back(MaxPool2x2Spec{});
        shape = {shape[0], shape[1] / 2, shape[2] / 2};
        break;
      case LayerToken::Kind::Flatten:
        specs.push_back(FlattenSpec{});
        shape = {shape_size(shape)};
        break;
    }
  }
  return specs;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::vector<std::tuple<std::size_t, std::string, std::string>> lines;
  std::set<std::string> seen;

  std::istringstream in(text);
  std::string raw;
  for (std::size_t line_no = 1; std::getline(in, raw); ++line_no) {
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key " + key);
    config.entries[key] = value;
    lines.emplace_back(line_no, std::move(key), std::move(value));
  }

  auto fail = [](std::size_t line_no, const std::string& key, const std::string& what) {
    return ConfigError("line " + std::to_string(line_no) + " (" + key + "): " + what);
  };

  // Global keys first so attribute sections can start from the global schedule.
  std::vector<std::tuple<std::size_t, std::string, std::string>> attr_lines;
  for (const auto& [line_no, key, value] : lines) {
    try {
      if (key == "attributes") {
        for (const auto& name : split(value, ',')) {
          if (name.empty()) throw ConfigError("empty attribute name");
          AttributeConfig a;
          a.name = name;
          config.attributes.push_back(a);
        }
      } else if (key.rfind("attr.", 0) == 0) {
        attr_lines.emplace_back(line_no, key, value);
      } else if (key.rfind("na.", 0) == 0 && set_schedule(config.schedule, key.substr(3), value)) {
      } else if (auto it = setters().find(key); it != setters().end()) {
        it->second(config, value);
      } else {
        throw ConfigError("unknown key");
      }
    } catch (const ConfigError& e) {
      throw fail(line_no, key, e.what());
    }
  }

  for (auto& a : config.attributes) a.schedule = config.schedule;
  for (const auto& [line_no, key, value] : attr_lines) {
    try {
      const auto dot = key.rfind('.');
      const std::string name = key.substr(5, dot == std::string::npos || dot < 5 ? 0 : dot - 5);
      const std::string field = dot == std::string::npos ? "" : key.substr(dot + 1);
      auto it = std::find_if(config.attributes.begin(), config.attributes.end(),
                             [&](const AttributeConfig& a) { return a.name == name; });
      if (it == config.attributes.end()) throw ConfigError("attribute not declared in 'attributes'");
      if (field == "classes") it->classes = to_size(value);
      else if (field == "separation") it->separation = to_double(value);
      else if (field == "noise_rho") it->noise_rho = to_double(value);
      else if (field == "weight") it->weight = to_double(value);
      else if (!set_schedule(it->schedule, field, value)) throw ConfigError("unknown attribute field");
    } catch (const ConfigError& e) {
      throw fail(line_no, key, e.what());
    }
  }
  if (config.multi_attribute()) {
    config.setup.attribute_weights.clear();
    for (const auto& a : config.attributes) config.setup.attribute_weights.push_back(a.weight);
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

void validate(const ExperimentConfig& c) {
  using Source = ExperimentConfig::Source;
  if (c.source == Source::File) {
    for (const auto& p : {c.train_path, c.test_path}) {
      if (p.empty()) throw ConfigError("data.train and data.test are required for file input");
      if (!std::filesystem::exists(p)) throw ConfigError("no such file: " + p.string());
    }
  } else {
    const auto& s = c.synthetic;
    if (s.n_train < 1 || s.n_test < 1) throw ConfigError("synth.n_train and synth.n_test must be positive");
    if (!(s.sigma > 0.0)) throw ConfigError("synth.sigma must be positive");
    if (!c.multi_attribute() && s.classes < 2) throw ConfigError("synth.classes must be at least 2");
  }
  if (c.layers.empty()) throw ConfigError("model.layers is empty");
  if (!(c.sgd.learning_rate > 0.0)) throw ConfigError("optim.lr must be positive");
  if (!(c.sgd.momentum >= 0.0 && c.sgd.momentum < 1.0)) throw ConfigError("optim.momentum must lie in [0, 1)");
  if (!(c.sgd.weight_decay >= 0.0)) throw ConfigError("optim.weight_decay must be non-negative");
  if (c.setup.batch_size < 1) throw ConfigError("optim.batch_size must be positive");
  if (!(c.setup.unit_learning_rate > 0.0)) throw ConfigError("na.unit_lr must be positive");
  if (!(c.setup.unit_momentum >= 0.0 && c.setup.unit_momentum < 1.0)) {
    throw ConfigError("na.unit_momentum must lie in [0, 1)");
  }
  if (!(c.validation_fraction > 0.0 && c.validation_fraction < 1.0)) {
    throw ConfigError("na.validation_fraction must lie in (0, 1)");
  }
  if (c.inject && !(c.noise.rho >= 0.0 && c.noise.rho < 1.0)) throw ConfigError("noise.rho must lie in [0, 1)");
  validate(c.schedule);
  validate(c.recursion);
  std::set<std::string> names;
  for (const auto& a : c.attributes) {
    if (!names.insert(a.name).second) throw ConfigError("attribute " + a.name + " declared twice");
    if (a.classes < 2) throw ConfigError("attr." + a.name + ".classes must be at least 2");
    if (!(a.noise_rho >= 0.0 && a.noise_rho < 1.0)) throw ConfigError("attr." + a.name + ".noise_rho must lie in [0, 1)");
    if (!(a.weight >= 0.0)) throw ConfigError("attr." + a.name + ".weight must be non-negative");
    validate(a.schedule);
  }
}

std::string echo_config(const ExperimentConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv;
  auto add = [&](std::string k, std::string v) { kv.emplace_back(std::move(k), std::move(v)); };
  auto add_schedule = [&](const std::string& prefix, const UnitSchedule& s) {
    add(prefix + "max_units", std::to_string(s.max_units));
    add(prefix + "pretrain_epochs", std::to_string(s.pretrain_epochs));
    add(prefix + "patience", std::to_string(s.patience));
    add(prefix + "threshold", num(s.threshold));
    add(prefix + "decay_base", num(s.decay_base));
    add(prefix + "decay_growth", num(s.decay_growth));
    add(prefix + "max_epochs", std::to_string(s.max_epochs));
    add(prefix + "init_mix", num(s.init_mix));
  };

  add("seed", std::to_string(c.seed));
  add("out", c.out_dir.string());
  if (c.source == ExperimentConfig::Source::File) {
    add("data.source", "file");
    add("data.train", c.train_path.string());
    add("data.test", c.test_path.string());
  } else {
    add("data.source", "synthetic");
    static const char* kinds[] = {"blobs", "moons", "patches"};
    add("synth.kind", kinds[static_cast<int>(c.synthetic.kind)]);
    add("synth.classes", std::to_string(c.synthetic.classes));
    add("synth.dim", std::to_string(c.synthetic.dim));
    add("synth.sigma", num(c.synthetic.sigma));
    add("synth.separation", num(c.synthetic.separation));
    add("synth.height", std::to_string(c.synthetic.height));
    add("synth.width", std::to_string(c.synthetic.width));
    add("synth.n_train", std::to_string(c.synthetic.n_train));
    add("synth.n_test", std::to_string(c.synthetic.n_test));
  }
  if (!c.sample_shape.empty()) add("data.shape", join(c.sample_shape, "x"));
  if (!c.inject) {
    add("noise.mode", "none");
  } else {
    static const char* modes[] = {"uniform", "matrix", "per_class"};
    add("noise.mode", modes[static_cast<int>(c.noise.mode)]);
    add("noise.rho", num(c.noise.rho));
    if (!c.noise.per_class.empty()) add("noise.per_class", join(c.noise.per_class, ", "));
    if (!c.noise.matrix.empty()) add("noise.matrix", join(c.noise.matrix.values(), ", "));
  }
  add("model.layers", format_architecture(c.layers));
  add("optim.lr", num(c.sgd.learning_rate));
  add("optim.momentum", num(c.sgd.momentum));
  add("optim.weight_decay", num(c.sgd.weight_decay));
  add("optim.batch_size", std::to_string(c.setup.batch_size));
  add_schedule("na.", c.schedule);
  add("na.unit_lr", num(c.setup.unit_learning_rate));
  add("na.unit_momentum", num(c.setup.unit_momentum));
  add("na.validation_fraction", num(c.validation_fraction));
  add("rec.max_iterations", std::to_string(c.recursion.max_iterations));
  add("rec.alpha_base", num(c.recursion.alpha_base));
  add("rec.min_improvement", num(c.recursion.min_improvement));
  add("rec.epochs", std::to_string(c.recursion.epochs));
  if (c.multi_attribute()) {
    std::vector<std::string> names;
    for (const auto& a : c.attributes) names.push_back(a.name);
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    add("attributes", list);
    for (const auto& a : c.attributes) {
      const std::string p = "attr." + a.name + ".";
      add(p + "classes", std::to_string(a.classes));
      add(p + "separation", num(a.separation));
      add(p + "noise_rho", num(a.noise_rho));
      add(p + "weight", num(a.weight));
      add_schedule(p, a.schedule);
    }
  }

  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

}  // namespace nal

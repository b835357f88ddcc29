#include "toad/run_config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "toad/data.hpp"

namespace toad {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Member>
Field size_field(Member member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_size(k, v); },
          [member](const RunConfig& c) { return std::to_string(member(c)); }};
}

template <typename Member>
Field double_field(Member member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_double(k, v); },
          [member](const RunConfig& c) { return fmt(member(c)); }};
}

template <typename Member>
Field string_field(Member member) {
  return {[member](RunConfig& c, const std::string&, const std::string& v) { member(c) = v; },
          [member](const RunConfig& c) { return member(c); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"dim", size_field([](auto& c) -> auto& { return c.model.dim; })},
      {"window", size_field([](auto& c) -> auto& { return c.model.window; })},
      {"layers", size_field([](auto& c) -> auto& { return c.model.layers; })},
      {"heads", size_field([](auto& c) -> auto& { return c.model.heads; })},
      {"classes", size_field([](auto& c) -> auto& { return c.model.classes; })},
      {"mlp_ratio", size_field([](auto& c) -> auto& { return c.model.mlp_ratio; })},
      {"tau", double_field([](auto& c) -> auto& { return c.model.tau; })},
      {"lambda", double_field([](auto& c) -> auto& { return c.model.lambda; })},
      {"future",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.model.future_enabled = parse_bool(k, v); },
        [](const RunConfig& c) { return std::string(c.model.future_enabled ? "true" : "false"); }}},
      {"classifier",
       {[](RunConfig& c, const std::string&, const std::string& v) {
          c.model.classifier_mode = parse_classifier_mode(v);
        },
        [](const RunConfig& c) { return std::string(to_string(c.model.classifier_mode)); }}},
      {"layer_norm_eps", double_field([](auto& c) -> auto& { return c.model.layer_norm_eps; })},
      {"lr", double_field([](auto& c) -> auto& { return c.train.adamw.lr_base; })},
      {"weight_decay", double_field([](auto& c) -> auto& { return c.train.adamw.weight_decay; })},
      {"beta1", double_field([](auto& c) -> auto& { return c.train.adamw.beta1; })},
      {"beta2", double_field([](auto& c) -> auto& { return c.train.adamw.beta2; })},
      {"eps", double_field([](auto& c) -> auto& { return c.train.adamw.eps; })},
      {"warmup_epochs", double_field([](auto& c) -> auto& { return c.train.adamw.warmup_epochs; })},
      {"epochs",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.train.epochs = parse_size(k, v);
          c.train.adamw.total_epochs = static_cast<double>(c.train.epochs);
        },
        [](const RunConfig& c) { return std::to_string(c.train.epochs); }}},
      {"batch", size_field([](auto& c) -> auto& { return c.train.batch; })},
      {"rate", size_field([](auto& c) -> auto& { return c.train.rate; })},
      {"horizon", size_field([](auto& c) -> auto& { return c.train.horizon; })},
      {"seed",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.train.seed = parse_size(k, v); },
        [](const RunConfig& c) { return std::to_string(c.train.seed); }}},
      {"log_initial_loss",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.train.log_initial_loss = parse_bool(k, v); },
        [](const RunConfig& c) { return std::string(c.train.log_initial_loss ? "true" : "false"); }}},
      {"train_data", string_field([](auto& c) -> auto& { return c.train_data; })},
      {"test_data", string_field([](auto& c) -> auto& { return c.test_data; })},
      {"vocab", string_field([](auto& c) -> auto& { return c.vocab; })},
      {"text_class_name", string_field([](auto& c) -> auto& { return c.text_class_name; })},
      {"text_prompt", string_field([](auto& c) -> auto& { return c.text_prompt; })},
      {"text_future", string_field([](auto& c) -> auto& { return c.text_future; })},
      {"output_dir", string_field([](auto& c) -> auto& { return c.output_dir; })},
      {"checkpoint", string_field([](auto& c) -> auto& { return c.checkpoint; })},
      {"keep_last", size_field([](auto& c) -> auto& { return c.keep_last; })},
      {"eval_stride", size_field([](auto& c) -> auto& { return c.eval_stride; })},
      {"shots",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.shots = parse_list(k, v); },
        [](const RunConfig& c) { return fmt_list(c.shots); }}},
  };
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

RunConfig::RunConfig() { train.adamw.total_epochs = static_cast<double>(train.epochs); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  find_field(key).set(*this, key, value);
}

std::string RunConfig::get(const std::string& key) const { return find_field(key).get(*this); }

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return parse(text);
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (eval_stride == 0) throw ConfigError("eval_stride must be positive");
  for (auto k : shots) {
    if (k == 0) throw ConfigError("shots must be positive");
  }
}

}  // namespace toad

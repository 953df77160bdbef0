// SPDX-License-Identifier: Apache-2.0

#include "spiel/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "spiel/error.hpp"

namespace spiel {

Method parse_method(const std::string& name) {
  if (name == "spiel-ag") return Method::kSpielAg;
  if (name == "spiel-ma") return Method::kSpielMa;
  if (name == "fixed-mask") return Method::kFixedMask;
  if (name == "full") return Method::kFull;
  if (name == "lora") return Method::kLora;
  throw ConfigError("unknown method '" + name +
                    "' (expected spiel-ag, spiel-ma, fixed-mask, full or lora)");
}

const char* to_string(Method m) {
  switch (m) {
    case Method::kSpielAg:
      return "spiel-ag";
    case Method::kSpielMa:
      return "spiel-ma";
    case Method::kFixedMask:
      return "fixed-mask";
    case Method::kFull:
      return "full";
    case Method::kLora:
      return "lora";
  }
  return "?";
}

bool is_sparse(Method m) {
  return m == Method::kSpielAg || m == Method::kSpielMa || m == Method::kFixedMask;
}

double RunConfig::effective_lr() const {
  if (lr) return *lr;
  return method == Method::kSpielMa ? 1e-2 : 1e-3;
}

uint32_t RunConfig::effective_seed_age() const {
  return seed_age ? *seed_age : static_cast<uint32_t>(schedule.estimation_steps);
}

void RunConfig::validate() const {
  if (!(density > 0.0 && density <= 1.0)) throw ConfigError("density must lie in (0, 1]");
  if (!(effective_lr() > 0.0)) throw ConfigError("lr must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (batch == 0) throw ConfigError("batch must be positive");
  if (quant_block == 0) throw ConfigError("quant_block must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (hidden.size() > 3) throw ConfigError("at most 3 hidden layers are supported");
  for (std::size_t h : hidden) {
    if (h == 0 || h > 256) throw ConfigError("hidden widths must lie in [1, 256]");
  }
  if (pretrain_steps < 0) throw ConfigError("pretrain_steps must be non-negative");
  if (!(pretrain_lr > 0.0)) throw ConfigError("pretrain_lr must be positive");
  if (lora_rank == 0) throw ConfigError("lora_rank must be positive");
  if (!(lora_alpha > 0.0)) throw ConfigError("lora_alpha must be positive");
  if (!(lora_dropout >= 0.0 && lora_dropout < 1.0)) throw ConfigError("lora_dropout must lie in [0, 1)");
  schedule.validate();
  task.validate();
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& value) {
  N out{};
  const char* begin = value.data();
  const char* end = begin + value.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("bad value '" + value + "' for key '" + key + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("bad boolean '" + value + "' for key '" + key + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  if (value.empty() || value == "none") return out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(key, trim(item)));
  return out;
}

Activation parse_activation(const std::string& value) {
  if (value == "tanh") return Activation::kTanh;
  if (value == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + value + "' (expected tanh or relu)");
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string join(const std::vector<std::size_t>& v) {
  if (v.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

void apply_task_setting(TaskConfig& t, const std::string& key, const std::string& value) {
  const std::string k = key.substr(5);
  if (k == "kind") {
    t.kind = parse_task_kind(value);
  } else if (k == "seed") {
    t.seed = parse_number<uint64_t>(key, value);
  } else if (k == "input_dim") {
    t.input_dim = parse_number<std::size_t>(key, value);
  } else if (k == "output_dim") {
    t.output_dim = parse_number<std::size_t>(key, value);
  } else if (k == "teacher_hidden") {
    t.teacher_hidden = parse_list(key, value);
  } else if (k == "train_samples") {
    t.train_samples = parse_number<std::size_t>(key, value);
  } else if (k == "test_samples") {
    t.test_samples = parse_number<std::size_t>(key, value);
  } else if (k == "shift_fraction") {
    t.shift_fraction = parse_number<double>(key, value);
  } else if (k == "shift_magnitude") {
    t.shift_magnitude = parse_number<double>(key, value);
  } else if (k == "noise") {
    t.noise = parse_number<double>(key, value);
  } else if (k == "csv_a_train") {
    t.csv_a_train = value;
  } else if (k == "csv_a_test") {
    t.csv_a_test = value;
  } else if (k == "csv_b_train") {
    t.csv_b_train = value;
  } else if (k == "csv_b_test") {
    t.csv_b_test = value;
  } else if (k == "csv_targets") {
    t.csv_targets = parse_number<std::size_t>(key, value);
  } else if (k == "csv_classify") {
    t.csv_classify = parse_bool(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

}  // namespace

void apply_setting(RunConfig& c, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  if (key.rfind("task.", 0) == 0) {
    apply_task_setting(c.task, key, value);
  } else if (key == "method") {
    c.method = parse_method(value);
  } else if (key == "density") {
    c.density = parse_number<double>(key, value);
  } else if (key == "lr") {
    c.lr = parse_number<double>(key, value);
  } else if (key == "lambda") {
    c.lambda = parse_number<double>(key, value);
  } else if (key == "schedule") {
    c.schedule.kind = parse_schedule_kind(value);
  } else if (key == "xi") {
    c.schedule.xi = parse_number<double>(key, value);
  } else if (key == "S") {
    c.schedule.interval = parse_number<int64_t>(key, value);
  } else if (key == "gamma") {
    c.schedule.estimation_steps = parse_number<int64_t>(key, value);
  } else if (key == "T") {
    c.schedule.total_steps = parse_number<int64_t>(key, value);
  } else if (key == "batch") {
    c.batch = parse_number<std::size_t>(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<uint64_t>(key, value);
  } else if (key == "quantize") {
    c.quantize = parse_bool(key, value);
  } else if (key == "quant_block") {
    c.quant_block = parse_number<std::size_t>(key, value);
  } else if (key == "drop_criterion") {
    c.drop_criterion = parse_drop_criterion(value);
  } else if (key == "beta1") {
    c.beta1 = parse_number<double>(key, value);
  } else if (key == "beta2") {
    c.beta2 = parse_number<double>(key, value);
  } else if (key == "eps") {
    c.eps = parse_number<double>(key, value);
  } else if (key == "sm3_accumulation") {
    if (value == "dense") {
      c.sm3_accumulation = Sm3Accumulation::kDense;
    } else if (value == "active") {
      c.sm3_accumulation = Sm3Accumulation::kActive;
    } else {
      throw ConfigError("sm3_accumulation must be dense or active");
    }
  } else if (key == "seed_age") {
    c.seed_age = parse_number<uint32_t>(key, value);
  } else if (key == "hidden") {
    c.hidden = parse_list(key, value);
  } else if (key == "activation") {
    c.activation = parse_activation(value);
  } else if (key == "pretrain_steps") {
    c.pretrain_steps = parse_number<int64_t>(key, value);
  } else if (key == "pretrain_lr") {
    c.pretrain_lr = parse_number<double>(key, value);
  } else if (key == "lora_rank") {
    c.lora_rank = parse_number<std::size_t>(key, value);
  } else if (key == "lora_alpha") {
    c.lora_alpha = parse_number<double>(key, value);
  } else if (key == "lora_dropout") {
    c.lora_dropout = parse_number<double>(key, value);
  } else if (key == "log_wall_time") {
    c.log_wall_time = parse_bool(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::stringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    try {
      apply_setting(c, t.substr(0, eq), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const RunConfig& c) {
  std::ostringstream o;
  o << "method=" << to_string(c.method) << '\n'
    << "density=" << fmt(c.density) << '\n';
  if (c.lr) o << "lr=" << fmt(*c.lr) << '\n';
  o << "lambda=" << fmt(c.lambda) << '\n'
    << "schedule=" << to_string(c.schedule.kind) << '\n'
    << "xi=" << fmt(c.schedule.xi) << '\n'
    << "S=" << c.schedule.interval << '\n'
    << "gamma=" << c.schedule.estimation_steps << '\n'
    << "T=" << c.schedule.total_steps << '\n'
    << "batch=" << c.batch << '\n'
    << "seed=" << c.seed << '\n'
    << "quantize=" << (c.quantize ? "true" : "false") << '\n'
    << "quant_block=" << c.quant_block << '\n'
    << "drop_criterion=" << to_string(c.drop_criterion) << '\n'
    << "beta1=" << fmt(c.beta1) << '\n'
    << "beta2=" << fmt(c.beta2) << '\n'
    << "eps=" << fmt(c.eps) << '\n'
    << "sm3_accumulation=" << (c.sm3_accumulation == Sm3Accumulation::kDense ? "dense" : "active")
    << '\n';
  if (c.seed_age) o << "seed_age=" << *c.seed_age << '\n';
  o << "hidden=" << join(c.hidden) << '\n'
    << "activation=" << (c.activation == Activation::kRelu ? "relu" : "tanh") << '\n'
    << "pretrain_steps=" << c.pretrain_steps << '\n'
    << "pretrain_lr=" << fmt(c.pretrain_lr) << '\n'
    << "lora_rank=" << c.lora_rank << '\n'
    << "lora_alpha=" << fmt(c.lora_alpha) << '\n'
    << "lora_dropout=" << fmt(c.lora_dropout) << '\n'
    << "log_wall_time=" << (c.log_wall_time ? "true" : "false") << '\n';
  const TaskConfig& t = c.task;
  o << "task.kind=" << to_string(t.kind) << '\n'
    << "task.seed=" << t.seed << '\n'
    << "task.input_dim=" << t.input_dim << '\n'
    << "task.output_dim=" << t.output_dim << '\n'
    << "task.teacher_hidden=" << join(t.teacher_hidden) << '\n'
    << "task.train_samples=" << t.train_samples << '\n'
    << "task.test_samples=" << t.test_samples << '\n'
    << "task.shift_fraction=" << fmt(t.shift_fraction) << '\n'
    << "task.shift_magnitude=" << fmt(t.shift_magnitude) << '\n'
    << "task.noise=" << fmt(t.noise) << '\n';
  if (t.kind == TaskKind::kCsv) {
    o << "task.csv_a_train=" << t.csv_a_train << '\n'
      << "task.csv_a_test=" << t.csv_a_test << '\n'
      << "task.csv_b_train=" << t.csv_b_train << '\n'
      << "task.csv_b_test=" << t.csv_b_test << '\n'
      << "task.csv_targets=" << t.csv_targets << '\n'
      << "task.csv_classify=" << (t.csv_classify ? "true" : "false") << '\n';
  }
  return o.str();
}

}  // namespace spiel

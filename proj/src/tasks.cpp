// SPDX-License-Identifier: Apache-2.0

#include "spiel/tasks.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "spiel/error.hpp"

namespace spiel {

TaskKind parse_task_kind(const std::string& name) {
  if (name == "regression-shift") return TaskKind::kRegressionShift;
  if (name == "classification-shift") return TaskKind::kClassificationShift;
  if (name == "csv") return TaskKind::kCsv;
  throw ConfigError("unknown task kind '" + name +
                    "' (expected regression-shift, classification-shift or csv)");
}

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kRegressionShift:
      return "regression-shift";
    case TaskKind::kClassificationShift:
      return "classification-shift";
    case TaskKind::kCsv:
      return "csv";
  }
  return "?";
}

void TaskConfig::validate() const {
  if (kind == TaskKind::kCsv) {
    if (csv_a_train.empty() || csv_a_test.empty() || csv_b_train.empty() || csv_b_test.empty()) {
      throw ConfigError("csv task needs task.csv_a_train, task.csv_a_test, task.csv_b_train and "
                        "task.csv_b_test");
    }
    return;
  }
  if (input_dim == 0 || output_dim == 0) throw ConfigError("task dimensions must be positive");
  if (kind == TaskKind::kClassificationShift && output_dim < 2) {
    throw ConfigError("classification task needs at least two classes");
  }
  if (train_samples == 0 || test_samples == 0) throw ConfigError("task sample counts must be positive");
  if (!(shift_fraction >= 0.0 && shift_fraction <= 1.0)) {
    throw ConfigError("task.shift_fraction must lie in [0, 1]");
  }
  if (!(noise >= 0.0)) throw ConfigError("task.noise must be non-negative");
}

std::vector<uint64_t> sample_without_replacement(uint64_t n, uint64_t k, std::mt19937_64& rng) {
  if (k > n) throw Error("cannot sample " + std::to_string(k) + " of " + std::to_string(n));
  std::vector<uint64_t> out;
  out.reserve(k);
  uint64_t needed = k;
  for (uint64_t i = 0; i < n && needed > 0; ++i) {
    std::uniform_int_distribution<uint64_t> dist(0, n - i - 1);
    if (dist(rng) < needed) {
      out.push_back(i);
      --needed;
    }
  }
  return out;
}

template <typename T>
Batch<T> sample_batch(const Batch<T>& data, std::size_t size, std::mt19937_64& rng) {
  if (data.size() == 0) throw Error("cannot sample from an empty data set");
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  Batch<T> out;
  const std::size_t d_in = data.inputs.cols();
  out.inputs = Matrix<T>(size, d_in);
  const bool has_targets = !data.targets.empty();
  if (has_targets) out.targets = Matrix<T>(size, data.targets.cols());
  if (!data.labels.empty()) out.labels.resize(size);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t r = pick(rng);
    std::copy(data.inputs.row(r), data.inputs.row(r) + d_in, out.inputs.row(i));
    if (has_targets) {
      std::copy(data.targets.row(r), data.targets.row(r) + data.targets.cols(), out.targets.row(i));
    }
    if (!data.labels.empty()) out.labels[i] = data.labels[r];
  }
  return out;
}

namespace {

struct Teacher {
  MlpSpec spec;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

Teacher make_teacher(const TaskConfig& c, std::mt19937_64& rng) {
  Teacher t;
  const LossKind loss =
      c.kind == TaskKind::kClassificationShift ? LossKind::kSoftmaxCrossEntropy : LossKind::kMse;
  t.spec = MlpSpec::make(c.input_dim, c.teacher_hidden, c.output_dim, Activation::kTanh, loss);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& layer : t.spec.layers) {
    const double std = 1.0 / std::sqrt(static_cast<double>(layer.d_in));
    std::vector<double> w(layer.d_in * layer.d_out);
    for (auto& v : w) v = normal(rng) * std;
    std::vector<double> b(layer.d_out);
    for (auto& v : b) v = 0.1 * normal(rng);
    t.weights.push_back(std::move(w));
    t.biases.push_back(std::move(b));
  }
  return t;
}

void shift_teacher(Teacher& t, const TaskConfig& c, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < t.weights.size(); ++l) {
    auto& w = t.weights[l];
    const double std = 1.0 / std::sqrt(static_cast<double>(t.spec.layers[l].d_in));
    const auto count = static_cast<uint64_t>(std::llround(c.shift_fraction * static_cast<double>(w.size())));
    for (uint64_t idx : sample_without_replacement(w.size(), count, rng)) {
      w[idx] += c.shift_magnitude * std * normal(rng);
    }
  }
}

template <typename T>
Batch<T> label_with(const Teacher& teacher, const TaskConfig& c, std::size_t n,
                    std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Batch<double> x;
  x.inputs = Matrix<double>(n, c.input_dim);
  for (auto& v : x.inputs.flat()) v = normal(rng);
  const bool classify = c.kind == TaskKind::kClassificationShift;
  if (classify) {
    x.labels.assign(n, 0);
  } else {
    x.targets = Matrix<double>(n, c.output_dim);
  }
  Network<double> net(teacher.spec);
  DenseWeights<double> source(teacher.spec, teacher.weights, teacher.biases);
  net.forward(source, x);
  const auto& y = net.output();

  Batch<T> out;
  out.inputs = Matrix<T>(n, c.input_dim);
  for (std::size_t i = 0; i < x.inputs.size(); ++i) {
    out.inputs.flat()[i] = static_cast<T>(x.inputs.flat()[i]);
  }
  if (classify) {
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = y.row(i);
      out.labels[i] = static_cast<uint32_t>(std::max_element(row, row + y.cols()) - row);
    }
  } else {
    out.targets = Matrix<T>(n, c.output_dim);
    for (std::size_t i = 0; i < y.size(); ++i) {
      out.targets.flat()[i] = static_cast<T>(y.flat()[i] + c.noise * normal(rng));
    }
  }
  return out;
}

}  // namespace

template <typename T>
TaskData<T> make_task(const TaskConfig& c) {
  c.validate();
  TaskData<T> data;
  if (c.kind == TaskKind::kCsv) {
    data.train_a = read_csv<T>(c.csv_a_train, c.csv_targets, c.csv_classify);
    data.test_a = read_csv<T>(c.csv_a_test, c.csv_targets, c.csv_classify);
    data.train_b = read_csv<T>(c.csv_b_train, c.csv_targets, c.csv_classify);
    data.test_b = read_csv<T>(c.csv_b_test, c.csv_targets, c.csv_classify);
    data.loss = c.csv_classify ? LossKind::kSoftmaxCrossEntropy : LossKind::kMse;
    data.input_dim = data.train_a.inputs.cols();
    data.output_dim = c.csv_classify ? c.output_dim : c.csv_targets;
    for (const Batch<T>* b : {&data.test_a, &data.train_b, &data.test_b}) {
      if (b->inputs.cols() != data.input_dim) throw ConfigError("csv files disagree on input width");
    }
    if (c.csv_classify) {
      for (const Batch<T>* b : {&data.train_a, &data.test_a, &data.train_b, &data.test_b}) {
        for (uint32_t label : b->labels) {
          if (label >= data.output_dim) {
            throw ConfigError("csv label " + std::to_string(label) + " exceeds task.output_dim");
          }
        }
      }
    }
    return data;
  }
  std::mt19937_64 rng(c.seed);
  Teacher teacher_a = make_teacher(c, rng);
  Teacher teacher_b = teacher_a;
  shift_teacher(teacher_b, c, rng);
  data.loss = teacher_a.spec.loss;
  data.input_dim = c.input_dim;
  data.output_dim = c.output_dim;
  data.train_a = label_with<T>(teacher_a, c, c.train_samples, rng);
  data.test_a = label_with<T>(teacher_a, c, c.test_samples, rng);
  data.train_b = label_with<T>(teacher_b, c, c.train_samples, rng);
  data.test_b = label_with<T>(teacher_b, c, c.test_samples, rng);
  return data;
}

template <typename T>
Batch<T> read_csv(const std::string& path, std::size_t target_columns, bool classify) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open csv file " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": not a number: '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": inconsistent column count");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("csv file " + path + " has no rows");
  const std::size_t width = rows.front().size();
  const std::size_t n_targets = classify ? 1 : target_columns;
  if (width <= n_targets) throw ConfigError("csv file " + path + " has no feature columns");
  const std::size_t d_in = width - n_targets;
  Batch<T> b;
  b.inputs = Matrix<T>(rows.size(), d_in);
  if (classify) {
    b.labels.resize(rows.size());
  } else {
    b.targets = Matrix<T>(rows.size(), n_targets);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < d_in; ++j) b.inputs(i, j) = static_cast<T>(rows[i][j]);
    if (classify) {
      const double label = rows[i][d_in];
      if (label < 0 || label != std::floor(label)) {
        throw ConfigError(path + ": row " + std::to_string(i + 1) + " has a non-integer label");
      }
      b.labels[i] = static_cast<uint32_t>(label);
    } else {
      for (std::size_t j = 0; j < n_targets; ++j) b.targets(i, j) = static_cast<T>(rows[i][d_in + j]);
    }
  }
  return b;
}

#define SPIEL_INSTANTIATE(T)                                                             \
  template TaskData<T> make_task<T>(const TaskConfig&);                                  \
  template Batch<T> sample_batch<T>(const Batch<T>&, std::size_t, std::mt19937_64&);     \
  template Batch<T> read_csv<T>(const std::string&, std::size_t, bool);

SPIEL_INSTANTIATE(float)
SPIEL_INSTANTIATE(double)
#undef SPIEL_INSTANTIATE

}  // namespace spiel

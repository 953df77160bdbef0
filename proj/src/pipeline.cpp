// SPDX-License-Identifier: Apache-2.0

#include "spiel/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "spiel/binary_io.hpp"
#include "spiel/checkpoint.hpp"
#include "spiel/error.hpp"

namespace spiel {
namespace {

constexpr std::string_view kBaseMagic{"SPBM", 4};
constexpr uint32_t kBaseVersion = 1;

}  // namespace

void write_base_model(std::ostream& out, const BaseModel& model) {
  io::write_bytes(out, kBaseMagic);
  io::write_le<uint32_t>(out, kBaseVersion);
  io::write_le<uint8_t>(out, static_cast<uint8_t>(model.spec.loss));
  io::write_le<uint32_t>(out, static_cast<uint32_t>(model.spec.layers.size()));
  for (const auto& l : model.spec.layers) {
    io::write_le<uint64_t>(out, l.d_in);
    io::write_le<uint64_t>(out, l.d_out);
    io::write_le<uint8_t>(out, static_cast<uint8_t>(l.activation));
  }
  const auto& subs = model.store.subvectors();
  io::write_le<uint32_t>(out, static_cast<uint32_t>(subs.size()));
  for (const auto& s : subs) {
    io::write_le<uint32_t>(out, static_cast<uint32_t>(s.name().size()));
    io::write_bytes(out, s.name());
    io::write_le<uint64_t>(out, s.rows());
    io::write_le<uint64_t>(out, s.cols());
    if (s.is_quantized()) {
      io::write_le<uint8_t>(out, 1);
      write_quantized(out, s.quantized());
    } else {
      io::write_le<uint8_t>(out, 0);
      for (float v : s.dense()) io::write_f32(out, v);
    }
  }
}

BaseModel read_base_model(std::istream& in) {
  if (io::read_bytes(in, kBaseMagic.size(), "magic") != kBaseMagic) throw FormatError("not a base model (bad magic)");
  const auto version = io::read_le<uint32_t>(in, "version");
  if (version != kBaseVersion) {
    throw FormatError("unsupported base model version " + std::to_string(version));
  }
  BaseModel m;
  const auto loss = io::read_le<uint8_t>(in, "loss");
  if (loss > 1) throw FormatError("unknown loss kind " + std::to_string(loss));
  m.spec.loss = static_cast<LossKind>(loss);
  const auto n_layers = io::read_le<uint32_t>(in, "layer count");
  if (n_layers == 0 || n_layers > 64) throw FormatError("implausible layer count");
  for (uint32_t l = 0; l < n_layers; ++l) {
    LayerSpec layer;
    layer.d_in = io::read_le<uint64_t>(in, "d_in");
    layer.d_out = io::read_le<uint64_t>(in, "d_out");
    const auto act = io::read_le<uint8_t>(in, "activation");
    if (act > 2) throw FormatError("unknown activation " + std::to_string(act));
    layer.activation = static_cast<Activation>(act);
    layer.weight = "layer" + std::to_string(l) + ".weight";
    layer.bias = "layer" + std::to_string(l) + ".bias";
    m.spec.layers.push_back(layer);
  }
  try {
    m.spec.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("invalid network in base model: ") + e.what());
  }
  const auto n_subs = io::read_le<uint32_t>(in, "subvector count");
  for (uint32_t i = 0; i < n_subs; ++i) {
    const auto len = io::read_le<uint32_t>(in, "name length");
    if (len > 4096) throw FormatError("implausible subvector name length");
    const std::string name = io::read_bytes(in, len, "name");
    const auto rows = io::read_le<uint64_t>(in, "rows");
    const auto cols = io::read_le<uint64_t>(in, "cols");
    if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20)) {
      throw FormatError("implausible shape for '" + name + "'");
    }
    const auto storage = io::read_le<uint8_t>(in, "storage");
    try {
      if (storage == 0) {
        std::vector<float> values(rows * cols);
        for (auto& v : values) v = io::read_f32(in, "values");
        m.store.add(ParamSubvector<float>(name, rows, cols, std::move(values)));
      } else if (storage == 1) {
        QuantizedTensor q = read_quantized(in);
        if (q.rows != rows || q.cols != cols) throw FormatError("quantized shape mismatch for '" + name + "'");
        m.store.add(ParamSubvector<float>(name, std::move(q)));
      } else {
        throw FormatError("unknown storage kind " + std::to_string(storage));
      }
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw FormatError(e.what());
    }
  }
  for (const auto& l : m.spec.layers) {
    const auto* w = m.store.find(l.weight);
    const auto* b = m.store.find(l.bias);
    if (w == nullptr || b == nullptr || w->rows() != l.d_in || w->cols() != l.d_out ||
        b->size() != l.d_out || b->is_quantized()) {
      throw FormatError("base model tensors do not match its network");
    }
  }
  return m;
}

void save_base_model(const BaseModel& model, const std::filesystem::path& path) {
  atomic_write(path, [&](std::ostream& out) { write_base_model(out, model); });
}

BaseModel load_base_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open base model " + path.string());
  return read_base_model(in);
}

MlpSpec network_for(const RunConfig& config, const TaskData<float>& data) {
  return MlpSpec::make(data.input_dim, config.hidden, data.output_dim, config.activation, data.loss);
}

std::string metrics_line(const StepMetrics& m, double wall_time_s) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["loss"] = m.loss;
  j["churn"] = m.churn;
  j["grown"] = m.grown;
  j["reinserted"] = m.reinserted;
  j["density"] = m.density;
  j["persistent_scalars"] = m.persistent_scalars;
  j["param_grad_madds"] = m.param_grad_madds;
  j["dense_grad"] = m.dense_grad;
  if (wall_time_s >= 0.0) j["wall_time_s"] = wall_time_s;
  return j.dump();
}

namespace {

// Appends metrics lines, optionally with elapsed wall time.
class MetricsLog {
 public:
  explicit MetricsLog(bool wall) : wall_(wall), start_(std::chrono::steady_clock::now()) {}
  void add(const StepMetrics& m) {
    double t = -1.0;
    if (wall_) {
      t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }
    text_ += metrics_line(m, t);
    text_ += '\n';
  }
  std::string take() { return std::move(text_); }

 private:
  bool wall_;
  std::chrono::steady_clock::time_point start_;
  std::string text_;
};

std::string histogram_csv(const std::vector<std::pair<uint32_t, uint64_t>>& hist) {
  std::string out = "grown_at_step,count\n";
  for (const auto& [step, count] : hist) {
    out += std::to_string(step) + "," + std::to_string(count) + "\n";
  }
  return out;
}

}  // namespace

PretrainResult pretrain(const RunConfig& config, const TaskData<float>& data) {
  config.validate();
  const MlpSpec spec = network_for(config, data);
  std::vector<std::vector<float>> w, b;
  init_dense(spec, derive_seed(config.seed, Stream::kInit), w, b);
  AdamHyper h;
  h.lr = config.pretrain_lr;
  h.beta1 = config.beta1;
  h.beta2 = config.beta2;
  h.eps = config.eps;
  DenseTrainer<float> trainer(spec, std::move(w), std::move(b), data.train_a, h, config.batch,
                              config.pretrain_steps, derive_seed(config.seed, Stream::kPretrainData),
                              true);
  MetricsLog log(config.log_wall_time);
  trainer.run([&](const StepMetrics& m) { log.add(m); });
  PretrainResult r;
  r.base.spec = spec;
  r.base.store = store_from_dense(spec, trainer.weights(), trainer.biases());
  r.metrics_jsonl = log.take();
  Network<float> net(spec);
  SparseWeights<float> source(r.base.store, nullptr);
  r.test_a = evaluate(net, source, data.test_a);
  return r;
}

BaseModel prepare_base(const RunConfig& config, const BaseModel& base) {
  if (!config.quantize) return base;
  bool any_dense = false;
  for (const auto& l : base.spec.layers) any_dense |= !base.store.at(l.weight).is_quantized();
  if (!any_dense) return base;
  std::vector<std::vector<float>> w, b;
  dense_from_store(base.spec, base.store, w, b);
  BaseModel out;
  out.spec = base.spec;
  out.store = store_from_dense(base.spec, w, b, config.quant_block);
  return out;
}

std::string EvalSummary::to_json() const {
  nlohmann::ordered_json j;
  j["base"]["task_a"] = {{"loss", base_a.loss}, {"accuracy", base_a.accuracy}};
  j["base"]["task_b"] = {{"loss", base_b.loss}, {"accuracy", base_b.accuracy}};
  j["tuned"]["task_a"] = {{"loss", tuned_a.loss}, {"accuracy", tuned_a.accuracy}};
  j["tuned"]["task_b"] = {{"loss", tuned_b.loss}, {"accuracy", tuned_b.accuracy}};
  return j.dump(2) + "\n";
}

EvalSummary evaluate_delta(const BaseModel& base, const DeltaModel<float>* delta,
                           const TaskData<float>& data) {
  if (delta != nullptr) delta->check_against(base.store);
  Network<float> net(base.spec);
  SparseWeights<float> plain(base.store, nullptr);
  SparseWeights<float> tuned(base.store, delta);
  EvalSummary s;
  s.base_a = evaluate(net, plain, data.test_a);
  s.base_b = evaluate(net, plain, data.test_b);
  s.tuned_a = evaluate(net, tuned, data.test_a);
  s.tuned_b = evaluate(net, tuned, data.test_b);
  return s;
}

FinetuneResult finetune(const RunConfig& config, const BaseModel& raw_base,
                        const TaskData<float>& data) {
  config.validate();
  if (raw_base.spec.input_dim() != data.input_dim || raw_base.spec.output_dim() != data.output_dim) {
    throw ConfigError("base model dimensions do not match the task");
  }
  const BaseModel base = prepare_base(config, raw_base);
  FinetuneResult r;
  MetricsLog log(config.log_wall_time);
  auto record = [&](const StepMetrics& m) {
    log.add(m);
    r.steps.push_back(m);
  };
  if (is_sparse(config.method)) {
    SparseTrainer<float> trainer(config, base.spec, base.store, data.train_b);
    trainer.run(record);
    r.delta = trainer.deltas();
    r.memory = trainer.memory();
    r.age_histogram_csv = histogram_csv(trainer.age_histogram());
  } else if (config.method == Method::kFull) {
    auto trainer = make_full_finetune(config, base.spec, base.store, data.train_b);
    trainer.run(record);
    r.delta = dense_delta(base.spec, base.store, trainer.weights());
    r.memory = full_finetune_memory<float>(base.spec);
    r.age_histogram_csv = histogram_csv({{0u, r.delta.d_phi()}});
  } else {
    LoraTrainer<float> trainer(config, base.spec, base.store, data.train_b);
    trainer.run(record);
    r.delta = trainer.merged_delta();
    r.memory = trainer.memory();
    r.age_histogram_csv = histogram_csv({{0u, r.memory.d_phi}});
  }
  r.metrics_jsonl = log.take();
  r.eval = evaluate_delta(base, &r.delta, data);
  return r;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  atomic_write(path, [&](std::ostream& out) { out.write(text.data(), static_cast<std::streamsize>(text.size())); });
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_finetune_artifacts(const FinetuneResult& result, const RunConfig& config,
                              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  // The checkpoint goes last: its presence marks a complete run.
  write_text_file(dir / "metrics.jsonl", result.metrics_jsonl);
  write_text_file(dir / "age_histogram.csv", result.age_histogram_csv);
  write_text_file(dir / "memory.json", result.memory.to_json());
  write_text_file(dir / "eval.json", result.eval.to_json());
  write_text_file(dir / "config.txt", to_text(config));
  save_checkpoint(result.delta, dir / "delta.spiel");
}

}  // namespace spiel

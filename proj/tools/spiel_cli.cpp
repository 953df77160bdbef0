// SPDX-License-Identifier: Apache-2.0
//
// spiel: pretrain / finetune / eval / compose / inspect / report-memory.
// Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spiel/checkpoint.hpp"
#include "spiel/config.hpp"
#include "spiel/error.hpp"
#include "spiel/pipeline.hpp"

namespace fs = std::filesystem;
using namespace spiel;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

RunConfig build_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig c = path.empty() ? RunConfig{} : load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  c.validate();
  return c;
}

int cmd_pretrain(const RunConfig& c, const fs::path& out) {
  const auto data = make_task<float>(c.task);
  const auto r = pretrain(c, data);
  fs::create_directories(out);
  write_text_file(out / "pretrain_metrics.jsonl", r.metrics_jsonl);
  write_text_file(out / "config.txt", to_text(c));
  save_base_model(r.base, out / "base.spbm");
  std::cout << "pretrained " << c.pretrain_steps << " steps; task A test loss " << r.test_a.loss;
  if (r.base.spec.loss == LossKind::kSoftmaxCrossEntropy) std::cout << ", accuracy " << r.test_a.accuracy;
  std::cout << "\nwrote " << (out / "base.spbm").string() << '\n';
  return 0;
}

int cmd_finetune(const RunConfig& c, const std::string& base_path, const fs::path& out) {
  const auto data = make_task<float>(c.task);
  BaseModel base;
  if (base_path.empty()) {
    auto pre = pretrain(c, data);
    fs::create_directories(out);
    save_base_model(pre.base, out / "base.spbm");
    base = std::move(pre.base);
  } else {
    base = load_base_model(base_path);
  }
  const auto r = finetune(c, base, data);
  write_finetune_artifacts(r, c, out);
  std::cout << "method " << to_string(c.method) << ", " << r.steps.size() << " steps, d_phi "
            << r.delta.d_phi() << '\n'
            << "task B test loss: base " << r.eval.base_b.loss << " -> tuned " << r.eval.tuned_b.loss
            << '\n'
            << "task A test loss: base " << r.eval.base_a.loss << " -> tuned " << r.eval.tuned_a.loss
            << '\n'
            << "artifacts in " << out.string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& c, const std::string& base_path, const std::string& delta_path) {
  const auto data = make_task<float>(c.task);
  const BaseModel base = prepare_base(c, load_base_model(base_path));
  DeltaModel<float> delta;
  if (!delta_path.empty()) delta = load_checkpoint<float>(delta_path);
  std::cout << evaluate_delta(base, delta_path.empty() ? nullptr : &delta, data).to_json();
  return 0;
}

int cmd_compose(const std::vector<std::string>& inputs, const fs::path& out) {
  DeltaModel<float> acc = load_checkpoint<float>(inputs.at(0));
  uint64_t overlap = 0;
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    const auto next = load_checkpoint<float>(inputs[i]);
    overlap += count_overlap(acc, next);
    acc = compose(acc, next);
  }
  save_checkpoint(acc, out);
  std::cout << "composed " << inputs.size() << " deltas: d_phi " << acc.d_phi()
            << ", overlapping positions " << overlap << '\n';
  return 0;
}

int cmd_inspect(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  in.seekg(0);
  if (std::string(magic, 4) == "SPBM") {
    const BaseModel m = read_base_model(in);
    std::cout << "base model: " << m.spec.layers.size() << " layers, loss "
              << (m.spec.loss == LossKind::kMse ? "mse" : "softmax-cross-entropy") << '\n';
    for (const auto& s : m.store.subvectors()) {
      std::cout << "  " << s.name() << "  " << s.rows() << "x" << s.cols()
                << (s.is_quantized() ? "  quantized (block " + std::to_string(s.quantized().block_size) + ")"
                                     : "  dense")
                << '\n';
    }
    return 0;
  }
  const auto model = read_checkpoint<float>(in);
  std::cout << "delta checkpoint: " << model.size() << " subvectors, d_phi " << model.d_phi() << '\n';
  for (const auto& e : model.entries()) {
    double sum_abs = 0.0;
    for (float v : e.slice.values) sum_abs += std::abs(static_cast<double>(v));
    std::cout << "  " << e.name << "  d_theta " << e.d_theta << "  d_phi " << e.slice.size()
              << "  density " << static_cast<double>(e.slice.size()) / static_cast<double>(e.d_theta)
              << "  mean|phi| " << (e.slice.empty() ? 0.0 : sum_abs / e.slice.size()) << '\n';
  }
  return 0;
}

int cmd_report_memory(const fs::path& target) {
  const fs::path file = fs::is_directory(target) ? target / "memory.json" : target;
  const auto report = MemoryReport::from_json(read_text_file(file));
  std::cout << report.table();
  const bool sparse = report.method == "spiel-ag" || report.method == "spiel-ma" ||
                      report.method == "fixed-mask";
  if (sparse && !report.within_bound()) {
    std::cerr << "error: persistent training state exceeds the linear bound\n";
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse fine-tuning harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string base_path;
  std::string delta_path;
  std::string out_dir;
  std::vector<std::string> inputs;
  std::string target;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "key=value config file");
    sub->add_option("-s,--set", overrides, "override one setting, key=value (repeatable)");
  };

  auto* pre = app.add_subcommand("pretrain", "train the dense base model on task A");
  add_config(pre);
  pre->add_option("-o,--out", out_dir, "output directory")->required();

  auto* fine = app.add_subcommand("finetune", "fine-tune on task B and write run artifacts");
  add_config(fine);
  fine->add_option("-b,--base", base_path, "base model (pretrained in-process when omitted)");
  fine->add_option("-o,--out", out_dir, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a base model with an optional delta");
  add_config(ev);
  ev->add_option("-b,--base", base_path, "base model")->required();
  ev->add_option("-d,--delta", delta_path, "delta checkpoint");

  auto* comp = app.add_subcommand("compose", "sum delta checkpoints");
  comp->add_option("inputs", inputs, "delta checkpoints")->required()->expected(2, -1);
  comp->add_option("-o,--out", out_dir, "output checkpoint")->required();

  auto* insp = app.add_subcommand("inspect", "summarize a delta checkpoint or base model");
  insp->add_option("file", target, "file to inspect")->required();

  auto* mem = app.add_subcommand("report-memory", "print the accounting table of a run");
  mem->add_option("run", target, "run directory or memory.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*pre) return cmd_pretrain(build_config(config_path, overrides), out_dir);
    if (*fine) return cmd_finetune(build_config(config_path, overrides), base_path, out_dir);
    if (*ev) return cmd_eval(build_config(config_path, overrides), base_path, delta_path);
    if (*comp) return cmd_compose(inputs, out_dir);
    if (*insp) return cmd_inspect(target);
    if (*mem) return cmd_report_memory(target);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

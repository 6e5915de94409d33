#include "cafct/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cafct/checkpoint.hpp"
#include "cafct/dataset.hpp"
#include "cafct/gradcheck.hpp"
#include "cafct/train.hpp"

namespace cafct::cli {

namespace {

int cmd_gen_data(int n, int size, uint64_t seed, const std::string& out_dir) {
  const auto samples = generate_synthetic_dataset(n, size, seed);
  write_dataset(samples, out_dir);
  std::cout << "wrote " << samples.size() << " samples to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path) {
  const TrainConfig cfg = parse_config_file(config_path);
  train(cfg, std::cout);
  std::cout << "checkpoint=" << cfg.checkpoint_path << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& report_path) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  const auto data = load_dataset(data_dir);
  const auto [global, per_image_mean] = evaluate(loaded.model, data, &std::cout);
  const std::string block = metrics_to_kv(global) + metrics_to_kv(per_image_mean);
  std::cout << block;
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw std::runtime_error("eval: cannot write report to " + report_path);
    out << block;
  }
  return 0;
}

int cmd_infer(const std::string& checkpoint_path, const std::string& image_path,
              const std::string& out_path, const std::string& prob_path) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  infer(loaded.model, image_path, out_path, prob_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_grad_check(const std::string& scope, uint64_t seed, bool corrupt) {
  const auto results = run_grad_check(scope, seed, corrupt);
  bool all_passed = true;
  for (const auto& r : results) {
    std::printf("%-30s worst=%.3e tol=%.0e %s\n", r.suite.c_str(), r.worst, r.tolerance,
                r.passed ? "PASS" : "FAIL");
    all_passed = all_passed && r.passed;
  }
  if (!all_passed) {
    std::fprintf(stderr, "grad-check: at least one suite exceeded its tolerance\n");
    return 1;
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"CAFCT hybrid CNN/Transformer segmentation toolkit"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic elliptical-lesion dataset");
  int gen_n = 100, gen_size = 64;
  uint64_t gen_seed = 0;
  std::string gen_out = "data";
  gen->add_option("--n", gen_n, "Number of samples")->required();
  gen->add_option("--size", gen_size, "Square image size")->required();
  gen->add_option("--seed", gen_seed, "Generator seed")->required();
  gen->add_option("--out-dir", gen_out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train from a flat key = value config file");
  std::string train_config;
  tr->add_option("--config", train_config, "Config file path")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset directory");
  std::string eval_ckpt, eval_data, eval_report;
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
  ev->add_option("--data-dir", eval_data, "Dataset directory")->required();
  ev->add_option("--report", eval_report, "Also write the metrics block to this file");

  auto* inf = app.add_subcommand("infer", "Predict a mask for one image");
  std::string infer_ckpt, infer_image, infer_out, infer_prob;
  inf->add_option("--checkpoint", infer_ckpt, "Checkpoint path")->required();
  inf->add_option("--image", infer_image, "Input PGM image")->required();
  inf->add_option("--out", infer_out, "Output PGM mask")->required();
  inf->add_option("--prob", infer_prob, "Optional output PGM probability map");

  auto* gc = app.add_subcommand("grad-check", "Run the finite-difference gradient suites");
  std::string gc_scope = "all";
  uint64_t gc_seed = 0;
  bool gc_corrupt = false;
  gc->add_option("--scope", gc_scope, "Module scope or 'all'");
  gc->add_option("--seed", gc_seed, "Suite seed");
  gc->add_flag("--self-test-corrupt", gc_corrupt,
               "Deliberately corrupt one gradient (negative-control fixture; must fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_n, gen_size, gen_seed, gen_out);
    if (tr->parsed()) return cmd_train(train_config);
    if (ev->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_report);
    if (inf->parsed()) return cmd_infer(infer_ckpt, infer_image, infer_out, infer_prob);
    if (gc->parsed()) return cmd_grad_check(gc_scope, gc_seed, gc_corrupt);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("cafct");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace cafct::cli

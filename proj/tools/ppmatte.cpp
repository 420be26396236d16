// Command-line front end: synth, train, eval, ablate, infer.

#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ppmatte/ppmatte.hpp"

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("invalid JSON in " + path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  using namespace ppmatte;
  CLI::App app{"ppmatte: trimap-free matting toolkit"};
  app.require_subcommand(1);

  std::string config, out, checkpoint, data, image, spec;
  bool export_taps = false;

  auto* synth = app.add_subcommand("synth", "Synthesize a composited dataset");
  synth->add_option("--config", config, "SynthConfig JSON")->required();
  synth->add_option("--out", out, "Output dataset directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", config, "TrainConfig JSON")->required();
  train_cmd->add_option("--out", out, "Output run directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset's test split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  eval->add_option("--data", data, "Dataset directory")->required();
  eval->add_option("--out", out, "Metrics CSV")->required();

  auto* ablate_cmd = app.add_subcommand("ablate", "Run an ablation study");
  ablate_cmd->add_option("--spec", spec, "AblationSpec JSON")->required();
  ablate_cmd->add_option("--out", out, "Output directory")->required();

  auto* infer_cmd = app.add_subcommand("infer", "Predict the alpha matte of one image");
  infer_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  infer_cmd->add_option("--image", image, "Input RGB PNG")->required();
  infer_cmd->add_option("--out", out, "Output alpha PNG")->required();
  infer_cmd->add_flag("--export-taps", export_taps, "Also write semantic and guidance feature images");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      auto cfg = read_json(config).get<SynthConfig>();
      const Dataset ds = assemble_dataset(cfg);
      write_dataset(ds, out);
      std::cout << "wrote " << ds.train.samples.size() << " train and " << ds.test.samples.size()
                << " test samples to " << out << '\n';
    } else if (train_cmd->parsed()) {
      auto cfg = read_json(config).get<TrainConfig>();
      const TrainResult r = train(cfg, out, &std::cout);
      std::cout << "final L_total=" << r.log.back().loss.total << "; checkpoint " << r.checkpoint.string() << '\n';
    } else if (eval->parsed()) {
      const Evaluation ev = evaluate_checkpoint(checkpoint, data, out);
      std::cout << "mean SAD=" << ev.mean.sad << " MSE=" << ev.mean.mse << " Grad=" << ev.mean.grad
                << " Conn=" << ev.mean.conn << " over " << ev.per_image.size() << " images\n";
    } else if (ablate_cmd->parsed()) {
      auto s = read_json(spec).get<AblationSpec>();
      const auto rows = ablate(s, out, &std::cout);
      write_ablation_table(std::cout, s.axis, rows);
    } else if (infer_cmd->parsed()) {
      for (const auto& p : infer(checkpoint, image, out, export_taps)) std::cout << "wrote " << p.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

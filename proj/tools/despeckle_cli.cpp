// Command-line front end: dataset synthesis, the three training phases,
// inference, and evaluation.
//
// Exit codes: 0 ok, 2 argument/config error, 3 I/O error, 4 numeric abort,
// 5 checkpoint-format error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dspk/config.hpp"
#include "dspk/kernels.hpp"
#include "dspk/metrics.hpp"
#include "dspk/specklesim.hpp"
#include "dspk/training.hpp"

namespace fs = std::filesystem;
using namespace dspk;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::vector<std::string> list_pgms(const std::string& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm")
      names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw IoError("no .pgm files in " + dir);
  return names;
}

std::vector<Image> load_dir(const std::string& dir, Quality tag) {
  // prefer the manifest when present (authoritative order)
  if (fs::exists(dir + "/manifest.txt"))
    return sim::load_manifest_images(dir, dir + "/manifest.txt");
  std::vector<Image> images;
  for (const auto& name : list_pgms(dir)) images.push_back(read_pgm(dir + "/" + name, tag));
  return images;
}

int cmd_simulate(const std::string& out, int n_low, int n_high, int size,
                 uint64_t seed, int max_inclusions) {
  auto low = sim::PsfProfile::low_quality();
  auto high = sim::PsfProfile::high_quality();
  sim::make_dataset(n_low, low, out + "/low", mix_seed(seed, 11), size,
                    max_inclusions);
  sim::make_dataset(n_high, high, out + "/high", mix_seed(seed, 22), size,
                    max_inclusions);
  std::cout << "wrote " << n_low << " low-quality and " << n_high
            << " high-quality images under " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& phase,
              const std::string& resume) {
  RunConfig rc = load_run_config(config_path);
  check(!rc.out_dir.empty(), "config: out_dir is required for training");
  check(!rc.low_dir.empty(), "config: data.low_dir is required");
  std::vector<Image> low =
      sim::load_manifest_images(rc.low_dir, rc.low_dir + "/manifest.txt");
  std::vector<Image> high;
  if (!rc.high_dir.empty())
    high = sim::load_manifest_images(rc.high_dir, rc.high_dir + "/manifest.txt");
  check(phase == "pretrain-g" || !high.empty(),
        "config: data.high_dir is required for this phase");

  std::error_code ec;
  fs::create_directories(rc.out_dir, ec);
  if (ec) throw IoError("cannot create " + rc.out_dir);

  train::Trainer trainer(rc.train, std::move(low), std::move(high));
  trainer.set_checkpoint_dir(rc.out_dir);
  std::ofstream log_file(rc.out_dir + "/train.log",
                         resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log_file) throw IoError("cannot open log in " + rc.out_dir);
  trainer.log().add_sink(&log_file);
  trainer.log().add_sink(&std::cout);

  if (!resume.empty()) {
    trainer.load(resume);
    trainer.normalize_phase();
  }

  if (phase == "pretrain-g") {
    check(trainer.state().phase == train::Phase::g_pre,
          "train: generator pretraining already completed in this checkpoint");
    trainer.pretrain_generator();
    trainer.save(rc.out_dir + "/ckpt_gpre_final.dspk");
    std::cout << "checkpoint: " << rc.out_dir + "/ckpt_gpre_final.dspk" << "\n";
  } else if (phase == "pretrain-d") {
    trainer.normalize_phase();
    check(trainer.state().phase == train::Phase::d_pre,
          "train: discriminator pretraining needs a completed pretrain-g state");
    trainer.pretrain_discriminator();
    trainer.save(rc.out_dir + "/ckpt_dpre_final.dspk");
    std::cout << "checkpoint: " << rc.out_dir + "/ckpt_dpre_final.dspk" << "\n";
  } else if (phase == "gan") {
    trainer.normalize_phase();
    check(trainer.state().phase == train::Phase::gan,
          "train: gan phase needs completed pretraining state");
    trainer.train_gan();
    trainer.save(rc.out_dir + "/ckpt_final.dspk");
    std::cout << "checkpoint: " << rc.out_dir + "/ckpt_final.dspk" << "\n";
  } else if (phase == "all") {
    trainer.run_all();
    trainer.save(rc.out_dir + "/ckpt_final.dspk");
    std::cout << "checkpoint: " << rc.out_dir + "/ckpt_final.dspk" << "\n";
  } else {
    throw ContractError("unknown phase: " + phase);
  }
  return 0;
}

int cmd_despeckle(const std::string& ckpt_path, const std::string& in,
                  const std::string& out) {
  train::Checkpoint c = train::load_checkpoint_file(ckpt_path);
  auto gen = train::generator_from_checkpoint(c);

  std::vector<std::pair<std::string, Image>> inputs;
  if (fs::is_directory(in)) {
    if (fs::exists(in + "/manifest.txt")) {
      for (const auto& e : sim::read_manifest(in + "/manifest.txt"))
        inputs.emplace_back(e.filename, read_pgm(in + "/" + e.filename, e.label));
    } else {
      for (const auto& name : list_pgms(in))
        inputs.emplace_back(name, read_pgm(in + "/" + name, Quality::low));
    }
  } else {
    if (!fs::exists(in)) throw IoError("input not found: " + in);
    inputs.emplace_back(fs::path(in).filename().string(),
                        read_pgm(in, Quality::low));
  }

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out);

  for (auto& [name, img] : inputs) {
    const double t0 = now_seconds();
    Tensor<float> x = data::to_tensor({img});
    Tensor<float> y = nn::generator_forward<float>(gen, x, Mode::infer, nullptr);
    auto outs = data::from_tensor(y, Quality::generated);
    const double dt = now_seconds() - t0;
    write_pgm(outs.front(), out + "/" + name);
    std::cout << name << " " << img.w << "x" << img.h << " "
              << dt << " s\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& ref_dir, const std::string& in_dir,
                 const std::string& desp_dir, const std::string& roi_path,
                 const std::string& report_path) {
  auto rois = metrics::read_roi_file(roi_path);
  auto reference = load_dir(ref_dir, Quality::high);
  auto input = load_dir(in_dir, Quality::low);
  auto despeckled = load_dir(desp_dir, Quality::generated);
  auto report = metrics::evaluate(reference, input, despeckled, rois, {});
  metrics::write_report_text(report, report_path);
  metrics::write_report_tsv(report, report_path + ".tsv");
  std::ifstream is(report_path);
  std::cout << is.rdbuf();
  std::cout << "report: " << report_path << " (+ .tsv)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unsupervised ultrasound despeckling: simulate, train, "
               "despeckle, evaluate"};
  app.require_subcommand(1);

  auto* sim_cmd = app.add_subcommand("simulate", "synthesize speckle datasets");
  std::string sim_out;
  int n_low = 40, n_high = 40, size = 128, max_inclusions = 3;
  uint64_t sim_seed = 1;
  sim_cmd->add_option("--out", sim_out, "output directory")->required();
  sim_cmd->add_option("--n-low", n_low, "low-quality image count");
  sim_cmd->add_option("--n-high", n_high, "high-quality image count");
  sim_cmd->add_option("--size", size, "image side length");
  sim_cmd->add_option("--seed", sim_seed, "master seed");
  sim_cmd->add_option("--max-inclusions", max_inclusions,
                      "max inclusions per phantom");

  auto* train_cmd = app.add_subcommand("train", "run training phases");
  std::string config_path, phase = "all", resume;
  train_cmd->add_option("--config", config_path, "run config (json)")->required();
  train_cmd->add_option("--phase", phase,
                        "pretrain-g | pretrain-d | gan | all");
  train_cmd->add_option("--resume", resume, "checkpoint to resume from");

  auto* desp_cmd = app.add_subcommand("despeckle", "run generator inference");
  std::string ckpt, in_path, out_path;
  desp_cmd->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  desp_cmd->add_option("--in", in_path, "input image or directory")->required();
  desp_cmd->add_option("--out", out_path, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "compute SSNR / PDF / KL report");
  std::string ref_dir, in_dir, desp_dir, roi_path, report_path;
  eval_cmd->add_option("--reference-dir", ref_dir, "high-quality images")->required();
  eval_cmd->add_option("--input-dir", in_dir, "low-quality inputs")->required();
  eval_cmd->add_option("--despeckled-dir", desp_dir, "generator outputs")->required();
  eval_cmd->add_option("--rois", roi_path, "roi spec file: label x y w h")->required();
  eval_cmd->add_option("--report", report_path, "report output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*sim_cmd)
      return cmd_simulate(sim_out, n_low, n_high, size, sim_seed, max_inclusions);
    if (*train_cmd) return cmd_train(config_path, phase, resume);
    if (*desp_cmd) return cmd_despeckle(ckpt, in_path, out_path);
    if (*eval_cmd)
      return cmd_evaluate(ref_dir, in_dir, desp_dir, roi_path, report_path);
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 5;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

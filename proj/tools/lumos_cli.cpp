// Command-line front end: dataset synthesis, ground-truth rendering,
// training, evaluation, ablation, gradient checks and aperture export.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "lumos/image_io.hpp"
#include "lumos/synthetic.hpp"
#include "lumos/trainer.hpp"

namespace fs = std::filesystem;
using namespace lumos;

namespace {

constexpr const char* kVersion = "lumos 0.1.0";

std::uint64_t fnv1a(std::istream& in, std::uint64_t h = 1469598103934665603ULL) {
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

// Hash of a file, or of every regular file under a directory (sorted paths,
// names included).
std::string content_hash(const fs::path& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& f : files) {
    std::istringstream name(fs::relative(f, fs::is_directory(path) ? path : path.parent_path()).generic_string());
    h = fnv1a(name, h);
    std::ifstream in(f, std::ios::binary);
    require(static_cast<bool>(in), Errc::Io, "cannot read " + f.string());
    h = fnv1a(in, h);
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

std::string timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* fixed = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(fixed, nullptr, 10));
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

struct Manifest {
  std::string command;
  std::vector<std::pair<std::string, fs::path>> inputs;
  std::string config;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), Errc::Io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), Errc::Io, "write failed for " + path.string());
}

void write_manifest(const fs::path& dir, const Manifest& m) {
  std::string text = "command = " + m.command + "\n";
  text += "tool_version = " + std::string(kVersion) + "\n";
  text += "timestamp = " + timestamp() + "\n";
  for (const auto& [name, path] : m.inputs) {
    text += "input." + name + " = " + path.generic_string() + " fnv1a64:" + content_hash(path) + "\n";
  }
  if (!m.config.empty()) text += "[config]\n" + m.config;
  write_text(dir / "manifest.txt", text);
}

std::string format_command(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) out += (i ? " " : "") + std::string(argv[i]);
  return out;
}

// --seed, else LUMOS_SEED, else whatever the config says.
void apply_seed(TrainConfig& cfg, const std::optional<std::uint64_t>& flag) {
  if (flag) {
    cfg.seed = *flag;
  } else if (const char* env = std::getenv("LUMOS_SEED")) {
    apply_setting(cfg, "seed", env);
  }
}

struct Split {
  std::vector<Scene> train, test;
};

Split split(std::vector<Scene> scenes, const TrainConfig& cfg) {
  if (cfg.train_count == 0) return {scenes, scenes};
  std::vector<std::string> ids;
  for (const auto& s : scenes) ids.push_back(s.id);
  const DatasetSplit ds = split_dataset(ids, cfg.train_count, cfg.seed);
  auto pick = [&](const std::vector<std::string>& names) {
    std::vector<Scene> out;
    for (const auto& n : names) {
      for (const auto& s : scenes) {
        if (s.id == n) out.push_back(s);
      }
    }
    return out;
  };
  Split out{pick(ds.train_scenes), pick(ds.test_scenes)};
  require(!out.test.empty(), Errc::BadCount, "train_count leaves no test scenes");
  return out;
}

void write_loss_csv(const fs::path& path, const std::vector<double>& history) {
  std::string text = "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, history[i]);
    text += buf;
  }
  write_text(path, text);
}

Tensor aperture_image(const Tensor& aperture, int cell_pixels) {
  const int l = aperture.dim(0);
  Tensor img({1, l * cell_pixels, l * cell_pixels});
  for (int y = 0; y < l * cell_pixels; ++y) {
    for (int x = 0; x < l * cell_pixels; ++x) img.at(0, y, x) = aperture.at(y / cell_pixels, x / cell_pixels);
  }
  return img;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coded time-division multiplexing light field display simulator"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  int jobs = 1;
  fs::path scene_dir, config_path, out_dir, dataset_dir, resume_path, ckpt_path, grid_path;
  int size = 8, scenes = 4, angular = 9, height = 64, width = 64;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "seed for all randomness (falls back to LUMOS_SEED)");
    cmd->add_option("--jobs", jobs, "concurrent scene workers; 1 is bit-reproducible")->check(CLI::PositiveNumber);
  };

  auto* synth = app.add_subcommand("synth", "write synthetic layered-plane scenes");
  synth->add_option("--out", out_dir, "dataset directory")->required();
  synth->add_option("--scenes", scenes, "scene count")->check(CLI::PositiveNumber);
  synth->add_option("--angular", angular, "views per axis (N)")->check(CLI::PositiveNumber);
  synth->add_option("--height", height)->check(CLI::PositiveNumber);
  synth->add_option("--width", width)->check(CLI::PositiveNumber);
  add_common(synth);

  auto* render = app.add_subcommand("render-gt", "render the ground-truth focal stack of one scene");
  render->add_option("--scene", scene_dir)->required();
  render->add_option("--config", config_path);
  render->add_option("--out", out_dir)->required();
  add_common(render);

  auto* train_cmd = app.add_subcommand("train", "optimize encoder and apertures");
  train_cmd->add_option("--dataset", dataset_dir)->required();
  train_cmd->add_option("--config", config_path);
  train_cmd->add_option("--out", out_dir)->required();
  train_cmd->add_option("--resume", resume_path, "continue from a checkpoint");
  add_common(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint against ground truth and the TDM baseline");
  eval_cmd->add_option("--ckpt", ckpt_path)->required();
  eval_cmd->add_option("--dataset", dataset_dir)->required();
  eval_cmd->add_option("--out", out_dir)->required();
  add_common(eval_cmd);

  auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate config variants");
  ablate_cmd->add_option("--grid", grid_path, "lines of 'name: key=value, ...'")->required();
  ablate_cmd->add_option("--config", config_path);
  ablate_cmd->add_option("--dataset", dataset_dir)->required();
  ablate_cmd->add_option("--out", out_dir)->required();
  add_common(ablate_cmd);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full pipeline");
  gradcheck->add_option("--size", size, "crop size")->check(CLI::Range(3, 64));
  add_common(gradcheck);

  auto* export_cmd = app.add_subcommand("export-apertures", "write learned apertures as CSV and PNG");
  export_cmd->add_option("--ckpt", ckpt_path)->required();
  export_cmd->add_option("--out", out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const std::string command = format_command(argc, argv);
    auto load_cfg = [&] {
      TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_config(config_path);
      apply_seed(cfg, seed);
      cfg.validate();
      return cfg;
    };
    auto prepare_out = [&] { fs::create_directories(out_dir); };

    if (*synth) {
      TrainConfig base;
      apply_seed(base, seed);
      prepare_out();
      for (int i = 0; i < scenes; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "scene_%03d", i);
        save_light_field(random_scene(angular, height, width, base.seed * 1000003ULL + i), out_dir / name);
      }
      write_manifest(out_dir, {command, {}, "seed = " + std::to_string(base.seed) + "\n"});
    } else if (*render) {
      const TrainConfig cfg = load_cfg();
      const LightField lf = load_light_field(scene_dir);
      const FocalStackSpec spec = cfg.stack_spec(lf.angular_resolution());
      const FocalStack stack = ground_truth_stack(lf, cfg.optics, spec);
      prepare_out();
      write_focal_stack(out_dir, stack.slices, spec.psi);
      Manifest m{command, {{"scene", scene_dir}}, canonical_text(cfg)};
      if (!config_path.empty()) m.inputs.emplace_back("config", config_path);
      write_manifest(out_dir, m);
    } else if (*train_cmd) {
      Checkpoint start;
      Manifest m{command, {{"dataset", dataset_dir}}, {}};
      if (!resume_path.empty()) {
        start = load_checkpoint(resume_path);
        m.inputs.emplace_back("resume", resume_path);
        if (!config_path.empty()) {
          // A config may extend the run; everything but the schedule must match.
          TrainConfig wanted = load_cfg();
          TrainConfig probe = wanted;
          probe.epochs = start.config.epochs;
          probe.checkpoint_every = start.config.checkpoint_every;
          require(canonical_text(probe) == canonical_text(start.config), Errc::ConfigMismatch,
                  "--config differs from the checkpoint in more than epochs/checkpoint_every");
          start.config = wanted;
        }
      } else {
        start = initial_checkpoint(load_cfg());
      }
      if (!config_path.empty()) m.inputs.emplace_back("config", config_path);
      m.config = canonical_text(start.config);
      const Split data = split(load_dataset(dataset_dir), start.config);
      prepare_out();
      TrainOptions options;
      options.jobs = jobs;
      options.diagnostic_dir = out_dir / "diagnostics";
      options.on_checkpoint = [&](const Checkpoint& c) {
        const fs::path path = out_dir / ("checkpoint_epoch_" + std::to_string(c.epoch) + ".bin");
        save_checkpoint(path, c);
      };
      const Checkpoint done = train(data.train, start, options);
      save_checkpoint(out_dir / "checkpoint.bin", done);
      write_loss_csv(out_dir / "loss.csv", done.loss_history);
      write_manifest(out_dir, m);
      std::printf("trained %d epochs, final loss %.6f\n", done.epoch,
                  done.loss_history.empty() ? 0.0 : done.loss_history.back());
    } else if (*eval_cmd) {
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const Split data = split(load_dataset(dataset_dir), ckpt.config);
      const EvalReport report = evaluate(ckpt, data.test, "model", jobs);
      prepare_out();
      write_text(out_dir / "report.txt", report_text(report));
      write_text(out_dir / "report.csv", report_csv(report));
      write_manifest(out_dir, {command, {{"ckpt", ckpt_path}, {"dataset", dataset_dir}}, canonical_text(ckpt.config)});
      const auto model = report.average("model", "ctdm");
      const auto base = report.average("model", "tdm");
      std::printf("ctdm psnr=%.4f ssim=%.4f | tdm psnr=%.4f ssim=%.4f\n", model.first, model.second, base.first,
                  base.second);
    } else if (*ablate_cmd) {
      const TrainConfig base = load_cfg();
      std::ifstream in(grid_path);
      require(static_cast<bool>(in), Errc::Io, "cannot read grid " + grid_path.string());
      std::stringstream text;
      text << in.rdbuf();
      const auto grid = parse_grid(text.str());
      const Split data = split(load_dataset(dataset_dir), base);
      const AblationResult result = ablate(grid, base, data.train, data.test, jobs);
      prepare_out();
      write_text(out_dir / "ablation.csv", ablation_table(result));
      write_text(out_dir / "report.txt", report_text(result.report));
      write_text(out_dir / "report.csv", report_csv(result.report));
      Manifest m{command, {{"grid", grid_path}, {"dataset", dataset_dir}}, canonical_text(base)};
      if (!config_path.empty()) m.inputs.emplace_back("config", config_path);
      write_manifest(out_dir, m);
      std::printf("%s", ablation_table(result).c_str());
    } else if (*gradcheck) {
      TrainConfig base;
      apply_seed(base, seed);
      const ad::GradCheckResult r = pipeline_grad_check(size, base.seed);
      std::printf("max_relative_error=%.3e max_abs_error=%.3e checks=%zu\n", r.max_relative_error, r.max_abs_error,
                  r.checks);
      return r.max_relative_error <= 1e-3 ? 0 : 3;
    } else if (*export_cmd) {
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      ApertureBank bank = ckpt.apertures;
      if (bank.mode == ApertureMode::BinaryRelaxed) bank.mode = ApertureMode::BinaryFrozen;
      const auto apertures = effective_apertures(bank);
      prepare_out();
      for (std::size_t i = 0; i < apertures.size(); ++i) {
        write_aperture_csv(out_dir / ("aperture_" + std::to_string(i) + ".csv"), apertures[i]);
        write_png(out_dir / ("aperture_" + std::to_string(i) + ".png"), aperture_image(apertures[i], 16));
      }
      write_manifest(out_dir, {command, {{"ckpt", ckpt_path}}, canonical_text(ckpt.config)});
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: Io: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lumos/autodiff.hpp"
#include "lumos/display.hpp"
#include "lumos/encoder.hpp"
#include "lumos/lightfield.hpp"
#include "lumos/metrics.hpp"
#include "lumos/optics.hpp"

namespace lumos {

/// Everything that determines a training run. Read from and written to a
/// flat `key = value` text file; see config_keys() for the vocabulary.
struct TrainConfig {
  OpticalConfig optics;

  ViewPattern view_pattern = ViewPattern::Corners4;
  std::vector<AngularIndex> custom_views;
  int images = 4;  // k

  int channels = 64;
  int blocks = 10;
  int kernel = 3;

  double beta = 2.0;
  int slices = 9;         // m
  double psi_max = 0.0;   // 0: calibrated from the light field grid
  int border = -1;        // -1: half the PSF kernel size

  ApertureMode aperture_mode = ApertureMode::Continuous;
  double temperature = 10.0;
  double temperature_final = 0.0;  // > 0: anneal geometrically to this over the epochs
  ApertureSymmetry symmetry = ApertureSymmetry::Free;

  bool learn_f = true;
  bool learn_apertures = true;
  int epochs = 10000;
  ad::AdamHyper adam;
  int crop = 128;
  std::uint64_t seed = 0;
  int train_count = 0;  // 0: train and evaluate on every scene
  int checkpoint_every = 0;

  /// Input view count n implied by the view pattern.
  int views() const;
  EncoderConfig encoder() const;
  int resolved_border() const;
  /// Relaxation temperature used during `epoch`.
  double temperature_at(int epoch) const;
  FocalStackSpec stack_spec(int angular_resolution) const;
  ViewSelection selection(int angular_resolution) const;
  void validate() const;
};

/// Recognized config keys with one-line descriptions.
const std::map<std::string, std::string>& config_keys();

/// Sets one key; unknown keys and malformed values raise BadConfig naming the key.
void apply_setting(TrainConfig& config, const std::string& key, const std::string& value);

/// Parses `key = value` lines; '#' starts a comment.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path);

/// Every key with its resolved value, sorted by key; round-trips exactly.
std::string canonical_text(const TrainConfig& config);

struct Scene {
  std::string id;
  LightField lf;
};

/// Loads every scene subdirectory of `root` (sorted by name); `root` itself
/// is treated as a single scene when it holds view files directly.
std::vector<Scene> load_dataset(const std::filesystem::path& root);

struct Checkpoint {
  TrainConfig config;
  EncoderWeights encoder;
  ApertureBank apertures;
  ad::AdamState encoder_adam;
  ad::AdamState aperture_adam;
  int epoch = 0;
  std::vector<double> loss_history;
};

/// Fresh parameters: He-initialized encoder, zero logits, zeroed Adam state.
Checkpoint initial_checkpoint(const TrainConfig& config);

/// Binary layout: "LUMOSCKP", u32 version, u64 length + canonical config
/// text, u64 epoch, u64 array count, arrays (u32 rank, u32 dims, float64
/// values), two i64 Adam step counts, u64 length + float64 loss history.
/// Arrays: encoder tensors, aperture logits, encoder Adam m then v,
/// aperture Adam m then v. All little-endian.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainOptions {
  /// Called after every `checkpoint_every` epochs and at the end.
  std::function<void(const Checkpoint&)> on_checkpoint;
  /// Written (checkpoint + aperture CSVs) before a NonFiniteLoss is raised.
  std::filesystem::path diagnostic_dir;
  int jobs = 1;
};

/// Runs epochs [start.epoch, config.epochs). One random crop per scene per
/// epoch, weighted L1 against the ground-truth focal stack, one Adam step
/// per scene on the parameters selected by learn_f / learn_apertures.
Checkpoint train(const std::vector<Scene>& scenes, Checkpoint start, const TrainOptions& options = {});

/// Focal stack the trained display shows for `lf`; binary modes are
/// evaluated with frozen apertures.
FocalStack render_trained(const Checkpoint& ckpt, const LightField& lf);

struct SceneRecord {
  std::string scene;
  std::string variant;
  std::string method;  // "ctdm" or "tdm"
  std::vector<double> psnr;
  std::vector<double> ssim;
  double psnr_mean = 0.0;
  double ssim_mean = 0.0;
};

struct EvalReport {
  std::vector<SceneRecord> records;

  /// Mean of the per-scene means for one (variant, method).
  std::pair<double, double> average(const std::string& variant, const std::string& method) const;
};

/// Per scene: trained display and TDM baseline against the ground truth,
/// clamped and border-excluded; PSNR/SSIM per slice and averaged.
EvalReport evaluate(const Checkpoint& ckpt, const std::vector<Scene>& scenes, const std::string& variant = "model",
                    int jobs = 1);

/// One line per record: `scene=... variant=... method=... psnr_mean=...
/// ssim_mean=... psnr=a,b,... ssim=a,b,...`.
std::string report_text(const EvalReport& report);
std::string report_csv(const EvalReport& report);

struct AblationVariant {
  std::string name;
  std::vector<std::pair<std::string, std::string>> settings;
};

/// Grid file: one variant per line, `name: key=value, key=value`.
std::vector<AblationVariant> parse_grid(const std::string& text);

struct AblationResult {
  EvalReport report;
  /// variant name -> (psnr, ssim) averaged over test scenes
  std::vector<std::pair<std::string, std::pair<double, double>>> rows;
  std::pair<double, double> baseline;
};

/// Trains `base` with each variant's overrides (shared seed and data order)
/// and evaluates on `test`. An empty grid runs `base` alone.
AblationResult ablate(const std::vector<AblationVariant>& grid, const TrainConfig& base,
                      const std::vector<Scene>& train_scenes, const std::vector<Scene>& test_scenes, int jobs = 1);

std::string ablation_table(const AblationResult& result);

/// Finite-difference check of the whole CTDM graph (encoder, continuous
/// apertures, Fourier PSFs, weighted L1) over every parameter, on a
/// `size` x `size` synthetic crop with n = 2, k = 2, l = 3, m = 2.
ad::GradCheckResult pipeline_grad_check(int size, std::uint64_t seed);

}  // namespace lumos

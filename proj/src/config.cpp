#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lumos/trainer.hpp"

namespace lumos {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  fail(Errc::BadConfig, "key '" + key + "': '" + v + "' is not a number");
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc{} && ptr == v.data() + v.size(), Errc::BadConfig,
          "key '" + key + "': '" + v + "' is not an integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(Errc::BadConfig, "key '" + key + "': '" + v + "' is not a boolean");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<AngularIndex> parse_views(const std::string& key, const std::string& v) {
  std::vector<AngularIndex> out;
  std::istringstream in(v);
  std::string item;
  while (in >> item) {
    const auto colon = item.find(':');
    require(colon != std::string::npos, Errc::BadConfig, "key '" + key + "': expected s:t pairs");
    out.push_back({static_cast<int>(to_int(key, item.substr(0, colon))),
                   static_cast<int>(to_int(key, item.substr(colon + 1)))});
  }
  return out;
}

}  // namespace

const std::map<std::string, std::string>& config_keys() {
  static const std::map<std::string, std::string> keys = {
      {"wavelength", "wavelength in meters"},
      {"focal_length", "eyepiece focal length in meters"},
      {"object_distance", "display-to-lens distance in meters"},
      {"pupil_extent", "physical width of the aperture region in meters"},
      {"pupil_grid", "pupil lattice size D (power of two)"},
      {"pupil_samples", "aperture region width in lattice samples"},
      {"oversampling", "fine PSF samples per image pixel"},
      {"aperture_resolution", "coded aperture cells per axis (l)"},
      {"view_pattern", "corners4 | grid3x3 | custom"},
      {"custom_views", "space-separated s:t pairs for view_pattern = custom"},
      {"images", "encoded image / aperture count (k)"},
      {"channels", "encoder feature width"},
      {"blocks", "encoder residual blocks"},
      {"kernel", "encoder conv kernel size"},
      {"beta", "focus weighting strength"},
      {"slices", "focal stack size (m)"},
      {"psi_max", "largest |defocus| in waves; 0 = calibrated to one pixel per view step"},
      {"border", "excluded border in pixels; -1 = half the PSF kernel size"},
      {"aperture_mode", "continuous | binary-relaxed | binary-frozen"},
      {"temperature", "binary relaxation temperature"},
      {"temperature_final", "anneal the temperature geometrically to this by the last epoch; 0 = constant"},
      {"symmetry", "free | mirrored4"},
      {"learn_f", "optimize the encoder (false: show the selected views directly)"},
      {"learn_apertures", "optimize the aperture logits"},
      {"epochs", "passes over the training scenes"},
      {"lr", "Adam learning rate"},
      {"adam_beta1", "Adam first-moment decay"},
      {"adam_beta2", "Adam second-moment decay"},
      {"adam_eps", "Adam epsilon"},
      {"crop", "training crop size in pixels"},
      {"seed", "seed for initialization, splits and crops"},
      {"train_count", "training scenes in the split; 0 = use every scene for both"},
      {"checkpoint_every", "epochs between checkpoints; 0 = only at the end"},
  };
  return keys;
}

void apply_setting(TrainConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  auto as_int = [&] { return static_cast<int>(to_int(key, v)); };
  if (key == "wavelength") c.optics.wavelength = to_double(key, v);
  else if (key == "focal_length") c.optics.focal_length = to_double(key, v);
  else if (key == "object_distance") c.optics.object_distance = to_double(key, v);
  else if (key == "pupil_extent") c.optics.pupil_extent = to_double(key, v);
  else if (key == "pupil_grid") c.optics.pupil_grid = as_int();
  else if (key == "pupil_samples") c.optics.pupil_samples = as_int();
  else if (key == "oversampling") c.optics.oversampling = as_int();
  else if (key == "aperture_resolution") c.optics.aperture_resolution = as_int();
  else if (key == "view_pattern") c.view_pattern = parse_view_pattern(v);
  else if (key == "custom_views") c.custom_views = parse_views(key, v);
  else if (key == "images") c.images = as_int();
  else if (key == "channels") c.channels = as_int();
  else if (key == "blocks") c.blocks = as_int();
  else if (key == "kernel") c.kernel = as_int();
  else if (key == "beta") c.beta = to_double(key, v);
  else if (key == "slices") c.slices = as_int();
  else if (key == "psi_max") c.psi_max = to_double(key, v);
  else if (key == "border") c.border = as_int();
  else if (key == "aperture_mode") c.aperture_mode = parse_aperture_mode(v);
  else if (key == "temperature") c.temperature = to_double(key, v);
  else if (key == "temperature_final") c.temperature_final = to_double(key, v);
  else if (key == "symmetry") c.symmetry = parse_aperture_symmetry(v);
  else if (key == "learn_f") c.learn_f = to_bool(key, v);
  else if (key == "learn_apertures") c.learn_apertures = to_bool(key, v);
  else if (key == "epochs") c.epochs = as_int();
  else if (key == "lr") c.adam.lr = to_double(key, v);
  else if (key == "adam_beta1") c.adam.beta1 = to_double(key, v);
  else if (key == "adam_beta2") c.adam.beta2 = to_double(key, v);
  else if (key == "adam_eps") c.adam.eps = to_double(key, v);
  else if (key == "crop") c.crop = as_int();
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_int(key, v));
  else if (key == "train_count") c.train_count = as_int();
  else if (key == "checkpoint_every") c.checkpoint_every = as_int();
  else fail(Errc::BadConfig, "unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, Errc::BadConfig, "line " + std::to_string(number) + ": expected key = value");
    apply_setting(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::Io, "cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string canonical_text(const TrainConfig& c) {
  std::map<std::string, std::string> kv;
  kv["wavelength"] = fmt(c.optics.wavelength);
  kv["focal_length"] = fmt(c.optics.focal_length);
  kv["object_distance"] = fmt(c.optics.object_distance);
  kv["pupil_extent"] = fmt(c.optics.pupil_extent);
  kv["pupil_grid"] = std::to_string(c.optics.pupil_grid);
  kv["pupil_samples"] = std::to_string(c.optics.pupil_samples);
  kv["oversampling"] = std::to_string(c.optics.oversampling);
  kv["aperture_resolution"] = std::to_string(c.optics.aperture_resolution);
  kv["view_pattern"] = to_string(c.view_pattern);
  std::string views;
  for (const auto& a : c.custom_views) views += (views.empty() ? "" : " ") + std::to_string(a.s) + ":" + std::to_string(a.t);
  kv["custom_views"] = views;
  kv["images"] = std::to_string(c.images);
  kv["channels"] = std::to_string(c.channels);
  kv["blocks"] = std::to_string(c.blocks);
  kv["kernel"] = std::to_string(c.kernel);
  kv["beta"] = fmt(c.beta);
  kv["slices"] = std::to_string(c.slices);
  kv["psi_max"] = fmt(c.psi_max);
  kv["border"] = std::to_string(c.border);
  kv["aperture_mode"] = to_string(c.aperture_mode);
  kv["temperature"] = fmt(c.temperature);
  kv["temperature_final"] = fmt(c.temperature_final);
  kv["symmetry"] = to_string(c.symmetry);
  kv["learn_f"] = c.learn_f ? "true" : "false";
  kv["learn_apertures"] = c.learn_apertures ? "true" : "false";
  kv["epochs"] = std::to_string(c.epochs);
  kv["lr"] = fmt(c.adam.lr);
  kv["adam_beta1"] = fmt(c.adam.beta1);
  kv["adam_beta2"] = fmt(c.adam.beta2);
  kv["adam_eps"] = fmt(c.adam.eps);
  kv["crop"] = std::to_string(c.crop);
  kv["seed"] = std::to_string(c.seed);
  kv["train_count"] = std::to_string(c.train_count);
  kv["checkpoint_every"] = std::to_string(c.checkpoint_every);
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

int TrainConfig::views() const {
  switch (view_pattern) {
    case ViewPattern::Corners4: return 4;
    case ViewPattern::Grid3x3: return 9;
    case ViewPattern::Custom: return static_cast<int>(custom_views.size());
  }
  return 0;
}

EncoderConfig TrainConfig::encoder() const { return {views(), images, channels, blocks, kernel}; }

int TrainConfig::resolved_border() const { return border >= 0 ? border : optics.kernel_size() / 2; }

double TrainConfig::temperature_at(int epoch) const {
  if (temperature_final <= 0.0 || epochs <= 1) return temperature;
  const double frac = std::clamp(static_cast<double>(epoch) / (epochs - 1), 0.0, 1.0);
  return temperature * std::pow(temperature_final / temperature, frac);
}

FocalStackSpec TrainConfig::stack_spec(int angular_resolution) const {
  const double extent = psi_max > 0.0 ? psi_max : calibrated_psi_max(optics, angular_resolution);
  return FocalStackSpec::linear(slices, extent);
}

ViewSelection TrainConfig::selection(int angular_resolution) const {
  return sample_views(angular_resolution, view_pattern, custom_views);
}

void TrainConfig::validate() const {
  optics.validate();
  encoder().validate();
  require(views() >= 1, Errc::BadConfig, "custom view pattern needs custom_views");
  require(slices >= 1 && epochs >= 0 && crop >= 1 && train_count >= 0 && checkpoint_every >= 0, Errc::BadConfig,
          "slices, crop must be positive; epochs, train_count, checkpoint_every non-negative");
  require(beta >= 0.0, Errc::NonNegativeBetaRequired, "beta must be non-negative");
  require(psi_max >= 0.0, Errc::BadConfig, "psi_max must be non-negative");
  require(learn_f || images == views(), Errc::BadConfig,
          "learn_f = false shows the selected views directly and needs images == view count");
  require(symmetry == ApertureSymmetry::Free || images == 4, Errc::BadMode, "mirrored4 requires images = 4");
  require(aperture_mode == ApertureMode::Continuous || temperature > 0.0, Errc::BadMode,
          "binary aperture modes need a positive temperature");
  require(temperature_final >= 0.0, Errc::BadConfig, "temperature_final must be non-negative");
  require(!(learn_apertures && aperture_mode == ApertureMode::BinaryFrozen), Errc::BadMode,
          "binary-frozen apertures have no gradient; train with binary-relaxed (evaluation freezes them)");
  require(adam.lr > 0.0 && adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 &&
              adam.eps > 0.0,
          Errc::BadConfig, "invalid Adam hyper-parameters");
}

}  // namespace lumos

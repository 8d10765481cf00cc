#include "lumos/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "lumos/synthetic.hpp"

namespace lumos {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'L', 'U', 'M', 'O', 'S', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

// Runs body(i) for i in [0, count) on up to `jobs` threads; results must be
// written to per-index slots so the outcome does not depend on scheduling.
template <class F>
void parallel_for(std::size_t count, int jobs, F body) {
  const std::size_t workers = std::min<std::size_t>(std::max(1, jobs), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    require(static_cast<bool>(out_), Errc::Io, "cannot write " + path.string());
  }
  template <class T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void bytes(const std::string& s) {
    put<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void array(const Tensor& t) {
    put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put<std::uint32_t>(static_cast<std::uint32_t>(d));
    out_.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  void finish() {
    out_.flush();
    require(static_cast<bool>(out_), Errc::Io, "checkpoint write failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    require(static_cast<bool>(in_), Errc::Io, "cannot read " + path.string());
  }
  template <class T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  std::string bytes() {
    const auto n = get<std::uint64_t>();
    require(n < (1u << 24), Errc::BadCheckpoint, "implausible string length in " + path_.string());
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  Tensor array() {
    const auto rank = get<std::uint32_t>();
    require(rank <= 8, Errc::BadCheckpoint, "implausible array rank in " + path_.string());
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(get<std::uint32_t>()));
    Tensor t(shape);
    in_.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    check();
    return t;
  }
  void read_raw(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    check();
  }

 private:
  void check() { require(static_cast<bool>(in_), Errc::BadCheckpoint, path_.string() + " is truncated"); }

  std::ifstream in_;
  std::filesystem::path path_;
};

std::vector<Tensor*> parameter_tensors(Checkpoint& c) {
  std::vector<Tensor*> out = c.encoder.tensors();
  for (Tensor& l : c.apertures.logits) out.push_back(&l);
  return out;
}

ApertureBank initial_bank(const TrainConfig& config) {
  return ApertureBank::zeros(config.images, config.optics.aperture_resolution, config.aperture_mode,
                             config.temperature, config.symmetry);
}

std::vector<Tensor> crop_slices(const std::vector<Tensor>& slices, int y0, int x0, int h, int w) {
  std::vector<Tensor> out;
  for (const Tensor& s : slices) out.push_back(crop(s, y0, x0, h, w));
  return out;
}

std::string dump_stats(const Checkpoint& c) {
  std::ostringstream out;
  out.precision(6);
  for (std::size_t i = 0; i < c.apertures.logits.size(); ++i) {
    const Tensor& l = c.apertures.logits[i];
    const auto [lo, hi] = std::minmax_element(l.values().begin(), l.values().end());
    out << " aperture" << i << "_logits=[" << *lo << "," << *hi << "]";
  }
  double max_abs = 0.0;
  bool finite = true;
  for (const Tensor* t : c.encoder.tensors()) {
    finite = finite && all_finite(*t);
    for (double v : t->values()) max_abs = std::max(max_abs, std::abs(v));
  }
  out << " encoder_max_abs=" << max_abs << " encoder_finite=" << (finite ? "yes" : "no");
  return out.str();
}

}  // namespace

std::vector<Scene> load_dataset(const std::filesystem::path& root) {
  require(std::filesystem::is_directory(root), Errc::Io, root.string() + " is not a directory");
  auto has_views = [](const std::filesystem::path& dir) {
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("view_", 0) == 0 && e.path().extension() == ".png") return true;
    }
    return false;
  };
  std::vector<Scene> scenes;
  if (has_views(root)) {
    scenes.push_back({root.filename().string(), load_light_field(root)});
    return scenes;
  }
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(root)) {
    if (e.is_directory() && has_views(e.path())) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  require(!dirs.empty(), Errc::MissingView, "no scene directories with view files under " + root.string());
  for (const auto& d : dirs) scenes.push_back({d.filename().string(), load_light_field(d)});
  return scenes;
}

Checkpoint initial_checkpoint(const TrainConfig& config) {
  config.validate();
  Checkpoint c;
  c.config = config;
  c.encoder = init_weights(config.encoder(), config.seed);
  c.apertures = initial_bank(config);
  std::vector<Tensor> enc, ap;
  for (const Tensor* t : c.encoder.tensors()) enc.push_back(*t);
  c.encoder_adam = ad::adam_init(enc, config.adam);
  c.aperture_adam = ad::adam_init(c.apertures.logits, config.adam);
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w(path);
  for (char ch : kMagic) w.put(ch);
  w.put(kVersion);
  w.bytes(canonical_text(ckpt.config));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(ckpt.epoch));
  std::vector<const Tensor*> arrays = ckpt.encoder.tensors();
  for (const Tensor& l : ckpt.apertures.logits) arrays.push_back(&l);
  for (const auto* state : {&ckpt.encoder_adam, &ckpt.aperture_adam}) {
    for (const Tensor& m : state->first_moment) arrays.push_back(&m);
    for (const Tensor& v : state->second_moment) arrays.push_back(&v);
  }
  w.put<std::uint64_t>(arrays.size());
  for (const Tensor* t : arrays) w.array(*t);
  w.put<std::int64_t>(ckpt.encoder_adam.step_count);
  w.put<std::int64_t>(ckpt.aperture_adam.step_count);
  w.put<std::uint64_t>(ckpt.loss_history.size());
  for (double v : ckpt.loss_history) w.put(v);
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.read_raw(magic, 8);
  require(std::memcmp(magic, kMagic, 8) == 0, Errc::BadCheckpoint, path.string() + " is not a lumos checkpoint");
  const auto version = r.get<std::uint32_t>();
  require(version == kVersion, Errc::BadCheckpoint, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint c = initial_checkpoint(parse_config(r.bytes()));
  c.epoch = static_cast<int>(r.get<std::uint64_t>());
  std::vector<Tensor*> arrays = parameter_tensors(c);
  for (auto* state : {&c.encoder_adam, &c.aperture_adam}) {
    for (Tensor& m : state->first_moment) arrays.push_back(&m);
    for (Tensor& v : state->second_moment) arrays.push_back(&v);
  }
  const auto count = r.get<std::uint64_t>();
  require(count == arrays.size(), Errc::BadCheckpoint,
          "checkpoint holds " + std::to_string(count) + " arrays, config implies " + std::to_string(arrays.size()));
  for (Tensor* t : arrays) {
    Tensor loaded = r.array();
    require(loaded.shape() == t->shape(), Errc::BadCheckpoint,
            "array shape " + shape_string(loaded.shape()) + " does not match " + shape_string(t->shape()));
    *t = std::move(loaded);
  }
  c.encoder_adam.step_count = r.get<std::int64_t>();
  c.aperture_adam.step_count = r.get<std::int64_t>();
  const auto history = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < history; ++i) c.loss_history.push_back(r.get<double>());
  return c;
}

Checkpoint train(const std::vector<Scene>& scenes, Checkpoint ckpt, const TrainOptions& options) {
  const TrainConfig& cfg = ckpt.config;
  cfg.validate();
  require(!scenes.empty(), Errc::BadCount, "training needs at least one scene");
  const int n = scenes.front().lf.angular_resolution();
  for (const auto& s : scenes) {
    require(s.lf.angular_resolution() == n, Errc::ShapeMismatch, "scenes must share one angular resolution");
  }
  const FocalStackSpec spec = cfg.stack_spec(n);
  const ViewSelection selection = cfg.selection(n);
  const int border = cfg.resolved_border();
  const bool tdm_only = !cfg.learn_f && !cfg.learn_apertures;

  // Ground truth over the full scene; crops of it agree with a cropped
  // render everywhere outside the excluded border band.
  std::vector<FocalStack> gt(scenes.size());
  parallel_for(scenes.size(), options.jobs,
               [&](std::size_t i) { gt[i] = ground_truth_stack(scenes[i].lf, cfg.optics, spec); });

  for (; ckpt.epoch < cfg.epochs;) {
    ckpt.apertures.temperature = cfg.temperature_at(ckpt.epoch);
    for (std::size_t si = 0; si < scenes.size(); ++si) {
      const LightField& lf = scenes[si].lf;
      const int ch = std::min(cfg.crop, lf.height()), cw = std::min(cfg.crop, lf.width());
      require(ch > 2 * border && cw > 2 * border, Errc::BadConfig, "crop leaves nothing inside the border band");
      std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                        static_cast<std::uint32_t>(ckpt.epoch), static_cast<std::uint32_t>(si)};
      std::mt19937_64 rng(seq);
      const int y0 = static_cast<int>(rng() % static_cast<std::uint64_t>(lf.height() - ch + 1));
      const int x0 = static_cast<int>(rng() % static_cast<std::uint64_t>(lf.width() - cw + 1));

      const std::vector<Tensor> target = crop_slices(gt[si].slices, y0, x0, ch, cw);
      std::vector<Tensor> interior;
      for (const Tensor& t : target) interior.push_back(crop_border(t, border));
      const WeightMaps weights = weight_maps(interior, cfg.beta);

      std::vector<ad::Var> views;
      for (const auto& a : selection.indices) views.push_back(ad::constant(crop(lf.view(a), y0, x0, ch, cw)));

      EncoderParams enc = cfg.learn_f ? as_parameters(ckpt.encoder) : as_constants(ckpt.encoder);
      std::vector<ad::Var> logits;
      for (const Tensor& l : ckpt.apertures.logits) {
        logits.push_back(cfg.learn_apertures ? ad::parameter(l) : ad::constant(l));
      }

      ad::Var loss;
      if (tdm_only) {
        const FocalStack shown = tdm_forward(lf.crop(y0, x0, ch, cw), selection, cfg.optics, spec);
        std::vector<ad::Var> slices;
        for (const Tensor& s : shown.slices) slices.push_back(ad::constant(s));
        loss = weighted_l1(slices, target, weights, border);
      } else {
        const std::vector<ad::Var> images = cfg.learn_f ? encode(views, enc) : views;
        const std::vector<ad::Var> apertures = effective_apertures(logits, ckpt.apertures);
        loss = weighted_l1(render_coded(images, apertures, cfg.optics, spec), target, weights, border);
      }

      const double value = loss->value[0];
      if (!std::isfinite(value)) {
        if (!options.diagnostic_dir.empty()) {
          std::filesystem::create_directories(options.diagnostic_dir);
          save_checkpoint(options.diagnostic_dir / "nonfinite.ckpt", ckpt);
          const auto aps = effective_apertures(ckpt.apertures);
          for (std::size_t i = 0; i < aps.size(); ++i) {
            write_aperture_csv(options.diagnostic_dir / ("aperture_" + std::to_string(i) + ".csv"), aps[i]);
          }
        }
        fail(Errc::NonFiniteLoss, "loss became " + std::to_string(value) + " at epoch " +
                                      std::to_string(ckpt.epoch) + ", scene " + scenes[si].id + ";" +
                                      dump_stats(ckpt));
      }
      ckpt.loss_history.push_back(value);
      if (tdm_only) continue;

      ad::backward(loss);
      if (cfg.learn_f) {
        std::vector<Tensor*> targets = ckpt.encoder.tensors();
        std::vector<Tensor> params, grads;
        for (std::size_t i = 0; i < targets.size(); ++i) {
          params.push_back(std::move(*targets[i]));
          grads.push_back(enc.vars[i]->grad_or_zero());
        }
        ad::adam_step(params, grads, ckpt.encoder_adam);
        for (std::size_t i = 0; i < targets.size(); ++i) *targets[i] = std::move(params[i]);
      }
      if (cfg.learn_apertures) {
        std::vector<Tensor> grads;
        for (const auto& l : logits) grads.push_back(l->grad_or_zero());
        ad::adam_step(ckpt.apertures.logits, grads, ckpt.aperture_adam);
      }
    }
    ++ckpt.epoch;
    if (options.on_checkpoint && cfg.checkpoint_every > 0 && ckpt.epoch % cfg.checkpoint_every == 0 &&
        ckpt.epoch < cfg.epochs) {
      options.on_checkpoint(ckpt);
    }
  }
  if (options.on_checkpoint) options.on_checkpoint(ckpt);
  return ckpt;
}

FocalStack render_trained(const Checkpoint& ckpt, const LightField& lf) {
  const TrainConfig& cfg = ckpt.config;
  const int n = lf.angular_resolution();
  const FocalStackSpec spec = cfg.stack_spec(n);
  const ViewSelection selection = cfg.selection(n);
  if (!cfg.learn_f && !cfg.learn_apertures) return tdm_forward(lf, selection, cfg.optics, spec);
  const std::vector<Tensor> views = selected_views(lf, selection);
  ApertureBank bank = ckpt.apertures;
  if (bank.mode == ApertureMode::BinaryRelaxed) bank.mode = ApertureMode::BinaryFrozen;
  if (!cfg.learn_f) return coded_forward(views, bank, cfg.optics, spec);
  return ctdm_forward(views, ckpt.encoder, bank, cfg.optics, spec);
}

std::pair<double, double> EvalReport::average(const std::string& variant, const std::string& method) const {
  double p = 0.0, s = 0.0;
  int count = 0;
  for (const auto& r : records) {
    if (r.variant != variant || r.method != method) continue;
    p += r.psnr_mean;
    s += r.ssim_mean;
    ++count;
  }
  require(count > 0, Errc::BadCount, "no records for " + variant + "/" + method);
  return {p / count, s / count};
}

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<Scene>& scenes, const std::string& variant, int jobs) {
  const TrainConfig& cfg = ckpt.config;
  const int border = cfg.resolved_border();
  std::vector<std::array<SceneRecord, 2>> per_scene(scenes.size());
  parallel_for(scenes.size(), jobs, [&](std::size_t i) {
    const LightField& lf = scenes[i].lf;
    const int n = lf.angular_resolution();
    const FocalStackSpec spec = cfg.stack_spec(n);
    const FocalStack gt = ground_truth_stack(lf, cfg.optics, spec);
    const FocalStack shown = render_trained(ckpt, lf);
    const FocalStack tdm = tdm_forward(lf, cfg.selection(n), cfg.optics, spec);
    auto score = [&](const FocalStack& stack, const std::string& method) {
      SceneRecord r{scenes[i].id, variant, method, {}, {}, 0.0, 0.0};
      for (std::size_t j = 0; j < gt.slices.size(); ++j) {
        r.psnr.push_back(psnr(stack.slices[j], gt.slices[j], border));
        r.ssim.push_back(ssim(stack.slices[j], gt.slices[j], border));
      }
      for (std::size_t j = 0; j < r.psnr.size(); ++j) {
        r.psnr_mean += r.psnr[j] / static_cast<double>(r.psnr.size());
        r.ssim_mean += r.ssim[j] / static_cast<double>(r.ssim.size());
      }
      return r;
    };
    per_scene[i] = {score(shown, "ctdm"), score(tdm, "tdm")};
  });
  EvalReport report;
  for (auto& pair : per_scene) {
    for (auto& r : pair) report.records.push_back(std::move(r));
  }
  return report;
}

namespace {

std::string join(const std::vector<double>& v) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", v[i]);
    out += (i ? "," : "") + std::string(buf);
  }
  return out;
}

}  // namespace

std::string report_text(const EvalReport& report) {
  std::string out;
  char buf[64];
  for (const auto& r : report.records) {
    std::snprintf(buf, sizeof buf, "%.6f ssim_mean=%.6f", r.psnr_mean, r.ssim_mean);
    out += "scene=" + r.scene + " variant=" + r.variant + " method=" + r.method + " psnr_mean=" + buf +
           " psnr=" + join(r.psnr) + " ssim=" + join(r.ssim) + "\n";
  }
  return out;
}

std::string report_csv(const EvalReport& report) {
  std::string out = "scene,variant,method,slice,psnr,ssim\n";
  char buf[128];
  for (const auto& r : report.records) {
    for (std::size_t j = 0; j < r.psnr.size(); ++j) {
      std::snprintf(buf, sizeof buf, ",%zu,%.6f,%.6f\n", j, r.psnr[j], r.ssim[j]);
      out += r.scene + "," + r.variant + "," + r.method + buf;
    }
  }
  return out;
}

std::vector<AblationVariant> parse_grid(const std::string& text) {
  std::vector<AblationVariant> grid;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto colon = line.find(':');
    require(colon != std::string::npos, Errc::BadConfig, "grid line needs 'name: key=value, ...': " + line);
    AblationVariant v;
    std::istringstream name(line.substr(0, colon));
    name >> v.name;
    require(!v.name.empty(), Errc::BadConfig, "grid variant without a name");
    std::istringstream settings(line.substr(colon + 1));
    std::string item;
    while (std::getline(settings, item, ',')) {
      if (item.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto eq = item.find('=');
      require(eq != std::string::npos, Errc::BadConfig, "grid setting needs key=value: " + item);
      std::string key = item.substr(0, eq);
      key.erase(0, key.find_first_not_of(" \t"));
      key.erase(key.find_last_not_of(" \t") + 1);
      require(config_keys().count(key) == 1, Errc::BadConfig, "unknown config key '" + key + "'");
      v.settings.emplace_back(key, item.substr(eq + 1));
    }
    grid.push_back(std::move(v));
  }
  return grid;
}

AblationResult ablate(const std::vector<AblationVariant>& grid, const TrainConfig& base,
                      const std::vector<Scene>& train_scenes, const std::vector<Scene>& test_scenes, int jobs) {
  std::vector<AblationVariant> variants = grid;
  if (variants.empty()) variants.push_back({"base", {}});
  AblationResult result;
  for (const auto& v : variants) {
    TrainConfig cfg = base;
    for (const auto& [key, value] : v.settings) apply_setting(cfg, key, value);
    TrainOptions options;
    options.jobs = jobs;
    Checkpoint ckpt = train(train_scenes, initial_checkpoint(cfg), options);
    EvalReport report = evaluate(ckpt, test_scenes, v.name, jobs);
    result.rows.emplace_back(v.name, report.average(v.name, "ctdm"));
    if (&v == &variants.front()) result.baseline = report.average(v.name, "tdm");
    for (auto& r : report.records) result.report.records.push_back(std::move(r));
  }
  return result;
}

std::string ablation_table(const AblationResult& result) {
  std::string out = "variant,psnr,ssim\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, ",%.4f,%.4f\n", result.baseline.first, result.baseline.second);
  out += std::string("tdm-baseline") + buf;
  for (const auto& [name, score] : result.rows) {
    std::snprintf(buf, sizeof buf, ",%.4f,%.4f\n", score.first, score.second);
    out += name + buf;
  }
  return out;
}

ad::GradCheckResult pipeline_grad_check(int size, std::uint64_t seed) {
  require(size >= 3, Errc::BadRange, "gradcheck crop must be at least 3 pixels");
  TrainConfig cfg;
  cfg.optics.aperture_resolution = 3;
  cfg.view_pattern = ViewPattern::Custom;
  cfg.custom_views = {{0, 0}, {2, 2}};
  cfg.images = 2;
  cfg.channels = 4;
  cfg.blocks = 1;
  cfg.slices = 2;
  cfg.border = 1;
  cfg.seed = seed;
  cfg.validate();

  const LightField lf = random_scene(3, size, size, seed);
  const FocalStackSpec spec = cfg.stack_spec(3);
  const ViewSelection selection = cfg.selection(3);
  const std::vector<Tensor> gt = ground_truth_stack(lf, cfg.optics, spec).slices;
  std::vector<Tensor> interior;
  for (const Tensor& t : gt) interior.push_back(crop_border(t, cfg.border));
  const WeightMaps weights = weight_maps(interior, cfg.beta);

  EncoderWeights enc = init_weights(cfg.encoder(), seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Tensor> point;
  for (Tensor* t : enc.tensors()) {
    // Nonzero biases so relu kinks are not hit exactly.
    if (t->rank() == 1) {
      for (double& v : t->values()) v = 0.1 * noise(rng);
    }
    point.push_back(*t);
  }
  ApertureBank bank = ApertureBank::zeros(cfg.images, 3, ApertureMode::Continuous, 1.0, ApertureSymmetry::Free);
  for (Tensor& l : bank.logits) {
    for (double& v : l.values()) v = noise(rng);
    point.push_back(l);
  }
  const std::size_t encoder_count = enc.tensors().size();

  auto build = [&](const std::vector<ad::Var>& leaves) {
    EncoderParams params{cfg.encoder(), {leaves.begin(), leaves.begin() + encoder_count}};
    std::vector<ad::Var> views;
    for (const auto& a : selection.indices) views.push_back(ad::constant(lf.view(a)));
    const std::vector<ad::Var> logits(leaves.begin() + encoder_count, leaves.end());
    const auto slices = render_coded(encode(views, params), effective_apertures(logits, bank), cfg.optics, spec);
    return weighted_l1(slices, gt, weights, cfg.border);
  };
  ad::GradCheckOptions options;
  options.seed = seed;
  return ad::grad_check(build, point, options);
}

}  // namespace lumos

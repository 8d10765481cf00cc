#include "lumos/display.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "lumos/convolution.hpp"

namespace lumos {

FocalStackSpec FocalStackSpec::linear(int m, double psi_max) {
  require(m >= 1, Errc::BadConfig, "a focal stack needs at least one slice");
  FocalStackSpec spec;
  if (m == 1) {
    spec.psi = {0.0};
    return spec;
  }
  for (int j = 0; j < m; ++j) {
    // Symmetric construction keeps the middle slice at exactly 0 for odd m.
    spec.psi.push_back(psi_max * static_cast<double>(2 * j - (m - 1)) / static_cast<double>(m - 1));
  }
  return spec;
}

void FocalStackSpec::validate() const {
  require(!psi.empty(), Errc::BadConfig, "focal stack has no slices");
  for (std::size_t j = 1; j < psi.size(); ++j) {
    require(psi[j] > psi[j - 1], Errc::BadConfig, "focal stack defocus values must be strictly ascending");
  }
}

double calibrated_psi_max(const OpticalConfig& cfg, int angular_resolution) {
  return cfg.psi_for_unit_shift(angular_resolution);
}

std::string to_string(ApertureMode m) {
  switch (m) {
    case ApertureMode::Continuous: return "continuous";
    case ApertureMode::BinaryRelaxed: return "binary-relaxed";
    case ApertureMode::BinaryFrozen: return "binary-frozen";
  }
  return "continuous";
}

std::string to_string(ApertureSymmetry s) { return s == ApertureSymmetry::Free ? "free" : "mirrored4"; }

ApertureMode parse_aperture_mode(const std::string& s) {
  if (s == "continuous") return ApertureMode::Continuous;
  if (s == "binary-relaxed") return ApertureMode::BinaryRelaxed;
  if (s == "binary-frozen") return ApertureMode::BinaryFrozen;
  fail(Errc::BadMode, "unknown aperture mode '" + s + "'");
}

ApertureSymmetry parse_aperture_symmetry(const std::string& s) {
  if (s == "free") return ApertureSymmetry::Free;
  if (s == "mirrored4") return ApertureSymmetry::Mirrored4;
  fail(Errc::BadMode, "unknown aperture symmetry '" + s + "'");
}

ApertureBank ApertureBank::zeros(int count, int resolution, ApertureMode mode, double temperature,
                                 ApertureSymmetry symmetry) {
  require(count >= 1 && resolution >= 1, Errc::BadConfig, "aperture bank needs positive count and resolution");
  require(symmetry == ApertureSymmetry::Free || count == 4, Errc::BadMode, "mirrored4 requires exactly 4 apertures");
  ApertureBank bank;
  bank.mode = mode;
  bank.temperature = temperature;
  bank.symmetry = symmetry;
  const int stored = symmetry == ApertureSymmetry::Mirrored4 ? 1 : count;
  bank.logits.assign(stored, Tensor({resolution, resolution}));
  return bank;
}

int ApertureBank::count() const {
  return symmetry == ApertureSymmetry::Mirrored4 ? 4 : static_cast<int>(logits.size());
}

void ApertureBank::validate() const {
  require(!logits.empty(), Errc::BadMode, "aperture bank is empty");
  require(symmetry == ApertureSymmetry::Free || logits.size() == 1, Errc::BadMode,
          "mirrored4 banks store exactly one logit map");
  require(mode == ApertureMode::Continuous || temperature > 0.0, Errc::BadMode,
          "binary aperture modes need a positive temperature");
  for (const Tensor& l : logits) {
    require(l.rank() == 2 && l.dim(0) == l.dim(1) && l.shape() == logits.front().shape(), Errc::ShapeMismatch,
            "aperture logits must be equal square maps");
  }
}

namespace {

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor flipped(const Tensor& t, bool horizontal, bool vertical) {
  const int h = t.dim(0), w = t.dim(1);
  Tensor out(t.shape());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(y, x) = t.at(vertical ? h - 1 - y : y, horizontal ? w - 1 - x : x);
  }
  return out;
}

}  // namespace

std::vector<Tensor> effective_apertures(const ApertureBank& bank) {
  bank.validate();
  std::vector<Tensor> base;
  for (const Tensor& logits : bank.logits) {
    Tensor t(logits.shape());
    for (std::size_t i = 0; i < t.size(); ++i) {
      switch (bank.mode) {
        case ApertureMode::Continuous: t[i] = logistic(logits[i]); break;
        case ApertureMode::BinaryRelaxed: t[i] = logistic(bank.temperature * logits[i]); break;
        case ApertureMode::BinaryFrozen: t[i] = logistic(logits[i]) > 0.5 ? 1.0 : 0.0; break;
      }
    }
    base.push_back(std::move(t));
  }
  if (bank.symmetry == ApertureSymmetry::Free) return base;
  const Tensor& first = base.front();
  return {first, flipped(first, true, false), flipped(first, false, true), flipped(first, true, true)};
}

std::vector<ad::Var> effective_apertures(const std::vector<ad::Var>& logits, const ApertureBank& bank) {
  require(logits.size() == bank.logits.size(), Errc::LengthMismatch, "one logit handle per stored aperture");
  std::vector<ad::Var> base;
  if (bank.mode == ApertureMode::BinaryFrozen) {
    ApertureBank frozen = bank;
    for (std::size_t i = 0; i < logits.size(); ++i) frozen.logits[i] = logits[i]->value;
    frozen.symmetry = ApertureSymmetry::Free;
    for (Tensor& t : effective_apertures(frozen)) base.push_back(ad::constant(std::move(t)));
  } else {
    const double t = bank.mode == ApertureMode::BinaryRelaxed ? bank.temperature : 1.0;
    for (const auto& l : logits) base.push_back(ad::sigmoid(l, t));
  }
  if (bank.symmetry == ApertureSymmetry::Free) return base;
  const ad::Var& first = base.front();
  return {first, ad::flip(first, true, false), ad::flip(first, false, true), ad::flip(first, true, true)};
}

namespace {

struct CellKey {
  OpticalConfig cfg;
  int n;
  double psi;
  bool operator<(const CellKey& o) const {
    const auto a = std::make_tuple(cfg.wavelength, cfg.focal_length, cfg.object_distance, cfg.pupil_extent,
                                   cfg.pupil_grid, cfg.pupil_samples, cfg.oversampling, cfg.aperture_resolution, n, psi);
    const auto b = std::make_tuple(o.cfg.wavelength, o.cfg.focal_length, o.cfg.object_distance, o.cfg.pupil_extent,
                                   o.cfg.pupil_grid, o.cfg.pupil_samples, o.cfg.oversampling,
                                   o.cfg.aperture_resolution, o.n, o.psi);
    return a < b;
  }
};

struct PhaseKey {
  int grid, samples;
  double psi;
  auto operator<=>(const PhaseKey&) const = default;
};

std::shared_ptr<const CTensor> cached_phase(const OpticalConfig& cfg, double psi) {
  static std::mutex mutex;
  static std::map<PhaseKey, std::shared_ptr<const CTensor>> cache;
  std::lock_guard lock(mutex);
  const PhaseKey key{cfg.pupil_grid, cfg.pupil_samples, psi};
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, std::make_shared<const CTensor>(defocus_phase(cfg, psi))).first;
  return it->second;
}

std::shared_ptr<const CTensor> cached_basis(const OpticalConfig& cfg, int cells, double psi) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int, double>, std::shared_ptr<const CTensor>> cache;
  std::lock_guard lock(mutex);
  const auto key = std::make_tuple(cfg.pupil_grid, cfg.pupil_samples, cells, psi);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, std::make_shared<const CTensor>(cell_basis(cfg, cells, psi))).first;
  return it->second;
}

FocalStack render_cells(const LightField& lf, const std::vector<AngularIndex>& views, double gain,
                        const OpticalConfig& cfg, const FocalStackSpec& spec) {
  spec.validate();
  const int n = lf.angular_resolution();
  std::vector<Tensor> images;
  for (const auto& a : views) images.push_back(lf.view(a));
  std::vector<std::vector<Tensor>> kernels;
  for (double psi : spec.psi) {
    const auto& psfs = cell_psfs(cfg, n, psi);
    std::vector<Tensor> row;
    for (const auto& a : views) row.push_back(psfs[static_cast<std::size_t>(a.s) * n + a.t].kernel);
    kernels.push_back(std::move(row));
  }
  FocalStack stack{convolve_bank(images, kernels), spec};
  if (gain != 1.0) {
    for (Tensor& slice : stack.slices) {
      for (double& v : slice.values()) v *= gain;
    }
  }
  return stack;
}

}  // namespace

const std::vector<PointSpreadFunction>& cell_psfs(const OpticalConfig& cfg, int n, double psi) {
  static std::mutex mutex;
  static std::map<CellKey, std::vector<PointSpreadFunction>> cache;
  const CellKey key{cfg, n, psi};
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  const DefocusSpec defocus = defocus_from_psi(cfg, psi);
  std::vector<PointSpreadFunction> psfs;
  for (int s = 0; s < n; ++s) {
    for (int t = 0; t < n; ++t) psfs.push_back(psf(rect_pupil(cfg, n, {s, t}, 1), defocus));
  }
  std::lock_guard lock(mutex);
  return cache.emplace(key, std::move(psfs)).first->second;
}

FocalStack ground_truth_stack(const LightField& lf, const OpticalConfig& cfg, const FocalStackSpec& spec) {
  const int n = lf.angular_resolution();
  std::vector<AngularIndex> all;
  for (int s = 0; s < n; ++s) {
    for (int t = 0; t < n; ++t) all.push_back({s, t});
  }
  return render_cells(lf, all, 1.0, cfg, spec);
}

FocalStack tdm_forward(const LightField& lf, const ViewSelection& selection, const OpticalConfig& cfg,
                       const FocalStackSpec& spec) {
  require(selection.size() > 0, Errc::LengthMismatch, "empty view selection");
  const int n = lf.angular_resolution();
  for (const auto& a : selection.indices) {
    require(a.s >= 0 && a.t >= 0 && a.s < n && a.t < n, Errc::InfeasiblePattern, "selection outside the grid");
  }
  const double gain = static_cast<double>(n) * n / static_cast<double>(selection.size());
  return render_cells(lf, selection.indices, gain, cfg, spec);
}

ad::Var aperture_psf(const ad::Var& aperture, const OpticalConfig& cfg, double psi) {
  require(aperture->value.rank() == 2 && aperture->value.dim(0) == aperture->value.dim(1), Errc::ShapeMismatch,
          "aperture must be square");
  return ad::cell_psf(aperture, cached_basis(cfg, aperture->value.dim(0), psi), cfg);
}

ad::Var aperture_psf_from_pupil(const ad::Var& pupil, const OpticalConfig& cfg, double psi) {
  return ad::pupil_psf(pupil, cached_phase(cfg, psi), cfg);
}

std::vector<ad::Var> render_coded(const std::vector<ad::Var>& images, const std::vector<ad::Var>& apertures,
                                  const OpticalConfig& cfg, const FocalStackSpec& spec) {
  require(images.size() == apertures.size() && !images.empty(), Errc::LengthMismatch,
          "one aperture per displayed image required (" + std::to_string(images.size()) + " images, " +
              std::to_string(apertures.size()) + " apertures)");
  cfg.validate();
  spec.validate();
  std::vector<std::vector<ad::Var>> kernels;
  for (double psi : spec.psi) {
    std::vector<ad::Var> row;
    for (const auto& a : apertures) row.push_back(aperture_psf(a, cfg, psi));
    kernels.push_back(std::move(row));
  }
  return ad::convolve_bank(images, kernels);
}

FocalStack coded_forward(const std::vector<Tensor>& images, const ApertureBank& bank, const OpticalConfig& cfg,
                         const FocalStackSpec& spec) {
  require(static_cast<int>(images.size()) == bank.count(), Errc::LengthMismatch,
          "coded display needs one image per aperture");
  for (const Tensor& a : effective_apertures(bank)) {
    require(a.dim(0) == cfg.aperture_resolution, Errc::ConfigMismatch,
            "aperture resolution does not match the optical config");
  }
  std::vector<ad::Var> imgs, aps;
  for (const Tensor& im : images) imgs.push_back(ad::constant(im));
  for (Tensor& a : effective_apertures(bank)) aps.push_back(ad::constant(std::move(a)));
  FocalStack stack{{}, spec};
  for (const auto& s : render_coded(imgs, aps, cfg, spec)) stack.slices.push_back(s->value);
  return stack;
}

FocalStack ctdm_forward(const std::vector<Tensor>& views, const EncoderWeights& weights, const ApertureBank& bank,
                        const OpticalConfig& cfg, const FocalStackSpec& spec) {
  require(static_cast<int>(views.size()) == weights.config.views, Errc::ShapeMismatch,
          "view count does not match the encoder");
  require(weights.config.images == bank.count(), Errc::LengthMismatch,
          "encoder output count does not match the aperture bank");
  return coded_forward(encode(views, weights), bank, cfg, spec);
}

}  // namespace lumos

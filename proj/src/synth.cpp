#include "rrid/synth.hpp"

#include <cstdio>

#include "rrid/errors.hpp"
#include "rrid/feature_io.hpp"
#include "rrid/rng.hpp"

namespace rrid {

namespace {

constexpr std::size_t kBands = 6;

using Vec = std::vector<float>;

Vec normal_vector(Rng& rng, std::size_t n) {
  Vec v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

std::string image_id(std::size_t pid, std::size_t cam, std::size_t k) {
  char buf[80];
  std::snprintf(buf, sizeof buf, "p%04zu_c%zu_%02zu", pid, cam, k);
  return buf;
}

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError(std::string("synth: ") + name + " must be in [0, 1]");
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (n_ids == 0) throw ConfigError("synth: need at least one identity");
  if (imgs_per_id < 2) throw ConfigError("synth: need at least 2 images per identity");
  if (height == 0 || height % kBands != 0) {
    throw ConfigError("synth: height " + std::to_string(height) + " is not divisible by 6");
  }
  if (width == 0 || channels == 0) throw ConfigError("synth: width and channels must be positive");
  if (shared_pool_size == 0) throw ConfigError("synth: shared pool size must be positive");
  if (n_cameras < 2) throw ConfigError("synth: need at least 2 cameras for cross-camera matches");
  if (!(noise_sigma >= 0.0)) throw ConfigError("synth: noise sigma must be >= 0");
  check_prob(shared_attribute_prob, "shared attribute probability");
  check_prob(clutter_row_prob, "clutter row probability");
  check_prob(occlusion_band_prob, "occlusion band probability");
}

std::vector<SynthImage> synth_images(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t C = spec.channels, band_rows = spec.height / kBands;

  std::vector<std::vector<Vec>> pool(kBands);
  for (auto& band : pool) {
    for (std::size_t k = 0; k < spec.shared_pool_size; ++k) band.push_back(normal_vector(rng, C));
  }

  const std::size_t total_ids = spec.n_ids + spec.eval_ids();
  const std::size_t M = spec.imgs_per_id, train_imgs = (M + 1) / 2;
  std::vector<SynthImage> out;
  for (std::size_t pid = 0; pid < total_ids; ++pid) {
    std::vector<Vec> proto(kBands);
    for (std::size_t b = 0; b < kBands; ++b) {
      proto[b] = normal_vector(rng, C);
      if (rng.bernoulli(spec.shared_attribute_prob)) {
        proto[b] = pool[b][rng.below(spec.shared_pool_size)];
      }
    }
    const bool eval = pid >= spec.n_ids;
    for (std::size_t k = 0; k < M; ++k) {
      SynthImage img;
      img.map = FeatureMap(spec.height, spec.width, C);
      for (std::size_t h = 0; h < spec.height; ++h) {
        const Vec& p = proto[h / band_rows];
        for (std::size_t w = 0; w < spec.width; ++w) {
          for (std::size_t c = 0; c < C; ++c) {
            img.map.at(h, w, c) = p[c] + static_cast<float>(spec.noise_sigma * rng.normal());
          }
        }
      }
      for (std::size_t h = 0; h < spec.height; ++h) {
        if (!rng.bernoulli(spec.clutter_row_prob)) continue;
        const Vec clutter = normal_vector(rng, C);
        for (std::size_t w = 0; w < spec.width; ++w) {
          for (std::size_t c = 0; c < C; ++c) img.map.at(h, w, c) = clutter[c];
        }
      }
      for (std::size_t b = 0; b < kBands; ++b) {
        if (!rng.bernoulli(spec.occlusion_band_prob)) continue;
        for (std::size_t h = b * band_rows; h < (b + 1) * band_rows; ++h) {
          for (std::size_t w = 0; w < spec.width; ++w) {
            for (std::size_t c = 0; c < C; ++c) img.map.at(h, w, c) = 0.0f;
          }
        }
      }
      const std::size_t cam = k % spec.n_cameras;
      img.entry.id = image_id(pid, cam, k);
      img.entry.feature_path = "features/" + img.entry.id + ".ridf";
      img.entry.person_id = static_cast<int>(pid);
      img.entry.camera_id = static_cast<int>(cam);
      if (!eval) {
        img.entry.split = k < train_imgs ? Split::train : Split::gallery;
      } else {
        img.entry.split = k == 0 ? Split::query : Split::gallery;
      }
      out.push_back(std::move(img));
    }
  }
  return out;
}

std::filesystem::path synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir,
                                     bool overwrite) {
  namespace fs = std::filesystem;
  spec.validate();
  if (fs::exists(out_dir)) {
    if (!fs::is_directory(out_dir)) {
      throw DataError("synth: '" + out_dir.string() + "' exists and is not a directory");
    }
    if (!fs::is_empty(out_dir)) {
      if (!overwrite) {
        throw DataError("synth: output directory '" + out_dir.string() +
                        "' is not empty (pass --overwrite to replace it)");
      }
      fs::remove_all(out_dir / "features");
      fs::remove(out_dir / "manifest.jsonl");
    }
  }
  fs::create_directories(out_dir / "features");
  const auto images = synth_images(spec);
  std::vector<ManifestEntry> entries;
  for (const auto& img : images) {
    write_feature(out_dir / img.entry.feature_path, img.map);
    entries.push_back(img.entry);
  }
  const fs::path manifest = out_dir / "manifest.jsonl";
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace rrid

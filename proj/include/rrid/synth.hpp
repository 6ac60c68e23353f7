#pragma once

// Deterministic synthetic feature-map datasets.
//
// Every identity owns six part prototypes (one per horizontal row band). Each
// prototype is, with probability shared_attribute_prob, taken from a small
// pool shared by all identities for that band instead, so distinct people
// can look identical in a body part. An image tiles the prototypes over
// their bands and adds Gaussian noise; rows are swapped for clutter and
// whole bands blanked at random.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rrid/feature_map.hpp"
#include "rrid/manifest.hpp"

namespace rrid {

struct SynthSpec {
  std::size_t n_ids = 20;       // identities with train images
  std::size_t n_eval_ids = 0;   // held-out identities; 0 means ceil(n_ids / 2)
  std::size_t imgs_per_id = 12;
  std::size_t height = 12;
  std::size_t width = 4;
  std::size_t channels = 64;
  double noise_sigma = 0.25;
  double shared_attribute_prob = 0.3;
  std::size_t shared_pool_size = 4;
  double clutter_row_prob = 0.15;
  double occlusion_band_prob = 0.1;
  std::size_t n_cameras = 2;
  std::uint64_t seed = 0;

  std::size_t eval_ids() const { return n_eval_ids ? n_eval_ids : (n_ids + 1) / 2; }
  void validate() const;
};

struct SynthImage {
  ManifestEntry entry;
  FeatureMap map;
};

// Images in manifest order. Train identities get person ids [0, n_ids) with
// ceil(M/2) train images each and the rest in the gallery as distractors;
// eval identities follow with one query and M-1 gallery images each.
std::vector<SynthImage> synth_images(const SynthSpec& spec);

// Writes <out_dir>/manifest.jsonl and <out_dir>/features/*.ridf. Refuses a
// non-empty out_dir unless `overwrite`. Returns the manifest path.
std::filesystem::path synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir,
                                     bool overwrite = false);

}  // namespace rrid

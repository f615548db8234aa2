#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saliq/rng.hpp"
#include "saliq/tensor.hpp"

namespace saliq {

enum class Split { kTrain, kVal, kTest };

struct Sample {
  Tensor image;  // [C,H,W] in [0,1]
  int label = 0;
  Split split = Split::kTrain;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> class_names;
  int resolution = 0;
  int skipped_files = 0;  // unreadable/malformed inputs skipped at load

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::vector<int> split_indices(Split split) const;
};

/// Load a class-per-directory corpus of binary PPM images
/// (<root>/<class_name>/*.ppm), bilinearly resized to the target resolution
/// and scaled to [0,1]. Class order is lexicographic directory order.
/// Malformed images are skipped with a warning on stderr; an empty class
/// directory is an error. Splits are unassigned (all train) until
/// split_dataset runs.
Dataset load_image_dataset(const std::string& root, int resolution);

/// Stratified per-class split: seeded shuffle within each class, then
/// contiguous assignment by fraction with largest-remainder rounding.
void split_dataset(Dataset& ds, double train_frac, double val_frac, double test_frac, uint64_t seed);

/// One augmentation draw: right-angle rotation, horizontal flip, per-channel
/// gain in [0.8, 1.2].
struct AugmentParams {
  int rotation_quarters = 0;  // multiples of 90 degrees, 0..3
  bool horizontal_flip = false;
  float channel_gain[3] = {1.0f, 1.0f, 1.0f};
};

AugmentParams sample_augment(Rng& rng);
Tensor augment(const Tensor& image, const AugmentParams& params);
inline Tensor augment(const Tensor& image, Rng& rng) { return augment(image, sample_augment(rng)); }

/// Synthetic 8-class stand-in corpus: each class is a bright blob with a
/// class-specific color at one of 8 fixed grid positions over Gaussian noise
/// clamped to [0,1]. Linearly separable by construction; split 80/10/10.
Dataset synthetic_dataset(int per_class, int classes, int resolution, uint64_t seed, float noise_sigma = 0.1f);

/// Noise-free class template used by the generator (and by the
/// nearest-template oracle in tests).
Tensor synthetic_template(int class_index, int classes, int resolution);

/// Write a dataset out as a <root>/<class_name>/NNNN.ppm corpus.
void write_dataset_ppm(const Dataset& ds, const std::string& root);

}  // namespace saliq

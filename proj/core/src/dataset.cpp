#include "saliq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "saliq/image_io.hpp"

namespace fs = std::filesystem;

namespace saliq {

std::vector<int> Dataset::split_indices(Split split) const {
  std::vector<int> out;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == split) out.push_back(static_cast<int>(i));
  }
  return out;
}

Dataset load_image_dataset(const std::string& root, int resolution) {
  if (resolution <= 0) throw std::invalid_argument("load_image_dataset: resolution must be positive");
  if (!fs::is_directory(root)) throw std::runtime_error("load_image_dataset: '" + root + "' is not a directory");

  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw std::runtime_error("load_image_dataset: no class directories under '" + root + "'");

  Dataset ds;
  ds.class_names = class_dirs;
  ds.resolution = resolution;
  for (size_t c = 0; c < class_dirs.size(); ++c) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(fs::path(root) / class_dirs[c])) {
      if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    int loaded = 0;
    for (const std::string& file : files) {
      try {
        Tensor img = resize_bilinear(read_ppm(file), resolution, resolution);
        ds.samples.push_back({std::move(img), static_cast<int>(c), Split::kTrain});
        ++loaded;
      } catch (const std::exception& e) {
        std::fprintf(stderr, "warning: skipping %s: %s\n", file.c_str(), e.what());
        ++ds.skipped_files;
      }
    }
    if (loaded == 0) {
      throw std::runtime_error("load_image_dataset: class directory '" + class_dirs[c] + "' has no readable images");
    }
  }
  return ds;
}

void split_dataset(Dataset& ds, double train_frac, double val_frac, double test_frac, uint64_t seed) {
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw std::invalid_argument("split_dataset: fractions must sum to 1");
  }
  const int classes = ds.num_classes();
  for (int c = 0; c < classes; ++c) {
    std::vector<int> members;
    for (size_t i = 0; i < ds.samples.size(); ++i) {
      if (ds.samples[i].label == c) members.push_back(static_cast<int>(i));
    }
    const int n = static_cast<int>(members.size());
    if (n < 3) {
      throw std::runtime_error("split_dataset: class '" + ds.class_names[static_cast<size_t>(c)] + "' has " +
                               std::to_string(n) + " samples; at least 3 required to populate all splits");
    }

    Rng rng(mix_seed(seed, 0x5b117ull, static_cast<uint64_t>(c)));
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(i) + 1));
      std::swap(members[static_cast<size_t>(i)], members[static_cast<size_t>(j)]);
    }

    // Largest-remainder rounding over the three fractions.
    const double exact[3] = {train_frac * n, val_frac * n, test_frac * n};
    int counts[3];
    double rema[3];
    int assigned = 0;
    for (int s = 0; s < 3; ++s) {
      counts[s] = static_cast<int>(std::floor(exact[s]));
      rema[s] = exact[s] - counts[s];
      assigned += counts[s];
    }
    while (assigned < n) {
      int best = 0;
      for (int s = 1; s < 3; ++s) {
        if (rema[s] > rema[best]) best = s;
      }
      ++counts[best];
      rema[best] = -1.0;
      ++assigned;
    }
    // Every split must hold at least one sample (n >= 3 guarantees room).
    for (int s = 0; s < 3; ++s) {
      while (counts[s] == 0) {
        int donor = 0;
        for (int t = 1; t < 3; ++t) {
          if (counts[t] > counts[donor]) donor = t;
        }
        --counts[donor];
        ++counts[s];
      }
    }

    int pos = 0;
    const Split order[3] = {Split::kTrain, Split::kVal, Split::kTest};
    for (int s = 0; s < 3; ++s) {
      for (int i = 0; i < counts[s]; ++i, ++pos) {
        ds.samples[static_cast<size_t>(members[static_cast<size_t>(pos)])].split = order[s];
      }
    }
  }
}

AugmentParams sample_augment(Rng& rng) {
  AugmentParams p;
  p.rotation_quarters = static_cast<int>(rng.uniform_int(4));
  p.horizontal_flip = rng.bernoulli(0.5);
  for (int c = 0; c < 3; ++c) p.channel_gain[c] = static_cast<float>(rng.uniform(0.8, 1.2));
  return p;
}

namespace {

Tensor rotate_quarters(const Tensor& image, int quarters) {
  if (quarters == 0) return image;
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h != w) throw std::invalid_argument("augment: right-angle rotation requires square images");
  Tensor out(image.shape());
  for (int ch = 0; ch < c; ++ch) {
    const float* in = image.data() + static_cast<int64_t>(ch) * h * w;
    float* o = out.data() + static_cast<int64_t>(ch) * h * w;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        int si = i, sj = j;
        switch (quarters) {
          case 1: si = h - 1 - j; sj = i; break;      // 90 degrees clockwise
          case 2: si = h - 1 - i; sj = w - 1 - j; break;
          case 3: si = j; sj = w - 1 - i; break;
          default: break;
        }
        o[static_cast<int64_t>(i) * w + j] = in[static_cast<int64_t>(si) * w + sj];
      }
    }
  }
  return out;
}

}  // namespace

Tensor augment(const Tensor& image, const AugmentParams& params) {
  if (image.ndim() != 3) throw std::invalid_argument("augment: expected [C,H,W], got " + image.shape_str());
  Tensor out = rotate_quarters(image, ((params.rotation_quarters % 4) + 4) % 4);
  const int c = out.dim(0), h = out.dim(1), w = out.dim(2);
  if (params.horizontal_flip) {
    for (int ch = 0; ch < c; ++ch) {
      float* plane = out.data() + static_cast<int64_t>(ch) * h * w;
      for (int i = 0; i < h; ++i) {
        float* row = plane + static_cast<int64_t>(i) * w;
        for (int j = 0; j < w / 2; ++j) std::swap(row[j], row[w - 1 - j]);
      }
    }
  }
  for (int ch = 0; ch < c && ch < 3; ++ch) {
    const float gain = params.channel_gain[ch];
    float* plane = out.data() + static_cast<int64_t>(ch) * h * w;
    for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
      plane[i] = std::min(std::max(plane[i] * gain, 0.0f), 1.0f);
    }
  }
  return out;
}

namespace {

// Blob centers on a 3x3 grid without the center cell, scaled to the image.
void blob_center(int class_index, int resolution, double* cy, double* cx) {
  static const int kGrid[8][2] = {{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}, {2, 2}};
  const int gi = class_index % 8;
  *cy = (kGrid[gi][0] + 0.5) * resolution / 3.0;
  *cx = (kGrid[gi][1] + 0.5) * resolution / 3.0;
}

// Distinct class colors chosen so that per-channel gain jitter and
// right-angle rotation cannot alias one class into another: classes sharing
// a grid radius get well-separated color directions.
const float kClassColors[8][3] = {
    {1.0f, 0.1f, 0.1f},  // corner
    {0.9f, 0.9f, 0.1f},  // edge
    {0.1f, 1.0f, 0.1f},  // corner
    {0.9f, 0.1f, 0.9f},  // edge
    {0.1f, 0.9f, 0.9f},  // edge
    {0.1f, 0.1f, 1.0f},  // corner
    {0.5f, 0.5f, 0.5f},  // edge
    {1.0f, 1.0f, 1.0f},  // corner
};

}  // namespace

Tensor synthetic_template(int class_index, int classes, int resolution) {
  if (class_index < 0 || class_index >= classes) throw std::invalid_argument("synthetic_template: bad class index");
  Tensor img({3, resolution, resolution});
  double cy, cx;
  blob_center(class_index, resolution, &cy, &cx);
  const double radius = resolution / 8.0;
  const float* color = kClassColors[class_index % 8];
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      const double dy = i - cy, dx = j - cx;
      const double bump = std::exp(-(dy * dy + dx * dx) / (2.0 * radius * radius));
      for (int c = 0; c < 3; ++c) {
        img[(static_cast<int64_t>(c) * resolution + i) * resolution + j] = static_cast<float>(color[c] * bump);
      }
    }
  }
  return img;
}

Dataset synthetic_dataset(int per_class, int classes, int resolution, uint64_t seed, float noise_sigma) {
  if (per_class < 3) throw std::invalid_argument("synthetic_dataset: need at least 3 samples per class");
  if (classes < 2 || classes > 8) throw std::invalid_argument("synthetic_dataset: classes must be in [2, 8]");

  Dataset ds;
  ds.resolution = resolution;
  for (int c = 0; c < classes; ++c) {
    char name[16];
    std::snprintf(name, sizeof(name), "class_%02d", c);
    ds.class_names.emplace_back(name);
  }

  for (int c = 0; c < classes; ++c) {
    const Tensor tmpl = synthetic_template(c, classes, resolution);
    for (int s = 0; s < per_class; ++s) {
      Rng rng(mix_seed(seed, 0x5ab5ull, static_cast<uint64_t>(c), static_cast<uint64_t>(s)));
      Tensor img(tmpl.shape());
      for (int64_t i = 0; i < img.numel(); ++i) {
        const double noise = noise_sigma > 0.0f ? rng.normal(0.0, noise_sigma) : 0.0;
        img[i] = static_cast<float>(std::min(std::max(static_cast<double>(tmpl[i]) + noise, 0.0), 1.0));
      }
      ds.samples.push_back({std::move(img), c, Split::kTrain});
    }
  }
  split_dataset(ds, 0.8, 0.1, 0.1, seed);
  return ds;
}

void write_dataset_ppm(const Dataset& ds, const std::string& root) {
  fs::create_directories(root);
  std::vector<int> counters(ds.class_names.size(), 0);
  for (size_t c = 0; c < ds.class_names.size(); ++c) {
    fs::create_directories(fs::path(root) / ds.class_names[c]);
  }
  for (const Sample& sample : ds.samples) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04d.ppm", counters[static_cast<size_t>(sample.label)]++);
    const fs::path path = fs::path(root) / ds.class_names[static_cast<size_t>(sample.label)] / name;
    write_ppm(sample.image, path.string());
  }
}

}  // namespace saliq

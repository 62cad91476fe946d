#include "sgts/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sgts/errors.hpp"
#include "sgts/raster.hpp"

namespace sgts {

int Sample::count_instances(std::uint8_t cls) const {
  return static_cast<int>(std::count_if(instances.begin(), instances.end(),
                                        [cls](const Instance& in) { return in.cls == cls; }));
}

int Sample::count_annotated() const {
  return static_cast<int>(std::count_if(instances.begin(), instances.end(),
                                        [](const Instance& in) { return in.annotated; }));
}

namespace {

struct Color {
  double r, g, b;
};

constexpr Color kStromaColor{0.93, 0.72, 0.82};
constexpr Color kEpitheliumColor{0.62, 0.36, 0.66};
constexpr Color kLumenColor{0.97, 0.91, 0.95};
constexpr Color kMalignantColor{0.46, 0.20, 0.52};
constexpr Color kPdcgColor{0.33, 0.14, 0.46};
constexpr double kInstanceJitter = 0.12;
constexpr double kPixelNoise = 0.06;
constexpr double kTextureAmplitude = 0.10;
constexpr int kTextureCell = 8;

Color jitter(Color c, Rng& rng) {
  return {c.r + rng.uniform(-kInstanceJitter, kInstanceJitter),
          c.g + rng.uniform(-kInstanceJitter, kInstanceJitter),
          c.b + rng.uniform(-kInstanceJitter, kInstanceJitter)};
}

void paint(Tensor& image, int idx, Color c, int size) {
  const int i = idx / size;
  const int j = idx % size;
  image.at(0, i, j) = c.r;
  image.at(1, i, j) = c.g;
  image.at(2, i, j) = c.b;
}

// Smooth value noise on a coarse lattice, bilinearly interpolated.
void fill_background(Tensor& image, int size, Rng& rng) {
  const int cells = size / kTextureCell + 2;
  std::vector<double> lattice(static_cast<std::size_t>(cells) * cells);
  for (double& v : lattice) v = rng.uniform(-1.0, 1.0);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double y = static_cast<double>(i) / kTextureCell;
      const double x = static_cast<double>(j) / kTextureCell;
      const int y0 = static_cast<int>(y);
      const int x0 = static_cast<int>(x);
      const double fy = y - y0;
      const double fx = x - x0;
      auto at = [&](int a, int b) { return lattice[static_cast<std::size_t>(a) * cells + b]; };
      const double n = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                       fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
      const double d = kTextureAmplitude * n;
      image.at(0, i, j) = kStromaColor.r + d;
      image.at(1, i, j) = kStromaColor.g + 1.2 * d;
      image.at(2, i, j) = kStromaColor.b + 0.8 * d;
    }
  }
}

struct Shape2 {
  std::vector<int> pixels;
  std::vector<bool> inner;  // lumen flags for benign glands, parallel to pixels
};

Shape2 benign_shape(int size, double scale, const ClassMix& mix, Rng& rng) {
  const double a = rng.uniform(mix.benign_axis_min, mix.benign_axis_max) * scale;
  const double b = rng.uniform(mix.benign_axis_min, mix.benign_axis_max) * scale;
  const double theta = rng.uniform(0.0, M_PI);
  const double lumen = rng.uniform(mix.lumen_scale_min, mix.lumen_scale_max);
  const double margin = std::max(a, b);
  const double cy = rng.uniform(margin * 0.5, size - 1 - margin * 0.5);
  const double cx = rng.uniform(margin * 0.5, size - 1 - margin * 0.5);
  const double ct = std::cos(theta), st = std::sin(theta);
  Shape2 s;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double dy = i - cy, dx = j - cx;
      const double u = (ct * dx + st * dy) / a;
      const double v = (-st * dx + ct * dy) / b;
      const double r2 = u * u + v * v;
      if (r2 <= 1.0) {
        s.pixels.push_back(i * size + j);
        s.inner.push_back(r2 <= lumen * lumen);
      }
    }
  }
  return s;
}

Shape2 malignant_shape(int size, double scale, const ClassMix& mix, Rng& rng) {
  const double a = rng.uniform(mix.malignant_axis_min, mix.malignant_axis_max) * scale;
  const double b = rng.uniform(mix.malignant_axis_min, mix.malignant_axis_max) * scale;
  const double theta = rng.uniform(0.0, M_PI);
  std::array<double, 4> amp{}, phase{};
  for (int k = 0; k < 4; ++k) {
    amp[k] = rng.uniform(0.0, 0.15);
    phase[k] = rng.uniform(0.0, 2.0 * M_PI);
  }
  const double margin = std::max(a, b);
  const double cy = rng.uniform(margin * 0.5, size - 1 - margin * 0.5);
  const double cx = rng.uniform(margin * 0.5, size - 1 - margin * 0.5);
  const double ct = std::cos(theta), st = std::sin(theta);
  Shape2 s;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double dy = i - cy, dx = j - cx;
      const double u = (ct * dx + st * dy) / a;
      const double v = (-st * dx + ct * dy) / b;
      const double phi = std::atan2(v, u);
      double radius = 1.0;
      for (int k = 0; k < 4; ++k) radius += amp[k] * std::cos((k + 2) * phi + phase[k]);
      if (u * u + v * v <= radius * radius) {
        s.pixels.push_back(i * size + j);
        s.inner.push_back(false);
      }
    }
  }
  return s;
}

Shape2 pdcg_shape(int size, double scale, const ClassMix& mix, Rng& rng) {
  const double spread = mix.cluster_spread * scale;
  const double cy = rng.uniform(spread, size - 1 - spread);
  const double cx = rng.uniform(spread, size - 1 - spread);
  const int discs = rng.uniform_int(mix.pdcg_discs.min, mix.pdcg_discs.max);
  std::vector<std::array<double, 3>> centers;
  for (int d = 0; d < discs; ++d) {
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    const double dist = rng.uniform(0.0, spread);
    const double r = rng.uniform(mix.disc_radius_min, mix.disc_radius_max) * scale;
    centers.push_back({cy + dist * std::sin(ang), cx + dist * std::cos(ang), r});
  }
  Shape2 s;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      for (const auto& c : centers) {
        const double dy = i - c[0], dx = j - c[1];
        if (dy * dy + dx * dx <= c[2] * c[2]) {
          s.pixels.push_back(i * size + j);
          s.inner.push_back(false);
          break;
        }
      }
    }
  }
  return s;
}

}  // namespace

Sample generate_sample(std::uint64_t seed, int size, const ClassMix& mix) {
  if (size < 32 || size % 2 != 0) {
    throw RangeError("generate_sample: size must be even and >= 32, got " + std::to_string(size));
  }
  Rng rng(seed);
  const double scale = size / 64.0;
  Sample sample;
  sample.image = Tensor({3, size, size});
  sample.dense_mask = LabelMask(size, size, 0);
  fill_background(sample.image, size, rng);

  const int n_benign = rng.uniform_int(mix.benign.min, mix.benign.max);
  const int n_malignant = rng.uniform_int(mix.malignant.min, mix.malignant.max);
  const int n_pdcg = rng.uniform_int(mix.pdcg.min, mix.pdcg.max);
  std::vector<std::uint8_t> order;
  order.insert(order.end(), n_benign, 1);
  order.insert(order.end(), n_malignant, 2);
  order.insert(order.end(), n_pdcg, 3);

  std::vector<bool> occupied(static_cast<std::size_t>(size) * size, false);
  for (std::uint8_t cls : order) {
    bool placed = false;
    for (int attempt = 0; attempt < mix.placement_retries && !placed; ++attempt) {
      Shape2 shape = cls == 1   ? benign_shape(size, scale, mix, rng)
                     : cls == 2 ? malignant_shape(size, scale, mix, rng)
                                : pdcg_shape(size, scale, mix, rng);
      if (shape.pixels.empty()) continue;
      std::size_t taken = 0;
      for (int p : shape.pixels) taken += occupied[p] ? 1 : 0;
      if (static_cast<double>(taken) > mix.max_overlap * static_cast<double>(shape.pixels.size())) {
        continue;
      }
      Instance inst;
      inst.cls = cls;
      const Color body = jitter(cls == 1 ? kEpitheliumColor : cls == 2 ? kMalignantColor : kPdcgColor, rng);
      const Color lumen = jitter(kLumenColor, rng);
      for (std::size_t k = 0; k < shape.pixels.size(); ++k) {
        const int p = shape.pixels[k];
        if (occupied[p]) continue;
        occupied[p] = true;
        inst.pixels.push_back(p);
        sample.dense_mask.labels[p] = cls;
        paint(sample.image, p, shape.inner[k] ? lumen : body, size);
      }
      sample.instances.push_back(std::move(inst));
      placed = true;
    }
    if (!placed) ++sample.dropped_instances;
  }

  for (double& v : sample.image.data()) v = std::clamp(v + kPixelNoise * rng.normal(), 0.0, 1.0);
  sample.sparse_mask = sample.dense_mask;
  for (Instance& inst : sample.instances) inst.annotated = true;
  return sample;
}

double calibrated_annotation_probability(double annot_fraction, int n) {
  if (n <= 0 || annot_fraction >= 1.0) return annot_fraction;
  // Expected annotated fraction with one forced instance: q + (1 - q)^n / n,
  // increasing in q.
  auto expected = [n](double q) { return q + std::pow(1.0 - q, n) / n; };
  if (expected(0.0) >= annot_fraction) return 0.0;
  double lo = 0.0, hi = annot_fraction;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected(mid) < annot_fraction ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Sample sparsify(const Sample& sample, double annot_fraction, std::uint64_t seed) {
  if (!(annot_fraction > 0.0 && annot_fraction <= 1.0)) {
    throw RangeError("sparsify: annot_fraction must lie in (0, 1]");
  }
  Rng rng(seed);
  Sample out = sample;
  const int h = sample.dense_mask.height;
  const int w = sample.dense_mask.width;
  const double q = calibrated_annotation_probability(annot_fraction,
                                                     static_cast<int>(out.instances.size()));
  bool any = false;
  for (Instance& inst : out.instances) {
    inst.annotated = rng.bernoulli(q);
    any = any || inst.annotated;
  }
  if (!any && !out.instances.empty()) {
    out.instances[rng.uniform_int(0, static_cast<int>(out.instances.size()) - 1)].annotated = true;
  }

  LabelMask& sparse = out.sparse_mask;
  sparse = LabelMask(h, w, kUnlabeled);
  const LabelMask& dense = sample.dense_mask;
  for (const Instance& inst : out.instances) {
    if (!inst.annotated) continue;
    for (int p : inst.pixels) sparse.labels[p] = dense.labels[p];
    for (int p : inst.pixels) {
      const int i = p / w, j = p % w;
      for (int di = -2; di <= 2; ++di) {
        for (int dj = -2; dj <= 2; ++dj) {
          const int y = i + di, x = j + dj;
          if (y < 0 || y >= h || x < 0 || x >= w) continue;
          if (dense.at(y, x) == 0) sparse.at(y, x) = 0;
        }
      }
    }
  }
  const int min_side = std::max(2, h / 16);
  const int max_side = std::max(min_side, h / 6);
  for (int r = 0; r < 2; ++r) {
    const int rh = rng.uniform_int(min_side, max_side);
    const int rw = rng.uniform_int(min_side, max_side);
    const int y0 = rng.uniform_int(0, h - rh);
    const int x0 = rng.uniform_int(0, w - rw);
    for (int y = y0; y < y0 + rh; ++y) {
      for (int x = x0; x < x0 + rw; ++x) {
        if (dense.at(y, x) == 0) sparse.at(y, x) = 0;
      }
    }
  }
  return out;
}

// ---- augmentation -----------------------------------------------------------

namespace {

// source[dst] gives the source flat index for every destination pixel.
Sample permute(const Sample& sample, const std::vector<int>& source) {
  const int n = sample.size();
  const std::size_t plane = static_cast<std::size_t>(n) * n;
  Sample out = sample;
  std::vector<int> dest(plane);
  for (std::size_t d = 0; d < plane; ++d) {
    dest[source[d]] = static_cast<int>(d);
    out.sparse_mask.labels[d] = sample.sparse_mask.labels[source[d]];
    out.dense_mask.labels[d] = sample.dense_mask.labels[source[d]];
    for (int c = 0; c < 3; ++c) out.image[c * plane + d] = sample.image[c * plane + source[d]];
  }
  for (Instance& inst : out.instances) {
    for (int& p : inst.pixels) p = dest[p];
    std::sort(inst.pixels.begin(), inst.pixels.end());
  }
  return out;
}

void require_square(const Sample& sample) {
  if (sample.dense_mask.height != sample.dense_mask.width) {
    throw ShapeError("augmentation requires a square sample");
  }
}

}  // namespace

Sample rotate90(const Sample& sample, int k) {
  require_square(sample);
  const int n = sample.size();
  k = ((k % 4) + 4) % 4;
  std::vector<int> source(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      int si = i, sj = j;
      // Counter-clockwise: dst(i, j) = src(j, n-1-i), applied k times.
      for (int r = 0; r < k; ++r) {
        const int ti = sj, tj = n - 1 - si;
        si = ti;
        sj = tj;
      }
      source[static_cast<std::size_t>(i) * n + j] = si * n + sj;
    }
  }
  return permute(sample, source);
}

Sample flip_horizontal(const Sample& sample) {
  require_square(sample);
  const int n = sample.size();
  std::vector<int> source(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) source[static_cast<std::size_t>(i) * n + j] = i * n + (n - 1 - j);
  }
  return permute(sample, source);
}

Sample augment(const Sample& sample, Rng& rng, const AugmentOptions& options) {
  require_square(sample);
  const int k = options.rotate ? rng.uniform_int(0, 3) : 0;
  const bool flip = options.flip && rng.bernoulli(0.5);
  Sample out = k ? rotate90(sample, k) : sample;
  if (flip) out = flip_horizontal(out);
  if (options.noise_sigma > 0.0) {
    for (double& v : out.image.data()) {
      v = std::clamp(v + options.noise_sigma * rng.normal(), 0.0, 1.0);
    }
  }
  return out;
}

Tensor normalize(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("normalize: expected [3,H,W], got " + shape_string(image.shape()));
  }
  Tensor out = image;
  const std::size_t plane = static_cast<std::size_t>(image.dim(1)) * image.dim(2);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      out[c * plane + p] = (image[c * plane + p] - kChannelMean[c]) / kChannelStd[c];
    }
  }
  return out;
}

Tensor denormalize(const Tensor& image) {
  Tensor out = image;
  const std::size_t plane = static_cast<std::size_t>(image.dim(1)) * image.dim(2);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      out[c * plane + p] = image[c * plane + p] * kChannelStd[c] + kChannelMean[c];
    }
  }
  return out;
}

// ---- dataset directories ----------------------------------------------------

namespace {

constexpr std::array<const char*, 3> kSplits = {"train", "val", "test"};

std::uint64_t split_stream(const std::string& split) {
  if (split == "train") return 1;
  if (split == "val") return 2;
  if (split == "test") return 3;
  throw DataError("unknown split '" + split + "'");
}

int split_count(const DatasetSpec& spec, const std::string& split) {
  return split == "train" ? spec.train : split == "val" ? spec.val : spec.test;
}

std::string sample_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return buf;
}

void validate(const DatasetSpec& spec) {
  if (spec.train < 0 || spec.val < 0 || spec.test < 0) throw ConfigError("split sizes must be >= 0");
  if (spec.size < 32 || spec.size % 2 != 0) throw ConfigError("image size must be even and >= 32");
  if (!(spec.annot_fraction > 0.0 && spec.annot_fraction <= 1.0)) {
    throw ConfigError("annot_fraction must lie in (0, 1]");
  }
}

}  // namespace

std::uint64_t sample_seed(std::uint64_t dataset_seed, const std::string& split, int index) {
  return derive_seed(dataset_seed, split_stream(split), static_cast<std::uint64_t>(index));
}

Dataset generate_dataset(const DatasetSpec& spec, std::vector<ManifestEntry>* manifest) {
  validate(spec);
  Dataset ds;
  for (const char* split : kSplits) {
    std::vector<Sample>& out = std::string(split) == "train" ? ds.train
                               : std::string(split) == "val" ? ds.val
                                                             : ds.test;
    const int n = split_count(spec, split);
    for (int k = 0; k < n; ++k) {
      const std::uint64_t seed = sample_seed(spec.seed, split, k);
      Sample s = sparsify(generate_sample(seed, spec.size, spec.mix), spec.annot_fraction,
                          mix_seed(seed ^ 0x5a5a5a5aULL));
      s.image = dequantize(quantize(s.image));
      if (manifest) {
        manifest->push_back({split, sample_id(k), seed, s.count_instances(1), s.count_instances(2),
                             s.count_instances(3), s.count_annotated(), s.dropped_instances});
      }
      out.push_back(std::move(s));
    }
  }
  return ds;
}

void write_dataset(const std::filesystem::path& root, const DatasetSpec& spec) {
  validate(spec);
  std::error_code ec;
  for (const char* split : kSplits) {
    std::filesystem::create_directories(root / split, ec);
    if (ec) throw DataError("cannot create " + (root / split).string() + ": " + ec.message());
  }
  std::vector<ManifestEntry> manifest;
  const Dataset ds = generate_dataset(spec, &manifest);
  std::size_t m = 0;
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (const Sample& s : *split) {
      const ManifestEntry& e = manifest[m++];
      const auto base = root / e.split;
      write_ppm(base / (e.id + ".img.ppm"), quantize(s.image));
      write_pgm(base / (e.id + ".sparse.pgm"), s.sparse_mask);
      write_pgm(base / (e.id + ".dense.pgm"), s.dense_mask);
    }
  }
  std::ostringstream os;
  for (const ManifestEntry& e : manifest) {
    os << e.split << '\t' << e.id << '\t' << e.seed << '\t' << e.benign << '\t' << e.malignant
       << '\t' << e.pdcg << '\t' << e.annotated << '\t' << e.dropped << '\n';
  }
  write_file(root / "manifest.txt", os.str());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& root) {
  std::ifstream in(root / "manifest.txt");
  if (!in) throw DataError("cannot open " + (root / "manifest.txt").string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.split >> e.id >> e.seed >> e.benign >> e.malignant >> e.pdcg >> e.annotated >>
          e.dropped)) {
      throw DataError("manifest.txt line " + std::to_string(line_no) + ": malformed entry");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<Sample> load_split(const std::filesystem::path& root, const std::string& split) {
  split_stream(split);
  std::vector<Sample> samples;
  for (const ManifestEntry& e : read_manifest(root)) {
    if (e.split != split) continue;
    const auto base = root / split;
    Sample s;
    s.image = dequantize(read_ppm(base / (e.id + ".img.ppm")));
    s.sparse_mask = read_pgm(base / (e.id + ".sparse.pgm"));
    s.dense_mask = read_pgm(base / (e.id + ".dense.pgm"));
    if (s.sparse_mask.height != s.image.dim(1) || s.sparse_mask.width != s.image.dim(2) ||
        s.dense_mask.height != s.image.dim(1) || s.dense_mask.width != s.image.dim(2)) {
      throw ShapeError("sample " + e.id + ": mask and image dimensions differ");
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace sgts

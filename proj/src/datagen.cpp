#include "dahf/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>

#include "dahf/dct.hpp"
#include "dahf/image_io.hpp"
#include "dahf/dataset.hpp"
#include "json.hpp"

namespace dahf::datagen {

namespace {

constexpr double kSensorNoise = 0.012;

double quantize(double v) { return static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0; }

void quantize_all(Tensor& t) {
  for (double& v : t.values()) v = quantize(v);
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }
double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
double normal(Rng& rng, double sd) { return std::normal_distribution<double>(0.0, sd)(rng); }

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

// Separable Gaussian blur of one h x w plane, reflected borders.
void blur_plane(double* p, int h, int w, double sigma) {
  if (sigma <= 0.0) return;
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double z = 0.0;
  for (int i = -r; i <= r; ++i) z += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= z;
  std::vector<double> tmp(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * p[y * w + reflect(x + i, w)];
      tmp[y * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[reflect(y + i, h) * w + x];
      p[y * w + x] = acc;
    }
}

Tensor blurred(const Tensor& t, double sigma) {
  Tensor out = t;
  for (int c = 0; c < out.channels(); ++c) blur_plane(out.channel(c).data(), out.height(), out.width(), sigma);
  return out;
}

// Smooth random field: a g x g lattice of N(0,1) values, bilinearly interpolated (corner aligned).
std::vector<double> lattice_noise(int size, int g, Rng& rng) {
  std::vector<double> lat(static_cast<std::size_t>(g) * g);
  for (double& v : lat) v = normal(rng, 1.0);
  std::vector<double> out(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    const double fy = size > 1 ? static_cast<double>(y) * (g - 1) / (size - 1) : 0.0;
    const int y0 = std::min(static_cast<int>(fy), g - 2);
    const double ly = fy - y0;
    for (int x = 0; x < size; ++x) {
      const double fx = size > 1 ? static_cast<double>(x) * (g - 1) / (size - 1) : 0.0;
      const int x0 = std::min(static_cast<int>(fx), g - 2);
      const double lx = fx - x0;
      out[y * size + x] = (1 - ly) * ((1 - lx) * lat[y0 * g + x0] + lx * lat[y0 * g + x0 + 1]) +
                          ly * ((1 - lx) * lat[(y0 + 1) * g + x0] + lx * lat[(y0 + 1) * g + x0 + 1]);
    }
  }
  return out;
}

// Noise-free procedural scene in [0,1].
Tensor procedural_scene(int size, Rng& rng) {
  Tensor img = Tensor::chw(3, size, size);
  constexpr std::array<int, 4> kGrids = {3, 5, 9, 17};
  for (int c = 0; c < 3; ++c) {
    const double base = uniform(rng, 0.25, 0.75);
    auto plane = img.channel(c);
    std::fill(plane.begin(), plane.end(), base);
    for (std::size_t o = 0; o < kGrids.size(); ++o) {
      const auto field = lattice_noise(size, kGrids[o], rng);
      const double amp = 0.12 / (1.0 + static_cast<double>(o));
      for (std::size_t i = 0; i < plane.size(); ++i) plane[i] += amp * field[i];
    }
  }
  const int shapes = 2 + static_cast<int>(uniform01(rng) * 4.0);
  for (int s = 0; s < shapes; ++s) {
    const bool disc = uniform01(rng) < 0.5;
    const double cy = uniform(rng, 0.0, size), cx = uniform(rng, 0.0, size);
    const double ry = size * uniform(rng, 0.08, 0.25), rx = disc ? ry : size * uniform(rng, 0.08, 0.25);
    const double opacity = uniform(rng, 0.6, 1.0);
    std::array<double, 3> color{uniform01(rng), uniform01(rng), uniform01(rng)};
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
        double inside;
        if (disc) {
          inside = ry - std::sqrt(dy * dy + dx * dx);
        } else {
          inside = std::min(ry - std::abs(dy), rx - std::abs(dx));
        }
        const double a = opacity * std::clamp(inside + 0.5, 0.0, 1.0);
        if (a <= 0.0) continue;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = (1 - a) * img.at(c, y, x) + a * color[c];
      }
  }
  const double tilt = uniform(rng, -0.1, 0.1);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) img.at(c, y, x) = std::clamp(img.at(c, y, x) + tilt * (x + 0.5 - size / 2.0) / size, 0.0, 1.0);
  return img;
}

Tensor make_mask_tensor(const std::vector<double>& alpha, int size) {
  Tensor m = Tensor::chw(1, size, size);
  for (std::size_t i = 0; i < alpha.size(); ++i) m[i] = alpha[i] > 0.0 ? 1.0 : 0.0;
  return m;
}

// Connected blob with a 2-pixel feathered rim; returns per-pixel blend weights (0 outside the mask).
std::vector<double> make_blob(int size, Rng& rng) {
  const int n = size * size;
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double target = uniform(rng, 0.06, 0.25);
    std::vector<double> field(static_cast<std::size_t>(n));
    for (double& v : field) v = normal(rng, 1.0);
    blur_plane(field.data(), size, size, std::max(1.0, size / 12.0));
    double sd = 0.0;
    for (double v : field) sd += v * v;
    sd = std::sqrt(sd / n) + 1e-12;
    const double cy = uniform(rng, 0.25, 0.75) * size, cx = uniform(rng, 0.25, 0.75) * size;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double d = std::hypot(y + 0.5 - cy, x + 0.5 - cx) / (0.3 * size);
        field[y * size + x] = 0.6 * field[y * size + x] / sd - d * d;
      }
    std::vector<double> sorted = field;
    const int cut = std::clamp(static_cast<int>((1.0 - target) * n), 0, n - 1);
    std::nth_element(sorted.begin(), sorted.begin() + cut, sorted.end());
    const double thr = sorted[cut];

    // Flood fill the component holding the field maximum.
    const int seed = static_cast<int>(std::max_element(field.begin(), field.end()) - field.begin());
    std::vector<char> core(static_cast<std::size_t>(n), 0);
    std::vector<int> stack{seed};
    core[seed] = 1;
    int area = 0;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++area;
      const int y = p / size, x = p % size;
      const int nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[0] >= size || q[1] < 0 || q[1] >= size) continue;
        const int qi = q[0] * size + q[1];
        if (!core[qi] && field[qi] > thr) {
          core[qi] = 1;
          stack.push_back(qi);
        }
      }
    }
    if (area < 0.02 * n) continue;

    std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);
    int masked = 0;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double best = 9.0;
        for (int dy = -2; dy <= 2; ++dy)
          for (int dx = -2; dx <= 2; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= size || xx < 0 || xx >= size || !core[yy * size + xx]) continue;
            best = std::min(best, std::sqrt(static_cast<double>(dy * dy + dx * dx)));
          }
        double a = 0.0;
        if (best == 0.0) {
          a = 1.0;
        } else if (best <= 1.0) {
          a = 2.0 / 3.0;
        } else if (best <= 2.0) {
          a = 1.0 / 3.0;
        }
        alpha[y * size + x] = a;
        masked += a > 0.0;
      }
    const double frac = static_cast<double>(masked) / n;
    if (frac >= 0.02 && frac <= 0.40) return alpha;
  }
  throw ValidationError("could not place a 2%-40% blob at size " + std::to_string(size));
}

void add_pattern(Tensor& t, const std::function<double(int, int)>& f) {
  for (int c = 0; c < t.channels(); ++c)
    for (int y = 0; y < t.height(); ++y)
      for (int x = 0; x < t.width(); ++x) t.at(c, y, x) += f(y, x);
}

}  // namespace

void validate_sample(const ImageSample& s, const ClassHierarchy& h) {
  const Tensor& im = s.image;
  if (im.rank() != 3 || im.channels() != 3) throw ValidationError("sample image must be (3,H,W)");
  if (s.mask.rank() != 3 || s.mask.channels() != 1 || s.mask.height() != im.height() || s.mask.width() != im.width()) {
    throw ValidationError("sample mask must be (1,H,W) matching the image");
  }
  for (double v : im.values())
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw ValidationError("sample image outside [0,1]");
  double sum = 0.0;
  for (double v : s.mask.values()) {
    if (v != 0.0 && v != 1.0) throw ValidationError("sample mask not binary");
    sum += v;
  }
  const double n = static_cast<double>(s.mask.size());
  if (s.method == MethodTag::Real && sum != 0.0) throw ValidationError("real sample with forged pixels");
  if (is_full_forgery(s.method) && sum != n) throw ValidationError("full forgery without an all-ones mask");
  if (is_partial_forgery(s.method) && (sum == 0.0 || sum == n)) throw ValidationError("partial forgery mask is empty or full");
  if (!h.consistent(s.label_path) || s.label_path != h.label_path(s.method)) {
    throw ValidationError("label path inconsistent with method " + std::string(method_name(s.method)));
  }
}

void CorpusSpec::validate() const {
  for (int c : counts)
    if (c < 0) throw ValidationError("corpus counts must be >= 0");
  if (branch_factor < 1) throw ValidationError("branch factor must be >= 1");
  const int s3 = branch_factor * branch_factor * branch_factor;
  if (image_size < 8 || image_size % 8 != 0 || image_size % s3 != 0) {
    throw ValidationError("image_size " + std::to_string(image_size) + " must be a multiple of 8 and of s^3 = " +
                          std::to_string(s3));
  }
  if (output_root.empty()) throw ValidationError("corpus output_root is required");
}

int CorpusSpec::total() const { return std::accumulate(counts.begin(), counts.end(), 0); }

std::string_view split_name(Split s) { return s == Split::Train ? "train" : "test"; }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

ImageSample synthesize_real(int size, Rng& rng) {
  ImageSample s;
  s.image = procedural_scene(size, rng);
  for (double& v : s.image.values()) v += normal(rng, kSensorNoise);
  quantize_all(s.image);
  s.mask = Tensor::chw(1, size, size, 0.0);
  s.method = MethodTag::Real;
  s.label_path = ClassHierarchy::standard().label_path(s.method);
  return s;
}

ImageSample synthesize_partial_forgery(const Tensor& base, MethodTag method, Rng& rng) {
  if (!is_partial_forgery(method)) {
    throw ValidationError("synthesize_partial_forgery: " + std::string(method_name(method)) + " is not a partial-edit method");
  }
  if (base.rank() != 3 || base.channels() != 3 || base.height() != base.width()) {
    throw ValidationError("synthesize_partial_forgery: base must be a square (3,H,W) image");
  }
  const int size = base.height();
  const auto alpha = make_blob(size, rng);

  Tensor edit;
  switch (method) {
    case MethodTag::GanPartTxt: {
      // Attribute edit: colour shift plus a column-alternating upsampling trace.
      edit = blurred(base, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double shift = uniform(rng, -0.12, 0.12);
        for (double& v : edit.channel(c)) v += shift;
      }
      add_pattern(edit, [](int, int x) { return (x % 2 ? 0.035 : -0.035); });
      break;
    }
    case MethodTag::DmPartImg: {
      // Exemplar paste: foreign, noise-free, low-pass content.
      edit = blurred(procedural_scene(size, rng), 1.3);
      break;
    }
    case MethodTag::DmPartTxt: {
      // Text inpainting: smoothed fill carrying a diagonal periodic residual.
      edit = blurred(base, 1.5);
      add_pattern(edit, [](int y, int x) { return 0.04 * std::sin(2.0 * std::numbers::pi * (x + y) / 5.0); });
      break;
    }
    default:
      break;
  }

  ImageSample s;
  s.image = base;
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < size * size; ++p) {
      const double a = alpha[p];
      if (a <= 0.0) continue;
      double& dst = s.image.channel(c)[p];
      dst = quantize(a * edit.channel(c)[p] + (1.0 - a) * base.channel(c)[p]);
    }
  s.mask = make_mask_tensor(alpha, size);
  s.method = method;
  s.label_path = ClassHierarchy::standard().label_path(method);
  return s;
}

ImageSample synthesize_full_forgery(MethodTag method, int size, Rng& rng) {
  if (!is_full_forgery(method)) {
    throw ValidationError("synthesize_full_forgery: " + std::string(method_name(method)) + " is not a full-synthesis method");
  }
  if (size < 8) throw ValidationError("synthesize_full_forgery: size must be >= 8");
  Tensor img;
  switch (method) {
    case MethodTag::GanFullImg: {
      // Half-resolution generation, nearest-neighbour upsampling, checkerboard trace.
      const Tensor half = blurred(procedural_scene(size / 2, rng), 0.8);
      img = Tensor::chw(3, size, size);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x) img.at(c, y, x) = half.at(c, std::min(y / 2, half.height() - 1), std::min(x / 2, half.width() - 1));
      add_pattern(img, [](int y, int x) { return ((x + y) % 2 ? 0.03 : -0.03); });
      break;
    }
    case MethodTag::GanFullTxt: {
      // Transposed-convolution grid: period-4 lattice in both axes.
      img = blurred(procedural_scene(size, rng), 1.0);
      add_pattern(img, [](int y, int x) {
        return 0.045 * std::cos(std::numbers::pi * x / 2.0) * std::cos(std::numbers::pi * y / 2.0);
      });
      break;
    }
    case MethodTag::DmFullImg: {
      // Incompletely denoised sample: smooth content under strong white noise.
      img = blurred(procedural_scene(size, rng), 1.5);
      for (double& v : img.values()) v += normal(rng, 0.045);
      break;
    }
    case MethodTag::DmFullTxt: {
      // Latent-block decoding: coarse 8x8 DCT quantization.
      img = blurred(procedural_scene(size, rng), 0.7);
      const int h8 = size / 8 * 8;
      for (int c = 0; c < 3; ++c) {
        std::vector<double> plane(static_cast<std::size_t>(h8) * h8);
        for (int y = 0; y < h8; ++y)
          for (int x = 0; x < h8; ++x) plane[y * h8 + x] = img.at(c, y, x);
        block_dct_forward(plane, h8, h8);
        for (int y = 0; y < h8; ++y)
          for (int x = 0; x < h8; ++x) {
            const double step = (y % 8 == 0 && x % 8 == 0) ? 0.1 : 0.25;
            double& v = plane[y * h8 + x];
            v = step * std::round(v / step);
          }
        block_dct_inverse(plane, h8, h8);
        for (int y = 0; y < h8; ++y)
          for (int x = 0; x < h8; ++x) img.at(c, y, x) = plane[y * h8 + x];
      }
      break;
    }
    default:
      break;
  }
  quantize_all(img);
  ImageSample s;
  s.image = std::move(img);
  s.mask = Tensor::chw(1, size, size, 1.0);
  s.method = method;
  s.label_path = ClassHierarchy::standard().label_path(method);
  return s;
}

ImageSample synthesize(MethodTag method, int size, std::uint64_t seed) {
  Rng rng(seed);
  if (method == MethodTag::Real) return synthesize_real(size, rng);
  if (is_full_forgery(method)) return synthesize_full_forgery(method, size, rng);
  const ImageSample base = synthesize_real(size, rng);
  return synthesize_partial_forgery(base.image, method, rng);
}

Tensor apply_transform(const Tensor& chw, const Transform& t) {
  Tensor cur = chw;
  if (t.flip) {
    Tensor out(cur.shape());
    for (int c = 0; c < cur.channels(); ++c)
      for (int y = 0; y < cur.height(); ++y)
        for (int x = 0; x < cur.width(); ++x) out.at(c, y, x) = cur.at(c, y, cur.width() - 1 - x);
    cur = std::move(out);
  }
  const int turns = ((t.quarter_turns % 4) + 4) % 4;
  for (int r = 0; r < turns; ++r) {
    // Counter-clockwise: new[y][x] = old[x][W-1-y].
    const int h = cur.height(), w = cur.width();
    Tensor out = Tensor::chw(cur.channels(), w, h);
    for (int c = 0; c < cur.channels(); ++c)
      for (int y = 0; y < w; ++y)
        for (int x = 0; x < h; ++x) out.at(c, y, x) = cur.at(c, x, w - 1 - y);
    cur = std::move(out);
  }
  return cur;
}

ImageSample augment(const ImageSample& sample, const Transform& t) {
  ImageSample out = sample;
  out.image = apply_transform(sample.image, t);
  out.mask = apply_transform(sample.mask, t);
  return out;
}

ImageSample augment(const ImageSample& sample, Rng& rng) {
  Transform t;
  t.quarter_turns = static_cast<int>(rng() % 4);
  t.flip = (rng() & 1u) != 0;
  return augment(sample, t);
}

std::vector<Split> stratified_split(const std::vector<MethodTag>& methods, std::uint64_t seed, double test_fraction) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw ValidationError("test_fraction must lie in [0,1]");
  const int n = static_cast<int>(methods.size());
  std::vector<Split> out(static_cast<std::size_t>(n), Split::Train);
  if (n == 0) return out;
  const int n_test = static_cast<int>(std::lround(n * test_fraction));

  std::array<std::vector<int>, kMethodCount> members;
  for (int i = 0; i < n; ++i) members[static_cast<int>(methods[i])].push_back(i);

  std::array<int, kMethodCount> quota{};
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int m = 0; m < kMethodCount; ++m) {
    const double exact = static_cast<double>(members[m].size()) * n_test / n;
    quota[m] = static_cast<int>(std::floor(exact));
    assigned += quota[m];
    remainders.emplace_back(exact - quota[m], m);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; assigned < n_test; ++k, ++assigned) ++quota[remainders[k].second];

  for (int m = 0; m < kMethodCount; ++m) {
    auto idx = members[m];
    Rng rng(derive_seed(seed, 0x5151 + m));
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int k = 0; k < quota[m]; ++k) out[idx[k]] = Split::Test;
  }
  return out;
}

CorpusManifest generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  const auto& root = spec.output_root;
  std::error_code ec;
  std::filesystem::create_directories(root / "images", ec);
  if (!ec) std::filesystem::create_directories(root / "masks", ec);
  if (ec) throw IoError("cannot create corpus directories under " + root.string() + ": " + ec.message());

  CorpusManifest manifest;
  std::vector<MethodTag> methods;
  for (MethodTag tag : kAllMethods)
    for (int k = 0; k < spec.counts[static_cast<int>(tag)]; ++k) methods.push_back(tag);
  const auto splits = stratified_split(methods, spec.seed);
  const ClassHierarchy hierarchy = ClassHierarchy::standard();

  manifest.records.resize(methods.size());
  for (std::size_t i = 0; i < methods.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", i);
    ManifestRecord& r = manifest.records[i];
    r.id = static_cast<int>(i);
    r.image = std::string("images/") + name;
    r.mask = std::string("masks/") + name;
    r.method = methods[i];
    r.label_path = hierarchy.label_path(methods[i]);
    r.seed_id = derive_seed(spec.seed, i);
    r.split = splits[i];
  }

  std::exception_ptr failure;
  const int total = static_cast<int>(methods.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < total; ++i) {
    try {
      const ManifestRecord& r = manifest.records[i];
      const ImageSample s = synthesize(r.method, spec.image_size, r.seed_id);
      write_png(root / r.image, tensor_to_image(s.image));
      write_png(root / r.mask, tensor_to_image(s.mask));
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  write_manifest(root, manifest);
  nlohmann::json info;
  info["image_size"] = spec.image_size;
  info["branch_factor"] = spec.branch_factor;
  info["seed"] = spec.seed;
  nlohmann::json counts = nlohmann::json::object();
  for (MethodTag tag : kAllMethods) counts[std::string(method_name(tag))] = spec.counts[static_cast<int>(tag)];
  info["counts"] = counts;
  atomic_write(root / "corpus.json", info.dump(2) + "\n");
  return manifest;
}

}  // namespace dahf::datagen

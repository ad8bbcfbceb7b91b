#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dahf/params.hpp"
#include "dahf/taxonomy.hpp"
#include "dahf/tensor.hpp"

namespace dahf::datagen {

/// One corpus sample: image (3,H,W) in [0,1], mask (1,H,W) in {0,1} with
/// 1 = forged pixel, and its hierarchical labels.
struct ImageSample {
  Tensor image;
  Tensor mask;
  LabelPath label_path{};
  MethodTag method = MethodTag::Real;
};

/// Checks the sample invariants (finite, bounded, mask/method consistency,
/// label ancestry); throws ValidationError naming the first violation.
void validate_sample(const ImageSample& s, const ClassHierarchy& h = ClassHierarchy::standard());

struct CorpusSpec {
  std::array<int, kMethodCount> counts{};  // indexed by MethodTag
  int image_size = 256;
  int branch_factor = 2;  // s; image_size must also be a multiple of s^3
  std::uint64_t seed = 0;
  std::filesystem::path output_root;

  void validate() const;
  int total() const;
};

enum class Split { Train, Test };
std::string_view split_name(Split s);

/// One line of manifest.jsonl. Field names on disk: id, image, mask,
/// label_path, method_tag, seed_id, split.
struct ManifestRecord {
  int id = 0;
  std::string image;  // relative to the corpus root
  std::string mask;
  LabelPath label_path{};
  MethodTag method = MethodTag::Real;
  std::uint64_t seed_id = 0;
  Split split = Split::Train;
};

struct CorpusManifest {
  std::vector<ManifestRecord> records;
};

/// splitmix64 of (seed, index): the per-record random stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Procedural "camera" image: multi-scale coloured noise, composited shapes
/// and mild i.i.d. sensor noise, quantized to 8 bits.
ImageSample synthesize_real(int size, Rng& rng);

/// Replaces one connected, feathered blob (2%-40% of the area) of `base`
/// with method-fingerprinted content. Pixels outside the mask keep their
/// exact base values.
ImageSample synthesize_partial_forgery(const Tensor& base, MethodTag method, Rng& rng);

/// Whole-image synthesis through the method's procedural pipeline.
ImageSample synthesize_full_forgery(MethodTag method, int size, Rng& rng);

/// Sample for `method` drawn from the stream seeded by `seed`.
ImageSample synthesize(MethodTag method, int size, std::uint64_t seed);

/// Element of the dihedral group: horizontal flip (applied first), then
/// `quarter_turns` counter-clockwise rotations by 90 degrees.
struct Transform {
  int quarter_turns = 0;
  bool flip = false;
};

Tensor apply_transform(const Tensor& chw, const Transform& t);
ImageSample augment(const ImageSample& sample, const Transform& t);
/// Random rotation/flip, applied identically to image and mask.
ImageSample augment(const ImageSample& sample, Rng& rng);

/// Test-set membership with a 9:1 ratio, stratified by method. Exactly
/// round(n * test_fraction) samples go to test; each method gets its
/// proportional share by largest remainder, members chosen by a seeded shuffle.
std::vector<Split> stratified_split(const std::vector<MethodTag>& methods, std::uint64_t seed,
                                    double test_fraction = 0.1);

/// Writes images/NNNNNN.png, masks/NNNNNN.png, manifest.jsonl and corpus.json
/// under spec.output_root. Deterministic in (spec, seed).
CorpusManifest generate_corpus(const CorpusSpec& spec);

}  // namespace dahf::datagen

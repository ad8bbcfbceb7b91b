#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dahf/tensor.hpp"

namespace dahf {

/// Generation method of a sample. The underlying value is the stage-4
/// (finest) class index.
enum class MethodTag : int {
  Real = 0,
  GanFullImg = 1,  // BigGAN-like: GAN, whole image, image-guided
  GanFullTxt = 2,  // FuseDream-like: GAN, whole image, text-guided
  GanPartTxt = 3,  // StyleCLIP-like: GAN, partial edit, text-guided
  DmFullImg = 4,   // DDPM-like: diffusion, whole image, image-guided
  DmFullTxt = 5,   // GLIDE-like: diffusion, whole image, text-guided
  DmPartImg = 6,   // Paint-by-Example-like: diffusion, partial edit, image-guided
  DmPartTxt = 7,   // Inpaint-Anything-like: diffusion, partial edit, text-guided
};

inline constexpr int kMethodCount = 8;
inline constexpr int kStageCount = 4;

inline constexpr std::array<MethodTag, kMethodCount> kAllMethods = {
    MethodTag::Real,      MethodTag::GanFullImg, MethodTag::GanFullTxt, MethodTag::GanPartTxt,
    MethodTag::DmFullImg, MethodTag::DmFullTxt,  MethodTag::DmPartImg,  MethodTag::DmPartTxt};

std::string_view method_name(MethodTag tag);
std::optional<MethodTag> parse_method(std::string_view name);

bool is_full_forgery(MethodTag tag);
bool is_partial_forgery(MethodTag tag);
bool is_gan(MethodTag tag);
bool is_diffusion(MethodTag tag);

/// Class index per stage, coarse (stage 1) to fine (stage 4).
using LabelPath = std::array<int, kStageCount>;

/// Four-level coarse-to-fine taxonomy:
///   stage 1 {real, fake}
///   stage 2 {real, GAN, diffusion}
///   stage 3 {real, GAN-full, GAN-partial, DM-full, DM-partial}
///   stage 4 {real, 7 generation methods}
class ClassHierarchy {
 public:
  static ClassHierarchy standard();

  ClassHierarchy(std::array<int, kStageCount> sizes, std::array<std::vector<int>, kStageCount - 1> parents,
                 std::array<std::vector<std::string>, kStageCount> names);

  int size(int stage) const { return sizes_[stage]; }
  const std::array<int, kStageCount>& sizes() const { return sizes_; }
  /// parent(stage, c): class at `stage` (0-based) whose child is class c at stage+1.
  int parent(int stage, int child) const { return parents_[stage][child]; }
  const std::string& name(int stage, int c) const { return names_[stage][c]; }

  /// (|stage+1| x |stage|) 0/1 matrix with E[f][p] = 1 iff p is f's parent.
  Tensor expansion(int stage) const;

  LabelPath label_path(int fine_class) const;
  LabelPath label_path(MethodTag tag) const { return label_path(static_cast<int>(tag)); }
  bool consistent(const LabelPath& path) const;

  bool operator==(const ClassHierarchy& other) const = default;

 private:
  std::array<int, kStageCount> sizes_;
  std::array<std::vector<int>, kStageCount - 1> parents_;
  std::array<std::vector<std::string>, kStageCount> names_;
};

}  // namespace dahf

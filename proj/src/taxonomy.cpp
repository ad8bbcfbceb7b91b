#include "dahf/taxonomy.hpp"

namespace dahf {

namespace {
constexpr std::array<std::string_view, kMethodCount> kNames = {
    "real", "ganfull-img", "ganfull-txt", "ganpart-txt", "dmfull-img", "dmfull-txt", "dmpart-img", "dmpart-txt"};
}

std::string_view method_name(MethodTag tag) { return kNames[static_cast<int>(tag)]; }

std::optional<MethodTag> parse_method(std::string_view name) {
  for (int i = 0; i < kMethodCount; ++i)
    if (kNames[i] == name) return static_cast<MethodTag>(i);
  return std::nullopt;
}

bool is_full_forgery(MethodTag tag) {
  return tag == MethodTag::GanFullImg || tag == MethodTag::GanFullTxt || tag == MethodTag::DmFullImg ||
         tag == MethodTag::DmFullTxt;
}

bool is_partial_forgery(MethodTag tag) {
  return tag == MethodTag::GanPartTxt || tag == MethodTag::DmPartImg || tag == MethodTag::DmPartTxt;
}

bool is_gan(MethodTag tag) {
  return tag == MethodTag::GanFullImg || tag == MethodTag::GanFullTxt || tag == MethodTag::GanPartTxt;
}

bool is_diffusion(MethodTag tag) { return tag != MethodTag::Real && !is_gan(tag); }

ClassHierarchy ClassHierarchy::standard() {
  return ClassHierarchy(
      {2, 3, 5, 8},
      {std::vector<int>{0, 1, 1}, std::vector<int>{0, 1, 1, 2, 2}, std::vector<int>{0, 1, 1, 2, 3, 3, 4, 4}},
      {std::vector<std::string>{"real", "fake"}, std::vector<std::string>{"real", "gan", "diffusion"},
       std::vector<std::string>{"real", "gan-full", "gan-partial", "dm-full", "dm-partial"},
       std::vector<std::string>{kNames.begin(), kNames.end()}});
}

ClassHierarchy::ClassHierarchy(std::array<int, kStageCount> sizes,
                               std::array<std::vector<int>, kStageCount - 1> parents,
                               std::array<std::vector<std::string>, kStageCount> names)
    : sizes_(sizes), parents_(std::move(parents)), names_(std::move(names)) {
  for (int t = 0; t < kStageCount; ++t) {
    if (sizes_[t] < 1 || static_cast<int>(names_[t].size()) != sizes_[t]) {
      throw ValidationError("hierarchy: stage label set size mismatch");
    }
  }
  for (int t = 0; t + 1 < kStageCount; ++t) {
    if (static_cast<int>(parents_[t].size()) != sizes_[t + 1]) throw ValidationError("hierarchy: parent table size");
    for (int p : parents_[t])
      if (p < 0 || p >= sizes_[t]) throw ValidationError("hierarchy: parent index out of range");
    if (parents_[t][0] != 0) throw ValidationError("hierarchy: real must map to real");
  }
}

Tensor ClassHierarchy::expansion(int stage) const {
  if (stage < 0 || stage + 1 >= kStageCount) throw ValidationError("hierarchy: no expansion from last stage");
  Tensor e({sizes_[stage + 1], sizes_[stage]}, 0.0);
  for (int f = 0; f < sizes_[stage + 1]; ++f) e[static_cast<std::size_t>(f) * sizes_[stage] + parents_[stage][f]] = 1.0;
  return e;
}

LabelPath ClassHierarchy::label_path(int fine_class) const {
  if (fine_class < 0 || fine_class >= sizes_[kStageCount - 1]) throw ValidationError("hierarchy: class out of range");
  LabelPath path{};
  path[kStageCount - 1] = fine_class;
  for (int t = kStageCount - 2; t >= 0; --t) path[t] = parents_[t][path[t + 1]];
  return path;
}

bool ClassHierarchy::consistent(const LabelPath& path) const {
  for (int t = 0; t < kStageCount; ++t)
    if (path[t] < 0 || path[t] >= sizes_[t]) return false;
  for (int t = 0; t + 1 < kStageCount; ++t)
    if (parents_[t][path[t + 1]] != path[t]) return false;
  return true;
}

}  // namespace dahf

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dahf/datagen.hpp"

namespace dahf::datagen {

/// Raised when a manifest is missing, unparsable or inconsistent.
class LoadError : public IoError {
 public:
  using IoError::IoError;
};

/// manifest.jsonl: one JSON object per record, fields
/// {id, image, mask, label_path, method_tag, seed_id, split}.
void write_manifest(const std::filesystem::path& root, const CorpusManifest& manifest);
CorpusManifest read_manifest(const std::filesystem::path& root);

/// Lazily loaded corpus entry. Safe to load concurrently.
struct SampleRef {
  std::filesystem::path root;
  ManifestRecord record;

  ImageSample load() const;
};

struct Dataset {
  std::vector<SampleRef> train;
  std::vector<SampleRef> test;
};

/// Reads the manifest and assigns the stratified 9:1 split drawn from
/// split_seed (the corpus seed reproduces the split stored in the manifest).
Dataset load_dataset(const std::filesystem::path& root, std::uint64_t split_seed);

/// SHA-256 over the manifest and every listed image and mask file.
std::string corpus_hash(const std::filesystem::path& root);

}  // namespace dahf::datagen

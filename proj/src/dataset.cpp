#include "dahf/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "dahf/image_io.hpp"
#include "json.hpp"

namespace dahf::datagen {

namespace {

using nlohmann::json;

json record_to_json(const ManifestRecord& r) {
  return json{{"id", r.id},
              {"image", r.image},
              {"mask", r.mask},
              {"label_path", r.label_path},
              {"method_tag", std::string(method_name(r.method))},
              {"seed_id", r.seed_id},
              {"split", std::string(split_name(r.split))}};
}

ManifestRecord record_from_json(const json& j) {
  ManifestRecord r;
  r.id = j.at("id").get<int>();
  r.image = j.at("image").get<std::string>();
  r.mask = j.at("mask").get<std::string>();
  r.label_path = j.at("label_path").get<LabelPath>();
  const auto tag = parse_method(j.at("method_tag").get<std::string>());
  if (!tag) throw LoadError("unknown method_tag " + j.at("method_tag").dump());
  r.method = *tag;
  r.seed_id = j.at("seed_id").get<std::uint64_t>();
  const auto split = j.at("split").get<std::string>();
  if (split != "train" && split != "test") throw LoadError("unknown split " + split);
  r.split = split == "train" ? Split::Train : Split::Test;
  return r;
}

}  // namespace

void write_manifest(const std::filesystem::path& root, const CorpusManifest& manifest) {
  std::string out;
  for (const auto& r : manifest.records) out += record_to_json(r).dump() + "\n";
  atomic_write(root / "manifest.jsonl", out);
}

CorpusManifest read_manifest(const std::filesystem::path& root) {
  const auto path = root / "manifest.jsonl";
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest " + path.string());
  CorpusManifest m;
  std::set<std::string> seen;
  const ClassHierarchy h = ClassHierarchy::standard();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      ManifestRecord r = record_from_json(json::parse(line));
      if (!h.consistent(r.label_path) || r.label_path != h.label_path(r.method)) {
        throw LoadError("label_path does not match method_tag");
      }
      if (!seen.insert(r.image).second || !seen.insert(r.mask).second) throw LoadError("path listed twice");
      m.records.push_back(std::move(r));
    } catch (const LoadError& e) {
      throw LoadError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const json::exception& e) {
      throw LoadError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (m.records.empty()) throw LoadError("manifest " + path.string() + " has no records");
  return m;
}

ImageSample SampleRef::load() const {
  ImageSample s;
  s.image = image_to_tensor(read_png(root / record.image));
  if (s.image.channels() != 3) throw LoadError(record.image + ": expected an RGB image");
  Tensor mask = image_to_tensor(read_png(root / record.mask));
  if (mask.channels() != 1 || mask.height() != s.image.height() || mask.width() != s.image.width()) {
    throw LoadError(record.mask + ": mask must be single-channel and match the image");
  }
  for (double& v : mask.values()) v = v > 0.5 ? 1.0 : 0.0;
  s.mask = std::move(mask);
  s.method = record.method;
  s.label_path = record.label_path;
  return s;
}

Dataset load_dataset(const std::filesystem::path& root, std::uint64_t split_seed) {
  const CorpusManifest m = read_manifest(root);
  std::vector<MethodTag> methods;
  for (const auto& r : m.records) methods.push_back(r.method);
  const auto splits = stratified_split(methods, split_seed);
  Dataset d;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    ManifestRecord r = m.records[i];
    r.split = splits[i];
    (r.split == Split::Train ? d.train : d.test).push_back(SampleRef{root, std::move(r)});
  }
  return d;
}

std::string corpus_hash(const std::filesystem::path& root) {
  const CorpusManifest m = read_manifest(root);
  std::string acc = sha256_file(root / "manifest.jsonl");
  for (const auto& r : m.records) acc += sha256_file(root / r.image) + sha256_file(root / r.mask);
  return sha256_hex(std::vector<std::uint8_t>(acc.begin(), acc.end()));
}

}  // namespace dahf::datagen

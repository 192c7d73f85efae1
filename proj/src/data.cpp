#include "mclp/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mclp/error.hpp"

namespace fs = std::filesystem;

namespace mclp {

std::vector<std::int64_t> ClipStore::indices_of_split(
    const std::string& split) const {
  std::vector<std::int64_t> out;
  for (std::int64_t i = 0; i < size(); ++i)
    if (info(i).split == split) out.push_back(i);
  return out;
}

int ClipStore::label_count() const {
  int max_label = -1;
  for (std::int64_t i = 0; i < size(); ++i)
    max_label = std::max(max_label, info(i).label);
  return max_label + 1;
}

void ClipStore::check_index(std::int64_t index) const {
  if (index < 0 || index >= size())
    throw UsageError("clip index " + std::to_string(index) +
                     " outside store of " + std::to_string(size()));
}

// ---- SynthStore ----

SynthStore::SynthStore(std::vector<LabeledRecipe> items)
    : items_(std::move(items)) {
  refs_.reserve(items_.size());
  for (const auto& item : items_)
    refs_.push_back(ClipRef{item.name, item.label, item.split});
}

std::int64_t SynthStore::size() const {
  return static_cast<std::int64_t>(items_.size());
}

const ClipRef& SynthStore::info(std::int64_t index) const {
  check_index(index);
  return refs_[static_cast<std::size_t>(index)];
}

AudioClip SynthStore::load(std::int64_t index) const {
  check_index(index);
  return synth_scene(items_[static_cast<std::size_t>(index)].recipe);
}

// ---- ManifestStore ----

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

ManifestStore::ManifestStore(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path);
  root_ = fs::path(manifest_path).parent_path().string();

  std::string line;
  if (!std::getline(in, line))
    throw InputError(manifest_path + ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "path,label,split")
    throw InputError(manifest_path +
                     ": expected header \"path,label,split\", got \"" + line +
                     "\"");

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 3)
      throw InputError(manifest_path + ":" + std::to_string(line_no) +
                       ": expected 3 fields, got " +
                       std::to_string(fields.size()));
    ClipRef ref;
    ref.name = fields[0];
    try {
      std::size_t used = 0;
      ref.label = std::stoi(fields[1], &used);
      if (used != fields[1].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw InputError(manifest_path + ":" + std::to_string(line_no) +
                       ": bad label \"" + fields[1] + "\"");
    }
    if (ref.label < 0)
      throw InputError(manifest_path + ":" + std::to_string(line_no) +
                       ": negative label");
    ref.split = fields[2];
    refs_.push_back(std::move(ref));
  }
  if (refs_.empty()) throw InputError(manifest_path + ": no clips listed");
}

std::int64_t ManifestStore::size() const {
  return static_cast<std::int64_t>(refs_.size());
}

const ClipRef& ManifestStore::info(std::int64_t index) const {
  check_index(index);
  return refs_[static_cast<std::size_t>(index)];
}

AudioClip ManifestStore::load(std::int64_t index) const {
  check_index(index);
  const auto& ref = refs_[static_cast<std::size_t>(index)];
  return read_wav((fs::path(root_) / ref.name).string());
}

// ---- dataset export ----

void write_wav_dataset(const std::string& dir,
                       const std::vector<LabeledRecipe>& items) {
  if (items.empty()) throw UsageError("write_wav_dataset: nothing to write");
  fs::create_directories(dir);
  std::ostringstream manifest;
  manifest << "path,label,split\n";
  for (const auto& item : items) {
    const std::string file = item.name + ".wav";
    write_wav((fs::path(dir) / file).string(), synth_scene(item.recipe),
              WavFormat::float32);
    manifest << file << "," << item.label << "," << item.split << "\n";
  }
  const std::string manifest_path = (fs::path(dir) / "manifest.csv").string();
  std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + manifest_path);
  out << manifest.str();
  if (!out) throw IoError("short write to " + manifest_path);
}

}  // namespace mclp

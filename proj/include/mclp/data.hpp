#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mclp/synth.hpp"
#include "mclp/wav.hpp"

namespace mclp {

struct ClipRef {
  std::string name;
  int label = 0;
  std::string split;
};

// Uniform access to a labeled clip collection. Loading is on demand and
// deterministic: the same index always yields the same samples.
class ClipStore {
 public:
  virtual ~ClipStore() = default;
  virtual std::int64_t size() const = 0;
  virtual const ClipRef& info(std::int64_t index) const = 0;
  virtual AudioClip load(std::int64_t index) const = 0;

  std::vector<std::int64_t> indices_of_split(const std::string& split) const;
  // Labels are expected to be dense from zero; returns max label + 1.
  int label_count() const;

 protected:
  void check_index(std::int64_t index) const;
};

// Clips synthesized in memory from recipes. Nothing touches the disk.
class SynthStore : public ClipStore {
 public:
  explicit SynthStore(std::vector<LabeledRecipe> items);
  std::int64_t size() const override;
  const ClipRef& info(std::int64_t index) const override;
  AudioClip load(std::int64_t index) const override;

 private:
  std::vector<LabeledRecipe> items_;
  std::vector<ClipRef> refs_;
};

// Clips listed in a manifest CSV next to their WAV files. The header must
// be exactly "path,label,split"; paths are resolved against the manifest's
// directory.
class ManifestStore : public ClipStore {
 public:
  explicit ManifestStore(const std::string& manifest_path);
  std::int64_t size() const override;
  const ClipRef& info(std::int64_t index) const override;
  AudioClip load(std::int64_t index) const override;

 private:
  std::string root_;
  std::vector<ClipRef> refs_;
};

// Renders every recipe to <dir>/<name>.wav as float samples and writes
// <dir>/manifest.csv. Float storage keeps the WAV byte-identical to the
// in-memory synthesis.
void write_wav_dataset(const std::string& dir,
                       const std::vector<LabeledRecipe>& items);

}  // namespace mclp

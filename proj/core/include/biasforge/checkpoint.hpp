#pragma once

// Binary parameter blob plus a `key = value` sidecar manifest.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "biasforge/nn.hpp"

namespace biasforge {

class Checkpoint {
 public:
  void put(const std::string& name, std::vector<float> values) { entries_[name] = std::move(values); }
  void put(const std::string& name, std::vector<double> values) { entries_[name] = std::move(values); }
  void put_text(const std::string& name, std::string text) { entries_[name] = std::move(text); }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  // Each accessor throws Errc::missing_parameters for an absent or differently typed entry.
  const std::vector<float>& floats(const std::string& name) const;
  const std::vector<double>& doubles(const std::string& name) const;
  const std::string& text(const std::string& name) const;

  std::vector<std::string> names() const;

  bool operator==(const Checkpoint&) const = default;

 private:
  using Entry = std::variant<std::vector<float>, std::vector<double>, std::string>;
  std::map<std::string, Entry> entries_;

  friend std::string serialize_checkpoint(const Checkpoint&);
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

template <typename T>
void store_parameters(Checkpoint& checkpoint, const std::string& prefix, const nn::ParameterSet<T>& params);
// Overwrites `params` in place; every parameter must be present with a matching size.
template <typename T>
void load_parameters(const Checkpoint& checkpoint, const std::string& prefix, nn::ParameterSet<T>& params);

template <typename T>
void store_adam(Checkpoint& checkpoint, const std::string& prefix, const nn::AdamState<T>& state);
template <typename T>
nn::AdamState<T> load_adam(const Checkpoint& checkpoint, const std::string& prefix);

struct CheckpointManifest {
  std::string model;
  std::uint64_t seed = 0;
  std::int64_t iteration = 0;
  std::string config_hash;
  double loss_d = 0.0;
  double loss_g = 0.0;

  bool operator==(const CheckpointManifest&) const = default;
};

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint_path);
std::string format_checkpoint_manifest(const CheckpointManifest& manifest);
CheckpointManifest parse_checkpoint_manifest(std::string_view text);
CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& checkpoint_path);

// Blob at `path`, manifest at manifest_path(path).
void save_checkpoint(const Checkpoint& checkpoint, const CheckpointManifest& manifest,
                     const std::filesystem::path& path);

}  // namespace biasforge

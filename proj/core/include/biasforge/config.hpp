#pragma once

// Line-oriented `section.key = value` configuration with canonical hashing.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "biasforge/enhance.hpp"
#include "biasforge/ergan.hpp"
#include "biasforge/skin_gan.hpp"

namespace biasforge {

struct TrainSchedule {
  int steps = 200;
  int checkpoint_interval = 100;  // 0 writes only the final checkpoint
};

struct PipelineConfig {
  std::uint64_t seed = 0;  // master seed; per-stage seeds derive from it

  std::filesystem::path manifest;
  std::filesystem::path image_root;
  std::uint64_t split_seed = 0;

  double bias_threshold = 0.2;

  skin::SkinGanConfig skin;
  TrainSchedule skin_schedule;
  bool skin_augment = true;

  ergan::ErganConfig ergan;
  TrainSchedule ergan_schedule;

  enhance::EnhanceConfig enhance;
  TrainSchedule enhance_schedule;

  std::filesystem::path generate_input_dir;
  std::filesystem::path generate_clean_dir;
  std::string generate_tag;  // attribute subdirectory for generated images

  std::filesystem::path evaluate_pairs;

  double target_rate = 0.5;
  std::filesystem::path bias_report;
  std::vector<std::filesystem::path> synthetic_dirs;

  // Throws Errc::config_error naming the offending setting.
  void validate() const;
};

// Unknown keys, duplicate keys and malformed values raise ParseError with
// Errc::config_error and the line number.
PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);

// Sorted `key = value` lines for every key under `section` ("" for all),
// defaults included. Training-length keys are left out of model sections.
std::string canonical_config(const PipelineConfig& config, std::string_view section = "");
std::string config_hash(const PipelineConfig& config, std::string_view section = "");

std::vector<std::string> config_keys();

}  // namespace biasforge

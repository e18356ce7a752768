#pragma once

// End-to-end orchestration: analyze -> train -> generate -> enhance ->
// evaluate -> assemble, with stage seeds, run manifests and checkpoints.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "biasforge/checkpoint.hpp"
#include "biasforge/config.hpp"
#include "biasforge/dataset.hpp"
#include "biasforge/enhance.hpp"
#include "biasforge/ergan.hpp"
#include "biasforge/error.hpp"
#include "biasforge/skin_gan.hpp"

namespace biasforge {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Every stage name that receives a derived seed.
const std::vector<std::string>& stage_names();

// 0 success, 1 usage/config, 2 data, 3 numeric.
int exit_code_for(Errc code) noexcept;

struct RunContext {
  PipelineConfig config;
  std::string config_text_hash;  // hash of the full canonical config
  std::filesystem::path out_dir;
  std::filesystem::path checkpoint;
  std::filesystem::path input;  // overrides the config's input directory or pairs file
  bool override_hash = false;
  std::ostream* log = nullptr;  // diagnostics; may be null
};

// Each command throws biasforge::Error on failure and writes
// <out_dir>/run_manifest.txt on success.
void cmd_analyze(const RunContext& ctx);
void cmd_train_skin(const RunContext& ctx);
void cmd_train_ergan(const RunContext& ctx);
void cmd_train_enhance(const RunContext& ctx);
void cmd_generate(const RunContext& ctx);
void cmd_enhance(const RunContext& ctx);
void cmd_evaluate(const RunContext& ctx);
void cmd_assemble(const RunContext& ctx);
// Writes a synthetic fixture dataset (images + list_attr manifest) under out_dir.
void cmd_synth(const std::filesystem::path& out_dir, int count, int size, std::uint64_t seed);

// Checkpoint round trips of full training states, used for resume.
Checkpoint skin_checkpoint(const skin::SkinTrainState& state);
void restore_skin(skin::SkinTrainState& state, const Checkpoint& checkpoint);
Checkpoint ergan_checkpoint(const ergan::ErganTrainState& state);
void restore_ergan(ergan::ErganTrainState& state, const Checkpoint& checkpoint);
Checkpoint enhance_checkpoint(const enhance::EnhanceTrainState& state);
void restore_enhance(enhance::EnhanceTrainState& state, const Checkpoint& checkpoint);

// Smallest k >= 0 with (positives + k) >= rate * (total + k), or nullopt when
// no finite k exists (rate == 1 with a negative record present).
std::optional<long> synthetic_needed(long positives, long total, double rate);

struct AssemblyRow {
  std::string attribute;
  double original_rate = 0.0;
  long available = 0;
  long added = 0;
  double achieved_rate = 0.0;
};

struct AssemblyResult {
  AttributeManifest manifest;
  std::vector<AssemblyRow> rows;
  std::vector<std::string> warnings;
};

// `synthetic` maps attribute name -> image ids tagged with that attribute.
// Records are appended in flagged order; originals are never removed.
AssemblyResult assemble_balanced(const AttributeManifest& original, const std::vector<std::string>& flagged,
                                 const std::map<std::string, std::vector<std::string>>& synthetic, double rate);

std::string format_assembly_report(const AssemblyResult& result, double rate);

struct EvalPair {
  std::filesystem::path generated;
  std::filesystem::path reference;
  std::string category;
  std::size_t line = 0;
};

// Lines `generated_path,reference_path,category`; relative paths resolve
// against `base`. Blank lines and lines starting with '#' are skipped.
std::vector<EvalPair> parse_pairs_manifest(std::string_view text, const std::filesystem::path& base);

// Sorted image files (.png/.jpg/.jpeg) directly inside `dir`.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace biasforge

#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "v6forge/evalkit.hpp"
#include "v6forge/seedclass.hpp"
#include "v6forge/vae.hpp"

namespace v6forge::pipeline {

inline constexpr std::string_view kVersion = "0.1.0";

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitIo = 3, kExitModel = 4 };

/// Flat key=value settings. `include = path` pulls in another file at that
/// point; later assignments win. Throws ConfigError, IoError.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_config_text(std::string_view text, const std::filesystem::path& base_dir = {});
KeyValues load_config(const std::filesystem::path& path);

enum class Classification { None, Manual, Cluster };

/// How long each per-category model trains. Epochs: train.epochs passes over
/// its own category. Steps: as many optimizer steps as train.epochs over the
/// whole seed set would take.
enum class CategorySchedule { Epochs, Steps };

struct PipelineConfig {
  std::filesystem::path seeds;
  std::filesystem::path model;
  std::filesystem::path candidates;
  std::filesystem::path oracle;
  std::filesystem::path out = "v6forge-out";

  Classification classification = Classification::None;
  seedclass::ClusteringOptions cluster;
  vae::TrainConfig train;
  CategorySchedule category_schedule = CategorySchedule::Steps;

  std::size_t generate_n = 10000;
  std::size_t pilot_n = 5000;
  vae::Decoding decoding = vae::Decoding::Argmax;
  bool exclude_seeds = false;
  bool budget = false;

  std::optional<std::size_t> n_sampled;  // evaluate; defaults to the candidate count
  bool evaluate_exclude_seeds = false;

  evalkit::UniverseConfig universe;

  std::uint64_t rng_seed = 0;
  std::size_t workers = 1;

  /// Effective settings as key=value pairs, excluding the output location.
  [[nodiscard]] std::map<std::string, std::string> snapshot() const;
};

/// Rejects unknown keys and malformed values with ConfigError.
PipelineConfig parse_pipeline_config(const KeyValues& kv);

enum class Command { Classify, Cluster, Train, Generate, Evaluate, Bench };

std::optional<Command> parse_command(std::string_view name);
std::string_view command_name(Command c) noexcept;

/// Named output files held in memory until the run succeeds.
struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;

  void add(std::string name, std::string bytes) { files.emplace_back(std::move(name), std::move(bytes)); }
  [[nodiscard]] const std::string* find(std::string_view name) const;
};

struct RunResult {
  Artifacts artifacts;
  std::vector<std::pair<std::string, double>> timings;  // seconds per stage
  std::string summary;                                  // short human-readable outcome
};

/// Runs a command without touching the output directory.
RunResult run(Command command, const PipelineConfig& cfg);

/// Config snapshot, version and a SHA-256 digest per artifact. Timings are
/// kept out so identical runs produce identical manifests.
std::string manifest_text(Command command, const PipelineConfig& cfg, const Artifacts& artifacts);

/// Writes every artifact plus manifest.txt and timings.txt into `out_dir`
/// through temporary files and renames. Throws IoError.
void commit(const std::filesystem::path& out_dir, Command command, const PipelineConfig& cfg,
            const RunResult& result);

std::string sha256_hex(std::string_view bytes);

/// Maps an exception to the tool's exit code.
int exit_code_for(const std::exception& e) noexcept;

/// Budgeted generation over several category models. Pilot draws against
/// the oracle estimate each model's r_gen; the final draws are split by
/// allocate_budget. Without an oracle the split is even.
struct CategoryModel {
  std::string name;
  vae::VaeParams<float> params;
};

struct CategoryOutcome {
  std::string name;
  std::optional<evalkit::GenerationReport> pilot;
  std::size_t draws = 0;
};

struct BudgetedGeneration {
  std::vector<addr6::NybbleSeq> candidates;  // deduplicated, category order
  std::vector<CategoryOutcome> categories;
  bool even_split = false;  // set when no pilot rate was usable
};

BudgetedGeneration generate_budgeted(const std::vector<CategoryModel>& models, std::size_t n_total,
                                     std::size_t pilot_n, const evalkit::ActivityOracle* oracle,
                                     const addr6::SeedSet* seeds, std::uint64_t rng_seed,
                                     const vae::GenerateOptions& options);

}  // namespace v6forge::pipeline

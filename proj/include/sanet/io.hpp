#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "sanet/model.hpp"
#include "sanet/tracker.hpp"

namespace sanet {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr std::uint32_t kCheckpointVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Multi-domain pretraining on synthetic scenes (or sequences given on the
// command line).
struct TrainingConfig {
  std::size_t iterations = 600;
  std::size_t domains = 3;
  std::size_t sequence_length = 30;
  std::size_t positives_per_frame = 8;
  std::size_t negatives_per_frame = 24;
  std::size_t frame_stride = 1;
  bool stop_on_convergence = false;
};

struct RunConfig {
  SanetConfig network = SanetConfig::tiny();
  TrackerConfig tracker;
  TrainingConfig training;
  std::size_t synth_length = 30;
};

// Every field has a default; "network.preset" ("tiny" or "standard")
// selects the starting point. Unknown keys raise ConfigError with their path.
// Seeds are not part of the configuration.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const RunConfig& c);
nlohmann::ordered_json to_json(const SanetConfig& c);
SanetConfig network_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const RunConfig& c);
std::string fnv1a_hex(const std::string& bytes);

// "SANETCKP", u32 version, u64 header length, JSON header (config, seed,
// metadata), u32 tensor count, then per tensor: u32 name length, name,
// u32 rank, u64 extents, float32 data. All integers little-endian.
void save_checkpoint(const std::filesystem::path& path, const Sanet<float>& net,
                     const nlohmann::json& metadata = nlohmann::json::object());
std::string encode_checkpoint(const Sanet<float>& net, const nlohmann::json& metadata = nlohmann::json::object());

struct Checkpoint {
  Sanet<float> net;
  nlohmann::json metadata;
};

Checkpoint decode_checkpoint(const std::string& bytes);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// run.json: command, seed, config hash and snapshot, tool and format
// versions, input paths and written outputs.
void write_run_json(const std::filesystem::path& dir, const std::string& command, std::uint64_t seed,
                    const RunConfig& config, const nlohmann::json& inputs, const nlohmann::json& outputs);

}  // namespace sanet

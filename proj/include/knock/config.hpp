#pragma once

// `key = value` text files for configurations and fitted reference models.
// Blank lines and lines starting with '#' are ignored.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "knock/synthetic.hpp"
#include "knock/train.hpp"

namespace knock {

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);
/// Sorted by key; one `key = value` per line.
std::string format_key_values(const KeyValues& kv);
void write_key_values(const std::filesystem::path& path, const KeyValues& kv);

/// Typed accessors; ConfigurationError names the key on a malformed value.
double kv_double(const KeyValues& kv, const std::string& key, double fallback);
std::uint64_t kv_uint(const KeyValues& kv, const std::string& key, std::uint64_t fallback);
std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback);
std::string format_double(double v);

/// Every field has a default except `geometry.bore_mm`.
SyntheticConfig synthetic_config_from(const KeyValues& kv);
KeyValues to_key_values(const SyntheticConfig& config);

TrainConfig train_config_from(const KeyValues& kv, TrainConfig base = {});
KeyValues to_key_values(const TrainConfig& config);

/// FNV-1a of the formatted key-value text.
std::uint64_t config_hash(const KeyValues& kv);

}  // namespace knock

#include "knock/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "knock/error.hpp"

namespace knock {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", row);
    const auto key = trim(t.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", row);
    if (!kv.emplace(key, trim(t.substr(eq + 1))).second)
      throw ParseError("duplicate key '" + key + "'", row);
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_key_values(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

void write_key_values(const std::filesystem::path& path, const KeyValues& kv) {
  write_file_atomic(path, format_key_values(kv));
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double kv_double(const KeyValues& kv, const std::string& key, double fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  double v = 0.0;
  const auto& s = it->second;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw ConfigurationError("'" + key + "': not a number: '" + s + "'");
  return v;
}

std::uint64_t kv_uint(const KeyValues& kv, const std::string& key, std::uint64_t fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::uint64_t v = 0;
  const auto& s = it->second;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw ConfigurationError("'" + key + "': not a non-negative integer: '" + s + "'");
  return v;
}

std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback) {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

SyntheticConfig synthetic_config_from(const KeyValues& kv) {
  if (!kv.count("geometry.bore_mm"))
    throw ConfigurationError("synthetic config requires 'geometry.bore_mm'");
  static const char* known[] = {
      "geometry.bore_mm", "geometry.rpm", "geometry.speed_of_sound", "subset_tag", "n_cycles",
      "class_weights", "noise_level", "knock_onset_min", "knock_onset_max", "seed",
      "peak_pressure_min", "peak_pressure_max", "knock_amplitude", "knock_decay",
      "intensity_spread", "judge_noise", "ringing_amplitude", "prechamber_amplitude",
      "prechamber_frequency_hz", "judge_band.low_hz", "judge_band.high_hz"};
  for (const auto& [k, v] : kv) {
    bool ok = false;
    for (const char* n : known) ok = ok || k == n;
    if (!ok) throw ConfigurationError("unknown synthetic config key '" + k + "'");
  }
  SyntheticConfig c;
  c.geometry.bore_mm = kv_double(kv, "geometry.bore_mm", 0.0);
  c.geometry.rpm = kv_double(kv, "geometry.rpm", c.geometry.rpm);
  c.geometry.speed_of_sound = kv_double(kv, "geometry.speed_of_sound", c.geometry.speed_of_sound);
  c.subset_tag = kv_string(kv, "subset_tag", c.subset_tag);
  c.n_cycles = kv_uint(kv, "n_cycles", c.n_cycles);
  if (kv.count("class_weights")) {
    std::stringstream ss(kv.at("class_weights"));
    std::string item;
    std::size_t i = 0;
    KeyValues one;
    while (std::getline(ss, item, ',')) {
      if (i >= 6) throw ConfigurationError("'class_weights' needs exactly 6 values");
      one["class_weights"] = trim(item);
      c.class_weights[i++] = kv_double(one, "class_weights", 0.0);
    }
    if (i != 6) throw ConfigurationError("'class_weights' needs exactly 6 values");
  }
  c.noise_level = kv_double(kv, "noise_level", c.noise_level);
  c.knock_onset_min = kv_double(kv, "knock_onset_min", c.knock_onset_min);
  c.knock_onset_max = kv_double(kv, "knock_onset_max", c.knock_onset_max);
  c.seed = kv_uint(kv, "seed", c.seed);
  c.peak_pressure_min = kv_double(kv, "peak_pressure_min", c.peak_pressure_min);
  c.peak_pressure_max = kv_double(kv, "peak_pressure_max", c.peak_pressure_max);
  c.knock_amplitude = kv_double(kv, "knock_amplitude", c.knock_amplitude);
  c.knock_decay = kv_double(kv, "knock_decay", c.knock_decay);
  c.intensity_spread = kv_double(kv, "intensity_spread", c.intensity_spread);
  c.judge_noise = kv_double(kv, "judge_noise", c.judge_noise);
  c.ringing_amplitude = kv_double(kv, "ringing_amplitude", c.ringing_amplitude);
  c.prechamber_amplitude = kv_double(kv, "prechamber_amplitude", c.prechamber_amplitude);
  c.prechamber_frequency_hz = kv_double(kv, "prechamber_frequency_hz", c.prechamber_frequency_hz);
  c.judge_band.low_hz = kv_double(kv, "judge_band.low_hz", c.judge_band.low_hz);
  c.judge_band.high_hz = kv_double(kv, "judge_band.high_hz", c.judge_band.high_hz);
  c.validate();
  return c;
}

KeyValues to_key_values(const SyntheticConfig& c) {
  KeyValues kv;
  kv["geometry.bore_mm"] = format_double(c.geometry.bore_mm);
  kv["geometry.rpm"] = format_double(c.geometry.rpm);
  kv["geometry.speed_of_sound"] = format_double(c.geometry.speed_of_sound);
  kv["subset_tag"] = c.subset_tag;
  kv["n_cycles"] = std::to_string(c.n_cycles);
  std::string w;
  for (std::size_t i = 0; i < 6; ++i) w += (i ? "," : "") + format_double(c.class_weights[i]);
  kv["class_weights"] = w;
  kv["noise_level"] = format_double(c.noise_level);
  kv["knock_onset_min"] = format_double(c.knock_onset_min);
  kv["knock_onset_max"] = format_double(c.knock_onset_max);
  kv["seed"] = std::to_string(c.seed);
  kv["peak_pressure_min"] = format_double(c.peak_pressure_min);
  kv["peak_pressure_max"] = format_double(c.peak_pressure_max);
  kv["knock_amplitude"] = format_double(c.knock_amplitude);
  kv["knock_decay"] = format_double(c.knock_decay);
  kv["intensity_spread"] = format_double(c.intensity_spread);
  kv["judge_noise"] = format_double(c.judge_noise);
  kv["ringing_amplitude"] = format_double(c.ringing_amplitude);
  kv["prechamber_amplitude"] = format_double(c.prechamber_amplitude);
  kv["prechamber_frequency_hz"] = format_double(c.prechamber_frequency_hz);
  kv["judge_band.low_hz"] = format_double(c.judge_band.low_hz);
  kv["judge_band.high_hz"] = format_double(c.judge_band.high_hz);
  return kv;
}

TrainConfig train_config_from(const KeyValues& kv, TrainConfig c) {
  c.learning_rate = kv_double(kv, "train.learning_rate", c.learning_rate);
  c.batch_size = kv_uint(kv, "train.batch_size", c.batch_size);
  c.max_epochs = kv_uint(kv, "train.max_epochs", c.max_epochs);
  c.l2_penalty = kv_double(kv, "train.l2_penalty", c.l2_penalty);
  c.beta1 = kv_double(kv, "train.beta1", c.beta1);
  c.beta2 = kv_double(kv, "train.beta2", c.beta2);
  c.epsilon = kv_double(kv, "train.epsilon", c.epsilon);
  c.patience = kv_uint(kv, "train.patience", c.patience);
  c.plateau_tolerance = kv_double(kv, "train.plateau_tolerance", c.plateau_tolerance);
  c.seed = kv_uint(kv, "train.seed", c.seed);
  c.validate();
  return c;
}

KeyValues to_key_values(const TrainConfig& c) {
  return {{"train.learning_rate", format_double(c.learning_rate)},
          {"train.batch_size", std::to_string(c.batch_size)},
          {"train.max_epochs", std::to_string(c.max_epochs)},
          {"train.l2_penalty", format_double(c.l2_penalty)},
          {"train.beta1", format_double(c.beta1)},
          {"train.beta2", format_double(c.beta2)},
          {"train.epsilon", format_double(c.epsilon)},
          {"train.patience", std::to_string(c.patience)},
          {"train.plateau_tolerance", format_double(c.plateau_tolerance)},
          {"train.seed", std::to_string(c.seed)}};
}

std::uint64_t config_hash(const KeyValues& kv) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : format_key_values(kv)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace knock

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "knock/dataset.hpp"
#include "knock/error.hpp"

namespace knock {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r'))
      f.remove_suffix(1);
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  return in;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 12);
  return std::string(buf, ptr);
}

}  // namespace

std::vector<PressureCycle> read_cycles_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<PressureCycle> cycles;
  std::string line;
  std::size_t row = 0;
  std::size_t header_samples = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_commas(line);
    if (fields.size() < 3)
      throw ParseError(path.string() + ": expected cycle_id,source_tag,samples...", row);
    double probe = 0.0;
    if (cycles.empty() && header_samples == 0 && !parse_double(fields[2], probe)) {
      header_samples = fields.size() - 2;
      continue;
    }
    const std::size_t n = fields.size() - 2;
    if (header_samples != 0 ? n != header_samples
                            : (n != kFullCycleSamples && n != kWindowSamples)) {
      throw ParseError(path.string() + ": row has " + std::to_string(n) + " samples, expected " +
                           std::to_string(header_samples != 0 ? header_samples : kFullCycleSamples),
                       row);
    }
    PressureCycle c;
    c.cycle_id = std::string(fields[0]);
    c.source_tag = std::string(fields[1]);
    c.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!parse_double(fields[i + 2], c.samples[i]))
        throw ParseError(path.string() + ": bad sample '" + std::string(fields[i + 2]) +
                             "' in column " + std::to_string(i + 3),
                         row);
    }
    if (n == kFullCycleSamples) {
      c.start_angle = -360.0;
      c.resolution = kDefaultResolution;
    } else {
      c.start_angle = 0.0;
      c.resolution = 60.0 / static_cast<double>(n);
    }
    cycles.push_back(std::move(c));
  }
  return cycles;
}

void write_cycles_csv(const std::filesystem::path& path, std::span<const PressureCycle> cycles) {
  std::ostringstream out;
  const std::size_t n = cycles.empty() ? 0 : cycles.front().samples.size();
  out << "cycle_id,source_tag";
  for (std::size_t i = 0; i < n; ++i) out << ",s" << i;
  out << '\n';
  for (const auto& c : cycles) {
    if (c.samples.size() != n) throw ShapeError("all cycles in one file must share a length");
    out << c.cycle_id << ',' << c.source_tag;
    for (double v : c.samples) out << ',' << format_double(v);
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

PressureCycle read_angle_pressure_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<double> angles;
  PressureCycle c;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_commas(line);
    double a = 0.0, p = 0.0;
    if (fields.size() != 2) throw ParseError(path.string() + ": expected angle,pressure", row);
    if (!parse_double(fields[0], a) || !parse_double(fields[1], p)) {
      if (angles.empty() && row == 1) continue;  // header
      throw ParseError(path.string() + ": non-numeric angle or pressure", row);
    }
    angles.push_back(a);
    c.samples.push_back(p);
  }
  if (angles.size() < 2) throw ParseError(path.string() + ": need at least two samples");
  const double res = (angles.back() - angles.front()) / static_cast<double>(angles.size() - 1);
  if (!(res > 0.0)) throw ParseError(path.string() + ": angles must increase");
  for (std::size_t i = 1; i < angles.size(); ++i) {
    if (std::abs(angles[i] - angles[i - 1] - res) > 1e-6 * std::max(1.0, std::abs(res)) + 1e-9)
      throw ParseError(path.string() + ": angles are not uniformly spaced", i + 1);
  }
  c.start_angle = angles.front();
  c.resolution = res;
  c.cycle_id = path.stem().string();
  return c;
}

std::map<std::string, ExpertVotes> read_labels_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::map<std::string, ExpertVotes> labels;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_commas(line);
    if (fields.size() != 6) {
      throw ParseError(path.string() + ": expected cycle_id and 5 votes, got " +
                           std::to_string(fields.size() - 1) + " votes",
                       row);
    }
    std::array<int, 5> v{};
    bool numeric = true, any_digit = false;
    for (std::size_t i = 0; i < 5; ++i) {
      const auto f = fields[i + 1];
      if (!f.empty() && (std::isdigit(static_cast<unsigned char>(f[0])) || f[0] == '-'))
        any_digit = true;
      if (f == "0") v[i] = 0;
      else if (f == "1") v[i] = 1;
      else numeric = false;
    }
    if (!numeric) {
      if (row == 1 && !any_digit) continue;  // header
      throw ParseError(path.string() + ": votes must be 0 or 1", row);
    }
    auto [it, inserted] = labels.emplace(std::string(fields[0]), ExpertVotes(v));
    if (!inserted) throw ParseError(path.string() + ": duplicate cycle id '" + it->first + "'", row);
  }
  return labels;
}

CycleSet load_cycles(const std::filesystem::path& cycles_path,
                     const std::filesystem::path& labels_path, const WindowSpec& window) {
  if (!std::filesystem::exists(labels_path))
    throw ParseError("labels file '" + labels_path.string() + "' does not exist");
  const auto raw = read_cycles_csv(cycles_path);
  const auto votes = read_labels_csv(labels_path);
  CycleSet out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto& c = raw[i];
    c.validate();
    const auto it = votes.find(c.cycle_id);
    if (it == votes.end())
      throw ParseError(labels_path.string() + ": no votes for cycle '" + c.cycle_id + "'");
    auto lc = LabeledCycle::from_votes(extract_window(c, window), it->second, c.source_tag,
                                       c.cycle_id);
    lc.check_consistency();
    out.push_back(std::move(lc));
  }
  return out;
}

void save_cycles(const std::filesystem::path& cycles_path,
                 const std::filesystem::path& labels_path, std::span<const LabeledCycle> cycles) {
  std::vector<PressureCycle> windows;
  windows.reserve(cycles.size());
  std::ostringstream labels;
  labels << "cycle_id,v1,v2,v3,v4,v5\n";
  for (const auto& c : cycles) {
    PressureCycle p;
    p.samples = c.window.samples;
    p.start_angle = c.window.start_angle;
    p.resolution = c.window.resolution;
    p.cycle_id = c.cycle_id;
    p.source_tag = c.subset_tag;
    windows.push_back(std::move(p));
    labels << c.cycle_id;
    for (auto v : c.votes.values()) labels << ',' << int(v);
    labels << '\n';
  }
  write_cycles_csv(cycles_path, windows);
  write_file_atomic(labels_path, labels.str());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " +
                      ec.message());
}

}  // namespace knock

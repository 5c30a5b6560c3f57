#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "objscope/binary_io.hpp"
#include "objscope/error.hpp"

namespace objscope {

inline constexpr char kTrajectoryMagic[5] = "AGEV";
inline constexpr std::uint16_t kTrajectoryVersion = 1;
inline constexpr std::size_t kTrajectoryHeaderBytes = 4 + 2 + 2 + 2 + 1 + 2 + 4 + 8 + 16;
inline constexpr std::size_t kRecordPrefixBytes = 1 + 2 + 4;

enum class DatasetRole { agent, human };

struct Manifest {
  std::string environment_id;
  std::string agent_id;
  std::uint16_t frame_width = 0;
  std::uint16_t frame_height = 0;
  std::uint8_t channels = 1;
  std::uint16_t action_count = 1;
  std::uint64_t frame_count = 0;
  float sticky_action_prob = 0.0F;
  DatasetRole role = DatasetRole::agent;

  [[nodiscard]] std::size_t frame_bytes() const {
    return static_cast<std::size_t>(frame_width) * frame_height * channels;
  }
  [[nodiscard]] std::size_t record_bytes() const { return kRecordPrefixBytes + frame_bytes(); }

  bool operator==(const Manifest&) const = default;
};

struct TrajectoryRecord {
  std::vector<std::uint8_t> frame;
  std::uint16_t action = 0;
  float reward = 0.0F;
  bool episode_start = false;

  bool operator==(const TrajectoryRecord&) const = default;
};

inline void validate_manifest(const Manifest& m) {
  if (m.frame_width == 0 || m.frame_height == 0) throw FormatError("manifest: frame dimensions must be positive");
  if (m.channels != 1 && m.channels != 3) throw FormatError("manifest: channels must be 1 or 3");
  if (m.action_count == 0) throw FormatError("manifest: action_count must be at least 1");
  if (!(m.sticky_action_prob >= 0.0F && m.sticky_action_prob <= 1.0F)) {
    throw FormatError("manifest: sticky_action_prob must lie in [0,1]");
  }
}

// Streaming writer. The header carries frame_count up front, so the caller
// commits to the record count and finish() verifies it.
class TrajectoryWriter {
 public:
  TrajectoryWriter(std::ostream& out, Manifest manifest) : out_(out), manifest_(std::move(manifest)) {
    validate_manifest(manifest_);
    le::put_bytes(out_, kTrajectoryMagic, 4);
    le::put<std::uint16_t>(out_, kTrajectoryVersion);
    le::put<std::uint16_t>(out_, manifest_.frame_width);
    le::put<std::uint16_t>(out_, manifest_.frame_height);
    le::put<std::uint8_t>(out_, manifest_.channels);
    le::put<std::uint16_t>(out_, manifest_.action_count);
    le::put_f32(out_, manifest_.sticky_action_prob);
    le::put<std::uint64_t>(out_, manifest_.frame_count);
    const std::array<char, 16> reserved{};
    le::put_bytes(out_, reserved.data(), reserved.size());
    le::check_stream(out_, "trajectory header");
    bytes_ = kTrajectoryHeaderBytes;
  }

  void write(const TrajectoryRecord& rec) {
    if (written_ >= manifest_.frame_count) {
      throw FormatError("record " + std::to_string(written_) + " exceeds declared frame_count " +
                        std::to_string(manifest_.frame_count));
    }
    if (rec.frame.size() != manifest_.frame_bytes()) {
      throw FormatError("record " + std::to_string(written_) + ": frame has " + std::to_string(rec.frame.size()) +
                        " bytes, manifest requires " + std::to_string(manifest_.frame_bytes()));
    }
    if (rec.action >= manifest_.action_count) {
      throw FormatError("record " + std::to_string(written_) + ": action " + std::to_string(rec.action) +
                        " out of range for action_count " + std::to_string(manifest_.action_count));
    }
    if (written_ == 0 && !rec.episode_start) {
      throw FormatError("record 0: the first record must start an episode");
    }
    le::put<std::uint8_t>(out_, rec.episode_start ? 1 : 0);
    le::put<std::uint16_t>(out_, rec.action);
    le::put_f32(out_, rec.reward);
    le::put_bytes(out_, rec.frame.data(), rec.frame.size());
    le::check_stream(out_, "trajectory record");
    ++written_;
    bytes_ += manifest_.record_bytes();
  }

  // Returns total bytes written.
  std::uint64_t finish() {
    if (written_ != manifest_.frame_count) {
      throw FormatError("wrote " + std::to_string(written_) + " records but manifest declares " +
                        std::to_string(manifest_.frame_count));
    }
    out_.flush();
    le::check_stream(out_, "trajectory flush");
    return bytes_;
  }

  [[nodiscard]] const Manifest& manifest() const { return manifest_; }

 private:
  std::ostream& out_;
  Manifest manifest_;
  std::uint64_t written_ = 0;
  std::uint64_t bytes_ = 0;
};

template <typename Records>
std::uint64_t write_trajectory(const Manifest& manifest, const Records& records, std::ostream& sink) {
  TrajectoryWriter writer(sink, manifest);
  for (const auto& rec : records) writer.write(rec);
  return writer.finish();
}

// Streaming reader; holds one record buffer regardless of file size.
class TrajectoryReader {
 public:
  explicit TrajectoryReader(std::istream& in) : in_(in) {
    le::expect_magic(in_, kTrajectoryMagic, "trajectory file");
    le::expect_version(in_, kTrajectoryVersion, "trajectory file");
    manifest_.frame_width = le::get<std::uint16_t>(in_, "header width");
    manifest_.frame_height = le::get<std::uint16_t>(in_, "header height");
    manifest_.channels = le::get<std::uint8_t>(in_, "header channels");
    manifest_.action_count = le::get<std::uint16_t>(in_, "header action_count");
    manifest_.sticky_action_prob = le::get_f32(in_, "header sticky_action_prob");
    manifest_.frame_count = le::get<std::uint64_t>(in_, "header frame_count");
    std::array<unsigned char, 16> reserved{};
    le::get_bytes(in_, reserved.data(), reserved.size(), "header reserved bytes");
    for (auto b : reserved) {
      if (b != 0) throw DecodeError("trajectory header: reserved bytes must be zero");
    }
    try {
      validate_manifest(manifest_);
    } catch (const FormatError& e) {
      throw DecodeError(std::string("trajectory header: ") + e.what());
    }
    buffer_.resize(manifest_.record_bytes());
  }

  [[nodiscard]] const Manifest& manifest() const { return manifest_; }
  [[nodiscard]] std::uint64_t records_read() const { return read_; }

  // Fills `rec` with the next record; returns false after the last one.
  bool next(TrajectoryRecord& rec) {
    if (read_ == manifest_.frame_count) {
      if (in_.peek() != std::char_traits<char>::eof()) {
        throw IntegrityError("trajectory payload holds more records than the declared frame_count " +
                             std::to_string(manifest_.frame_count));
      }
      return false;
    }
    const std::size_t got = le::read_some(in_, buffer_.data(), buffer_.size());
    if (got == 0) {
      throw IntegrityError("trajectory header declares " + std::to_string(manifest_.frame_count) +
                           " frames but the payload holds " + std::to_string(read_));
    }
    if (got != buffer_.size()) {
      throw TruncatedError("trajectory truncated inside record " + std::to_string(read_));
    }
    const std::uint8_t flags = buffer_[0];
    if ((flags & ~1u) != 0) throw IntegrityError("record " + std::to_string(read_) + ": unknown flag bits");
    rec.episode_start = (flags & 1u) != 0;
    rec.action = static_cast<std::uint16_t>(buffer_[1] | (buffer_[2] << 8));
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buffer_[3 + b]) << (8 * b);
    rec.reward = std::bit_cast<float>(bits);
    if (rec.action >= manifest_.action_count) {
      throw IntegrityError("record " + std::to_string(read_) + ": action " + std::to_string(rec.action) +
                           " out of range");
    }
    rec.frame.assign(buffer_.begin() + kRecordPrefixBytes, buffer_.end());
    ++read_;
    return true;
  }

 private:
  std::istream& in_;
  Manifest manifest_;
  std::vector<std::uint8_t> buffer_;
  std::uint64_t read_ = 0;
};

// ---------------------------------------------------------------------------
// Manifest sidecar: flat key=value text.

inline std::string role_name(DatasetRole r) { return r == DatasetRole::human ? "human" : "agent"; }

// Shortest round-trip text, independent of the global locale.
inline std::string shortest(float v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

inline std::string manifest_to_text(const Manifest& m) {
  std::ostringstream os;
  os << "environment_id=" << m.environment_id << '\n'
     << "agent_id=" << m.agent_id << '\n'
     << "role=" << role_name(m.role) << '\n'
     << "frame_width=" << m.frame_width << '\n'
     << "frame_height=" << m.frame_height << '\n'
     << "channels=" << static_cast<int>(m.channels) << '\n'
     << "action_count=" << m.action_count << '\n'
     << "frame_count=" << m.frame_count << '\n'
     << "sticky_action_prob=" << shortest(m.sticky_action_prob) << '\n';
  return os.str();
}

inline Manifest manifest_from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("manifest sidecar: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("manifest sidecar: missing key ") + key);
    return it->second;
  };
  auto num = [&](const char* key) -> std::uint64_t {
    try {
      return std::stoull(need(key));
    } catch (const std::logic_error&) {
      throw FormatError(std::string("manifest sidecar: bad number for ") + key);
    }
  };
  Manifest m;
  m.environment_id = need("environment_id");
  m.agent_id = need("agent_id");
  const auto& role = need("role");
  if (role == "human") {
    m.role = DatasetRole::human;
  } else if (role == "agent") {
    m.role = DatasetRole::agent;
  } else {
    throw FormatError("manifest sidecar: unknown role " + role);
  }
  m.frame_width = static_cast<std::uint16_t>(num("frame_width"));
  m.frame_height = static_cast<std::uint16_t>(num("frame_height"));
  m.channels = static_cast<std::uint8_t>(num("channels"));
  m.action_count = static_cast<std::uint16_t>(num("action_count"));
  m.frame_count = num("frame_count");
  const auto& sticky = need("sticky_action_prob");
  auto [ptr, ec] = std::from_chars(sticky.data(), sticky.data() + sticky.size(), m.sticky_action_prob);
  if (ec != std::errc{} || ptr != sticky.data() + sticky.size()) {
    throw FormatError("manifest sidecar: bad number for sticky_action_prob");
  }
  return m;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& trajectory) {
  auto p = trajectory;
  p += ".manifest";
  return p;
}

// Opens a trajectory file together with its sidecar (when present) so the
// returned manifest carries the environment/agent ids.
class TrajectoryFile {
 public:
  explicit TrajectoryFile(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open trajectory " + path.string());
    reader_.emplace(in_);
    manifest_ = reader_->manifest();
    const auto side = sidecar_path(path);
    if (std::filesystem::exists(side)) {
      std::ifstream s(side);
      std::stringstream buf;
      buf << s.rdbuf();
      const Manifest meta = manifest_from_text(buf.str());
      if (meta.frame_width != manifest_.frame_width || meta.frame_height != manifest_.frame_height ||
          meta.channels != manifest_.channels || meta.action_count != manifest_.action_count ||
          meta.frame_count != manifest_.frame_count) {
        throw IntegrityError("manifest sidecar disagrees with the header of " + path.string());
      }
      manifest_.environment_id = meta.environment_id;
      manifest_.agent_id = meta.agent_id;
      manifest_.role = meta.role;
    }
  }

  [[nodiscard]] const Manifest& manifest() const { return manifest_; }
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  bool next(TrajectoryRecord& rec) { return reader_->next(rec); }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::optional<TrajectoryReader> reader_;
  Manifest manifest_;
};

inline void write_manifest_sidecar(const std::filesystem::path& trajectory, const Manifest& m) {
  std::ofstream out(sidecar_path(trajectory), std::ios::binary);
  out << manifest_to_text(m);
  if (!out) throw IoError("cannot write manifest sidecar for " + trajectory.string());
}

}  // namespace objscope

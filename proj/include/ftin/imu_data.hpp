#pragma once

#include "ftin/core.hpp"
#include "ftin/rng.hpp"

#include <Eigen/Geometry>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace ftin {

namespace fs = std::filesystem;

enum class Frame { Body, World };

struct ImuSample {
  double t = 0.0;              // s
  Eigen::Vector3d gyro{0, 0, 0};  // rad/s
  Eigen::Vector3d acce{0, 0, 0};  // m/s^2, specific force
  std::optional<Eigen::Quaterniond> quat;  // body -> world
  std::optional<Eigen::Vector3d> pos;      // m, world frame
};

struct ImuSequence {
  std::vector<ImuSample> samples;
  double rate = 0.0;  // Hz, nominal
  Frame frame = Frame::Body;
  nlohmann::json meta = nlohmann::json::object();

  Index size() const { return static_cast<Index>(samples.size()); }
  bool has_quat() const {
    return !samples.empty() && std::all_of(samples.begin(), samples.end(), [](const auto& s) { return s.quat.has_value(); });
  }
  bool has_pos() const {
    return !samples.empty() && std::all_of(samples.begin(), samples.end(), [](const auto& s) { return s.pos.has_value(); });
  }
};

// One model input: rows are world-frame acce x,y,z then gyro x,y,z.
struct LabeledWindow {
  Mat<double> x;
  Eigen::Vector2d v{0, 0};  // mean horizontal velocity, m/s
  double t_start = 0.0;
  Index offset = 0;  // index of the first sample in the source sequence
};

inline constexpr Index kImuChannels = 6;

// Checks the ImuSequence invariants; throws on the first violation.
inline void validate(const ImuSequence& seq) {
  if (seq.size() < 2) throw SizeError("sequence needs at least 2 samples, got " + std::to_string(seq.size()));
  if (!(seq.rate > 0.0)) throw SchemaError("rate_hz");
  for (Index i = 1; i < seq.size(); ++i) {
    if (!(seq.samples[i].t > seq.samples[i - 1].t)) throw IntegrityError("timestamps not strictly increasing", i);
  }
  for (Index i = 0; i < seq.size(); ++i) {
    const auto& q = seq.samples[i].quat;
    if (q && std::abs(q->norm() - 1.0) > 1e-6) throw IntegrityError("quaternion not unit length", i);
  }
  std::vector<double> dt(seq.samples.size() - 1);
  for (std::size_t i = 1; i < seq.samples.size(); ++i) dt[i - 1] = seq.samples[i].t - seq.samples[i - 1].t;
  std::nth_element(dt.begin(), dt.begin() + static_cast<std::ptrdiff_t>(dt.size() / 2), dt.end());
  const double median = dt[dt.size() / 2];
  const double nominal = 1.0 / seq.rate;
  if (std::abs(median - nominal) / nominal >= 0.05) {
    throw ValidationError("median sample interval " + std::to_string(median) + " s inconsistent with rate " +
                          std::to_string(seq.rate) + " Hz");
  }
}

namespace detail {

inline void append_number(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, Index row, const std::string& column) {
  double v = 0.0;
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IntegrityError("cannot parse column '" + column + "' value '" + std::string(s) + "'", row);
  }
  return v;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline const char* frame_name(Frame f) { return f == Frame::World ? "world" : "body"; }

}  // namespace detail

// Reads a canonical dataset directory (meta.json + data.csv).
inline ImuSequence load_canonical(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  const fs::path data_path = dir / "data.csv";
  if (!fs::exists(meta_path)) throw ValidationError("missing " + meta_path.string());
  if (!fs::exists(data_path)) throw ValidationError("missing " + data_path.string());

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(detail::read_file(meta_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(meta_path.string() + ": " + e.what());
  }
  for (const char* key : {"rate_hz", "frame", "has_quat", "has_pos"}) {
    if (!meta.contains(key)) throw SchemaError(key);
  }
  if (!meta["rate_hz"].is_number()) throw SchemaError("rate_hz");
  if (!meta["has_quat"].is_boolean()) throw SchemaError("has_quat");
  if (!meta["has_pos"].is_boolean()) throw SchemaError("has_pos");
  const std::string frame = meta["frame"].is_string() ? meta["frame"].get<std::string>() : "";
  if (frame != "body" && frame != "world") throw SchemaError("frame");

  ImuSequence seq;
  seq.rate = meta["rate_hz"].get<double>();
  seq.frame = frame == "world" ? Frame::World : Frame::Body;
  const bool has_quat = meta["has_quat"].get<bool>();
  const bool has_pos = meta["has_pos"].get<bool>();
  for (auto it = meta.begin(); it != meta.end(); ++it) {
    if (it.key() != "rate_hz" && it.key() != "frame" && it.key() != "has_quat" && it.key() != "has_pos") {
      seq.meta[it.key()] = it.value();
    }
  }

  const std::string text = detail::read_file(data_path);
  std::string_view rest(text);
  auto next_line = [&rest]() -> std::optional<std::string_view> {
    if (rest.empty()) return std::nullopt;
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
  };

  const auto header_line = next_line();
  if (!header_line) throw SchemaError("t");
  const auto header = detail::split_commas(*header_line);
  auto column = [&header](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      std::string_view h = header[i];
      while (!h.empty() && h.front() == ' ') h.remove_prefix(1);
      while (!h.empty() && h.back() == ' ') h.remove_suffix(1);
      if (h == name) return i;
    }
    throw SchemaError(name);
  };

  std::vector<std::string> names = {"t", "gx", "gy", "gz", "ax", "ay", "az"};
  if (has_quat) names.insert(names.end(), {"qw", "qx", "qy", "qz"});
  if (has_pos) names.insert(names.end(), {"px", "py", "pz"});
  std::vector<std::size_t> idx;
  idx.reserve(names.size());
  for (const auto& n : names) idx.push_back(column(n));

  Index row = 0;
  std::vector<double> vals(names.size());
  while (auto line = next_line()) {
    if (line->empty()) continue;
    const auto cells = detail::split_commas(*line);
    if (cells.size() != header.size()) throw IntegrityError("expected " + std::to_string(header.size()) + " columns", row);
    for (std::size_t k = 0; k < names.size(); ++k) vals[k] = detail::parse_double(cells[idx[k]], row, names[k]);
    ImuSample s;
    s.t = vals[0];
    s.gyro = {vals[1], vals[2], vals[3]};
    s.acce = {vals[4], vals[5], vals[6]};
    std::size_t k = 7;
    if (has_quat) {
      s.quat = Eigen::Quaterniond(vals[k], vals[k + 1], vals[k + 2], vals[k + 3]);
      k += 4;
    }
    if (has_pos) s.pos = Eigen::Vector3d(vals[k], vals[k + 1], vals[k + 2]);
    seq.samples.push_back(std::move(s));
    ++row;
  }
  validate(seq);
  return seq;
}

inline void save_canonical(const ImuSequence& seq, const fs::path& dir) {
  fs::create_directories(dir);
  const bool has_quat = seq.has_quat();
  const bool has_pos = seq.has_pos();

  nlohmann::json meta = seq.meta;
  meta["rate_hz"] = seq.rate;
  meta["frame"] = detail::frame_name(seq.frame);
  meta["has_quat"] = has_quat;
  meta["has_pos"] = has_pos;
  {
    std::ofstream out(dir / "meta.json", std::ios::binary);
    out << meta.dump(2) << '\n';
  }

  std::string text = "t,gx,gy,gz,ax,ay,az";
  if (has_quat) text += ",qw,qx,qy,qz";
  if (has_pos) text += ",px,py,pz";
  text += '\n';
  text.reserve(text.size() + seq.samples.size() * 16 * 24);
  for (const auto& s : seq.samples) {
    detail::append_number(text, s.t);
    for (int i = 0; i < 3; ++i) text += ',', detail::append_number(text, s.gyro[i]);
    for (int i = 0; i < 3; ++i) text += ',', detail::append_number(text, s.acce[i]);
    if (has_quat) {
      for (double v : {s.quat->w(), s.quat->x(), s.quat->y(), s.quat->z()}) text += ',', detail::append_number(text, v);
    }
    if (has_pos) {
      for (int i = 0; i < 3; ++i) text += ',', detail::append_number(text, (*s.pos)[i]);
    }
    text += '\n';
  }
  std::ofstream out(dir / "data.csv", std::ios::binary);
  out << text;
}

// Rotates acce and gyro from body into world frame using each sample's quaternion.
inline ImuSequence rotate_to_world(const ImuSequence& seq) {
  if (seq.frame == Frame::World) throw PreconditionError("rotate_to_world: sequence is already in world frame");
  ImuSequence out = seq;
  for (Index i = 0; i < out.size(); ++i) {
    auto& s = out.samples[i];
    if (!s.quat) throw PreconditionError("rotate_to_world: sample " + std::to_string(i) + " has no quaternion");
    const Eigen::Matrix3d r = s.quat->toRotationMatrix();
    s.acce = r * s.acce;
    s.gyro = r * s.gyro;
  }
  out.frame = Frame::World;
  return out;
}

// Cuts windows at offsets 0, stride, 2*stride, ... A window starting at offset o
// covers samples [o, o+length) and is labeled with the horizontal displacement
// from sample o to sample o+length divided by length/rate, so it needs the
// sample at o+length; windows without it are discarded as partial.
inline std::vector<LabeledWindow> make_windows(const ImuSequence& seq, Index length, Index stride) {
  if (length < 1 || stride < 1) throw ContractError("make_windows: length and stride must be positive");
  if (!seq.has_pos()) throw PreconditionError("make_windows: labeling requires ground-truth positions");
  if (seq.frame != Frame::World) throw PreconditionError("make_windows: sequence must be rotated to world frame");
  if (length > seq.size()) {
    throw SizeError("make_windows: window length " + std::to_string(length) + " exceeds sequence length " +
                    std::to_string(seq.size()));
  }
  std::vector<LabeledWindow> out;
  for (Index off = 0; off + length < seq.size(); off += stride) {
    LabeledWindow w;
    w.x.resize(kImuChannels, length);
    for (Index j = 0; j < length; ++j) {
      const auto& s = seq.samples[off + j];
      w.x.block<3, 1>(0, j) = s.acce;
      w.x.block<3, 1>(3, j) = s.gyro;
    }
    const Eigen::Vector3d& p0 = *seq.samples[off].pos;
    const Eigen::Vector3d& p1 = *seq.samples[off + length].pos;
    w.v = (p1 - p0).head<2>() * (seq.rate / static_cast<double>(length));
    w.t_start = seq.samples[off].t;
    w.offset = off;
    out.push_back(std::move(w));
  }
  if (out.empty()) throw SizeError("make_windows: sequence too short for a single labeled window");
  return out;
}

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Deterministic 8:1:1 partition of [0, n). Validation and test each receive
// max(1, floor(n/10)) items, training gets the remainder.
inline SplitIndices split_indices(std::size_t n, std::uint64_t seed) {
  if (n < 10) throw SizeError("split_dataset: need at least 10 sequences, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed, 0x5011);
  rng.shuffle(order);
  const std::size_t n_hold = std::max<std::size_t>(1, n / 10);
  SplitIndices s;
  s.train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(2 * n_hold));
  s.val.assign(order.end() - static_cast<std::ptrdiff_t>(2 * n_hold), order.end() - static_cast<std::ptrdiff_t>(n_hold));
  s.test.assign(order.end() - static_cast<std::ptrdiff_t>(n_hold), order.end());
  return s;
}

template <class T>
struct Split {
  std::vector<T> train, val, test;
};

template <class T>
Split<T> split_dataset(const std::vector<T>& items, std::uint64_t seed) {
  const auto idx = split_indices(items.size(), seed);
  Split<T> out;
  for (auto i : idx.train) out.train.push_back(items[i]);
  for (auto i : idx.val) out.val.push_back(items[i]);
  for (auto i : idx.test) out.test.push_back(items[i]);
  return out;
}

struct NamedSequence {
  std::string name;
  ImuSequence seq;
};

// Loads every canonical sub-directory of a corpus, sorted by directory name.
inline std::vector<NamedSequence> load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("data directory not found: " + dir.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "meta.json")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw ValidationError("no canonical sequences under " + dir.string());
  std::vector<NamedSequence> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back({d.filename().string(), load_canonical(d)});
  return out;
}

}  // namespace ftin

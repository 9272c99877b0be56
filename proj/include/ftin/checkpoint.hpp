#pragma once

// Checkpoint archive, little-endian:
//
//   "FTINCKPT"                  8 bytes magic
//   u32 version
//   u64 n, n bytes              JSON record (run config + training state)
//   u32 tensor count
//   per tensor: u32 name length, name bytes, u32 rows, u32 cols, rows*cols f64
//
// Parameter tensors use the `stage.block.tensor` names of FtinParams; resume
// checkpoints add optimizer moments under `adam.m.` and `adam.v.`.

#include "ftin/config_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ftin {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'F', 'T', 'I', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Mat<double> value;
};

struct Archive {
  nlohmann::json record = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace detail {

template <class V>
void put(std::string& out, V v) {
  char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.append(buf, sizeof(V));
}

class Reader {
 public:
  Reader(const std::string& data, const std::string& path) : d_(data), path_(path) {}
  template <class V>
  V get() {
    V v;
    std::memcpy(&v, take(sizeof(V)), sizeof(V));
    return v;
  }
  const char* take(std::size_t n) {
    if (n > d_.size() - pos_) throw ValidationError("checkpoint " + path_ + " is truncated");
    const char* p = d_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == d_.size(); }

 private:
  const std::string& d_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_archive(const Archive& a) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  const std::string js = a.record.dump();
  detail::put<std::uint64_t>(out, js.size());
  out += js;
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(a.tensors.size()));
  for (const auto& t : a.tensors) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rows()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.cols()));
    out.append(reinterpret_cast<const char*>(t.value.data()), static_cast<std::size_t>(t.value.size()) * sizeof(double));
  }
  return out;
}

inline Archive decode_archive(const std::string& data, const std::string& path = "<memory>") {
  detail::Reader r(data, path);
  if (std::memcmp(r.take(sizeof(kCheckpointMagic)), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw ValidationError(path + " is not an FTIN checkpoint");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw ValidationError(path + ": unsupported checkpoint version " + std::to_string(version));
  Archive a;
  const auto js_len = r.get<std::uint64_t>();
  const char* js = r.take(js_len);
  try {
    a.record = nlohmann::json::parse(js, js + js_len);
  } catch (const nlohmann::json::parse_error&) {
    throw ValidationError(path + ": corrupt checkpoint record");
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    const auto name_len = r.get<std::uint32_t>();
    t.name.assign(r.take(name_len), name_len);
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    t.value.resize(rows, cols);
    const std::size_t bytes = static_cast<std::size_t>(rows) * cols * sizeof(double);
    std::memcpy(t.value.data(), r.take(bytes), bytes);
    a.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw ValidationError(path + ": trailing bytes after checkpoint tensors");
  return a;
}

// Writes via a temporary file and rename, so readers never see a partial file.
inline void write_bytes_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void save_archive(const fs::path& path, const Archive& a) { write_bytes_atomic(path, encode_archive(a)); }

inline Archive load_archive(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("checkpoint not found: " + path.string());
  return decode_archive(detail::read_file(path), path.string());
}

template <class T>
void append_tensors(Archive& a, const FtinParams<T>& p, const std::string& prefix = "") {
  for (const auto& v : nn::tensor_views(p)) {
    a.tensors.push_back({prefix + v.name, Eigen::Map<const Mat<T>>(v.data, v.rows, v.cols).template cast<double>()});
  }
}

// Fills `p` (already shaped for its config) from tensors named prefix + name.
template <class T>
void read_tensors(const Archive& a, FtinParams<T>& p, const std::string& prefix = "") {
  for (auto& v : nn::tensor_views(p)) {
    const NamedTensor* t = a.find(prefix + v.name);
    if (!t) throw SchemaError(prefix + v.name);
    if (t->value.rows() != v.rows || t->value.cols() != v.cols) {
      throw ValidationError("checkpoint tensor " + t->name + " has shape " + std::to_string(t->value.rows()) + "x" +
                            std::to_string(t->value.cols()) + ", expected " + std::to_string(v.rows) + "x" +
                            std::to_string(v.cols));
    }
    Eigen::Map<Mat<T>>(v.data, v.rows, v.cols) = t->value.template cast<T>();
  }
}

inline RunConfig run_config_of(const Archive& a) {
  if (!a.record.contains("config")) throw SchemaError("config");
  return run_config_from_json(a.record.at("config"));
}

template <class T>
FtinParams<T> params_of(const Archive& a) {
  FtinParams<T> p(run_config_of(a).model);
  read_tensors(a, p);
  return p;
}

// Parameters plus config; `state` is stored verbatim under "state".
template <class T>
Archive make_checkpoint(const RunConfig& cfg, const FtinParams<T>& params, const nlohmann::json& state = nlohmann::json::object()) {
  Archive a;
  a.record = {{"format", "ftin-checkpoint"}, {"config", to_json(cfg)}, {"state", state}};
  append_tensors(a, params);
  return a;
}

inline nlohmann::json history_to_json(const TrainHistory& h, bool include_wall_time = true) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : h.epochs) {
    nlohmann::json r = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"lr", e.lr}};
    if (include_wall_time) r["wall_time_s"] = e.wall_time_s;
    arr.push_back(std::move(r));
  }
  return arr;
}

inline TrainHistory history_from_json(const nlohmann::json& arr) {
  TrainHistory h;
  for (const auto& r : arr) {
    EpochRecord e;
    e.epoch = r.at("epoch").get<int>();
    e.train_loss = r.at("train_loss").get<double>();
    e.val_loss = r.at("val_loss").get<double>();
    e.lr = r.at("lr").get<double>();
    e.wall_time_s = r.value("wall_time_s", 0.0);
    h.epochs.push_back(e);
  }
  return h;
}

// Resume checkpoint: current params, best params, optimizer moments and
// schedule state. Wall times are left out so reruns are byte-identical.
template <class T>
Archive make_resume_checkpoint(const RunConfig& cfg, const TrainState<T>& st) {
  nlohmann::json state = {
      {"next_epoch", st.next_epoch},
      {"lr", st.lr},
      {"best_val", st.best_val},
      {"since_improvement", st.since_improvement},
      {"finished", st.finished},
      {"adam_step", st.adam.step},
      {"history", history_to_json(st.history, false)},
  };
  Archive a = make_checkpoint(cfg, st.params, state);
  append_tensors(a, st.best, "best.");
  append_tensors(a, st.adam.m, "adam.m.");
  append_tensors(a, st.adam.v, "adam.v.");
  return a;
}

template <class T>
TrainState<T> train_state_of(const Archive& a) {
  const RunConfig cfg = run_config_of(a);
  const auto& s = a.record.at("state");
  TrainState<T> st;
  st.params = FtinParams<T>(cfg.model);
  read_tensors(a, st.params);
  st.best = FtinParams<T>(cfg.model);
  read_tensors(a, st.best, "best.");
  st.adam.m = FtinParams<T>(cfg.model);
  read_tensors(a, st.adam.m, "adam.m.");
  st.adam.v = FtinParams<T>(cfg.model);
  read_tensors(a, st.adam.v, "adam.v.");
  try {
    st.adam.step = s.at("adam_step").get<std::int64_t>();
    st.next_epoch = s.at("next_epoch").get<int>();
    st.lr = s.at("lr").get<double>();
    st.best_val = s.at("best_val").is_null() ? std::numeric_limits<double>::infinity() : s.at("best_val").get<double>();
    st.since_improvement = s.at("since_improvement").get<int>();
    st.finished = s.at("finished").get<bool>();
    st.history = history_from_json(s.at("history"));
  } catch (const nlohmann::json::exception&) {
    throw SchemaError("state");
  }
  return st;
}

}  // namespace ftin

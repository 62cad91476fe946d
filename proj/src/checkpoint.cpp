#include "sgts/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <map>
#include <random>
#include <sstream>

#include "sgts/errors.hpp"
#include "sgts/raster.hpp"
#include "sgts/report.hpp"

namespace sgts {

namespace {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    v = to_little(v);
    const auto* p = reinterpret_cast<const char*>(&v);
    out_.append(p, sizeof(T));
  }
  void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void put_text(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void raw(const std::string& s) { out_ += s; }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string get_text() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("checkpoint truncated", pos_);
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void put_tensor(Writer& w, const std::string& name, const Tensor& t) {
  w.put_text(name);
  w.put(static_cast<std::uint32_t>(t.rank()));
  for (int e : t.shape()) w.put(static_cast<std::uint32_t>(e));
  for (double v : t.data()) w.put_f64(v);
}

void put_group(Writer& w, const std::string& group, const std::vector<Tensor>& tensors) {
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    put_tensor(w, group + "." + std::string(kParamNames[k]), tensors[k]);
  }
}

std::vector<Tensor> take_group(std::map<std::string, Tensor>& table, const std::string& group,
                               int num_classes) {
  const std::vector<Shape> shapes = ModelParams::shapes(num_classes);
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < kNumParamTensors; ++k) {
    const std::string name = group + "." + std::string(kParamNames[k]);
    auto it = table.find(name);
    if (it == table.end()) throw DataError("checkpoint: missing tensor " + name);
    if (it->second.shape() != shapes[k]) {
      throw DataError("checkpoint: tensor " + name + " has shape " +
                      shape_string(it->second.shape()) + ", expected " + shape_string(shapes[k]));
    }
    out.push_back(std::move(it->second));
    table.erase(it);
  }
  return out;
}

}  // namespace

std::string encode_checkpoint(const RunConfig& config, const TrainerState& s) {
  Writer w;
  w.raw("SGTS");
  w.put(kCheckpointVersion);
  w.put_text(serialize_config(config));
  w.put(static_cast<std::uint64_t>(s.epoch));
  w.put(static_cast<std::uint8_t>((s.teacher_active ? 1 : 0) | (s.stopped ? 2 : 0)));
  w.put_f64(s.best_val_mdice);
  w.put(static_cast<std::int32_t>(s.best_epoch));
  w.put(static_cast<std::int32_t>(s.epochs_since_improvement));
  w.put(static_cast<std::uint64_t>(s.optimizer.step));
  w.put_text(s.rng.serialize());
  std::string history;
  for (const EpochRow& row : s.history) history += format_row(row, 17) + "\n";
  w.put_text(history);
  w.put(static_cast<std::uint32_t>(5 * kNumParamTensors));
  put_group(w, "student", s.student.tensors);
  put_group(w, "teacher", s.teacher.tensors);
  put_group(w, "best", s.best_student.tensors);
  put_group(w, "adam.m", s.optimizer.m);
  put_group(w, "adam.v", s.optimizer.v);
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(4) != "SGTS") throw ParseError("not an SGTS checkpoint (bad magic)", 0);
  const std::size_t version_at = r.pos();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  Checkpoint ck;
  try {
    ck.config = parse_config(r.get_text());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
  TrainerState& s = ck.state;
  s.epoch = static_cast<int>(r.get<std::uint64_t>());
  const auto flags = r.get<std::uint8_t>();
  s.teacher_active = flags & 1;
  s.stopped = flags & 2;
  s.best_val_mdice = r.get_f64();
  s.best_epoch = r.get<std::int32_t>();
  s.epochs_since_improvement = r.get<std::int32_t>();
  s.optimizer.step = r.get<std::uint64_t>();
  const std::size_t rng_at = r.pos();
  const std::string rng_text = r.get_text();
  {
    std::istringstream probe(rng_text);
    std::mt19937_64 engine;
    if (!(probe >> engine)) throw ParseError("checkpoint: malformed generator state", rng_at);
  }
  s.rng = Rng::deserialize(rng_text);
  std::istringstream history(r.get_text());
  std::string line;
  while (std::getline(history, line)) {
    if (!line.empty()) s.history.push_back(parse_row(line));
  }

  std::map<std::string, Tensor> table;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = r.get_text();
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 8) throw ParseError("checkpoint: bad rank for " + name, r.pos());
    Shape shape;
    std::size_t volume = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto e = r.get<std::uint32_t>();
      if (e == 0 || e > (1u << 24)) throw ParseError("checkpoint: bad extent for " + name, r.pos());
      shape.push_back(static_cast<int>(e));
      volume *= e;
    }
    std::vector<double> data(volume);
    for (double& v : data) v = r.get_f64();
    table.emplace(name, Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes", r.pos());

  const int c = ck.config.num_classes;
  s.student = ModelParams{c, take_group(table, "student", c)};
  s.teacher = ModelParams{c, take_group(table, "teacher", c)};
  s.best_student = ModelParams{c, take_group(table, "best", c)};
  s.optimizer.m = take_group(table, "adam.m", c);
  s.optimizer.v = take_group(table, "adam.v", c);
  if (!table.empty()) throw DataError("checkpoint: unexpected tensor " + table.begin()->first);
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                     const TrainerState& state) {
  write_file(path, encode_checkpoint(config, state));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.offset());
  }
}

}  // namespace sgts

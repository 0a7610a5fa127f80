#include "pbgan/checkpoint.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

namespace pbgan {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void count(std::size_t n) { u32(static_cast<std::uint32_t>(n)); }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) f64(v);
  }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }
  [[noreturn]] void fail(const std::string& what) const { throw FormatError(what, pos_); }

  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  int small_int(const char* field, std::uint32_t limit = 1u << 24) {
    const std::size_t at = pos_;
    const std::uint32_t v = u32();
    if (v > limit) throw FormatError(std::string(field) + " value " + std::to_string(v) + " out of range", at);
    return static_cast<int>(v);
  }
  bool flag(const char* field) {
    const std::size_t at = pos_;
    const std::uint8_t v = u8();
    if (v > 1) throw FormatError(std::string(field) + " flag must be 0 or 1", at);
    return v == 1;
  }
  template <typename E>
  E enumeration(const char* field, std::uint8_t max) {
    const std::size_t at = pos_;
    const std::uint8_t v = u8();
    if (v > max) throw FormatError(std::string("unknown ") + field + " code " + std::to_string(v), at);
    return static_cast<E>(v);
  }
  Tensor tensor(const char* field) {
    const std::size_t at = pos_;
    const std::uint32_t rank = u32();
    if (rank < 1 || rank > 4) throw FormatError(std::string(field) + ": tensor rank " + std::to_string(rank), at);
    Shape shape;
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const int d = small_int(field);
      if (d == 0) throw FormatError(std::string(field) + ": zero tensor extent", pos_ - 4);
      shape.push_back(d);
      n *= static_cast<std::size_t>(d);
      if (n > (in_.size() - pos_) / 8 + 1) fail(std::string(field) + ": tensor payload exceeds file size");
    }
    need(n * 8);
    Tensor t(shape);
    for (std::size_t i = 0; i < n; ++i) t[i] = f64();
    return t;
  }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) fail("unexpected end of checkpoint (need " + std::to_string(n) + " bytes)");
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_layer(Writer& w, const LayerSpec& l) {
  w.u8(static_cast<std::uint8_t>(l.kind));
  w.u32(static_cast<std::uint32_t>(l.kw));
  w.u32(static_cast<std::uint32_t>(l.kh));
  w.u32(static_cast<std::uint32_t>(l.c_in));
  w.u32(static_cast<std::uint32_t>(l.c_out));
  w.u32(static_cast<std::uint32_t>(l.stride));
  w.u32(static_cast<std::uint32_t>(l.pad));
  w.u8(static_cast<std::uint8_t>(l.activation));
  w.u8(static_cast<std::uint8_t>(l.normalization));
  w.u8(l.task_specific ? 1 : 0);
  w.i32(l.skip_from ? *l.skip_from : -1);
}

LayerSpec read_layer(Reader& r) {
  LayerSpec l;
  l.kind = r.enumeration<LayerKind>("layer kind", 1);
  l.kw = r.small_int("kw");
  l.kh = r.small_int("kh");
  l.c_in = r.small_int("c_in");
  l.c_out = r.small_int("c_out");
  l.stride = r.small_int("stride");
  l.pad = r.small_int("pad");
  l.activation = r.enumeration<Activation>("activation", 3);
  l.normalization = r.enumeration<Normalization>("normalization", 1);
  l.task_specific = r.flag("task_specific");
  const std::int32_t skip = r.i32();
  if (skip < -1) r.fail("negative skip index");
  if (skip >= 0) l.skip_from = skip;
  return l;
}

void write_dense(Writer& w, const std::vector<DenseLayer>& layers) {
  w.count(layers.size());
  for (const DenseLayer& d : layers) {
    w.tensor(d.filters);
    w.tensor(d.bias);
  }
}

std::vector<DenseLayer> read_dense(Reader& r) {
  const int n = r.small_int("layer count", 4096);
  std::vector<DenseLayer> layers;
  for (int i = 0; i < n; ++i) {
    DenseLayer d;
    d.filters = r.tensor("filters");
    d.bias = r.tensor("bias");
    layers.push_back(std::move(d));
  }
  return layers;
}

}  // namespace

Bytes serialize_run(const RunState& run) {
  Writer w;
  for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  w.u32(run.lambda.num);
  w.u32(run.lambda.den);
  w.u64(run.seed);

  w.u32(static_cast<std::uint32_t>(run.spec.height));
  w.u32(static_cast<std::uint32_t>(run.spec.width));
  w.u32(static_cast<std::uint32_t>(run.spec.channels));
  w.count(run.spec.generator.size());
  for (const LayerSpec& l : run.spec.generator) write_layer(w, l);
  w.count(run.spec.discriminator.size());
  for (const LayerSpec& l : run.spec.discriminator) write_layer(w, l);

  w.count(run.banks.size());
  for (const FilterBank& b : run.banks) {
    w.u32(static_cast<std::uint32_t>(b.layer_index()));
    w.count(b.blocks().size());
    for (std::size_t i = 0; i < b.blocks().size(); ++i) {
      w.u32(static_cast<std::uint32_t>(b.block_tasks()[i]));
      w.tensor(b.blocks()[i].tensor());
    }
  }

  w.count(run.tasks.size());
  for (const TaskRecord& t : run.tasks) {
    w.u32(static_cast<std::uint32_t>(t.index));
    w.u8(static_cast<std::uint8_t>(t.mode));
    w.u8(static_cast<std::uint8_t>(t.data.kind));
    w.u64(t.data.seed);
    w.u32(static_cast<std::uint32_t>(t.data.count));
    w.u32(static_cast<std::uint32_t>(t.data.size));

    const TrainConfig& c = t.config;
    w.u8(static_cast<std::uint8_t>(c.mode));
    w.u32(static_cast<std::uint32_t>(c.epochs));
    w.f64(c.lr);
    w.f64(c.beta1);
    w.f64(c.beta2);
    w.f64(c.l1_weight);
    w.u32(static_cast<std::uint32_t>(c.batch_size));
    w.u64(c.seed);

    w.count(t.shared.size());
    for (const TaskLayerParams& p : t.shared) {
      w.u32(static_cast<std::uint32_t>(p.task_index));
      w.u32(static_cast<std::uint32_t>(p.trained_bank_width));
      w.u8(p.unconstrained ? 1 : 0);
      if (p.unconstrained) w.tensor(p.unconstrained->tensor());
      w.u8(p.piggyback_weight ? 1 : 0);
      if (p.piggyback_weight) w.tensor(*p.piggyback_weight);
      w.tensor(p.bias);
    }
    write_dense(w, t.task_specific);
    write_dense(w, t.discriminator);

    w.count(t.log.epochs.size());
    for (const EpochLog& e : t.log.epochs) {
      w.f64(e.g_loss);
      w.f64(e.d_loss);
      w.f64(e.val_l1);
    }
    w.u64(t.log.seed);
  }
  return w.take();
}

RunState deserialize_run(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (char c : kCheckpointMagic) {
    if (r.u8() != static_cast<std::uint8_t>(c)) throw FormatError("bad magic (not a PBGK checkpoint)", r.offset() - 1);
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), r.offset() - 4);
  }
  Rational lambda;
  lambda.num = r.u32();
  lambda.den = r.u32();
  if (lambda.den == 0 || lambda.num > lambda.den) throw FormatError("lambda outside [0, 1]", r.offset() - 8);
  const std::uint64_t seed = r.u64();

  ModelSpec spec;
  spec.height = r.small_int("height");
  spec.width = r.small_int("width");
  spec.channels = r.small_int("channels");
  const int n_gen = r.small_int("generator depth", 1024);
  for (int i = 0; i < n_gen; ++i) spec.generator.push_back(read_layer(r));
  const int n_disc = r.small_int("discriminator depth", 1024);
  for (int i = 0; i < n_disc; ++i) spec.discriminator.push_back(read_layer(r));

  const std::size_t spec_end = r.offset();
  RunState run;
  try {
    run = RunState::create(spec, lambda, seed);
  } catch (const std::exception& e) {
    throw FormatError(std::string("invalid model spec: ") + e.what(), spec_end);
  }

  const int n_banks = r.small_int("bank count", 1024);
  if (static_cast<std::size_t>(n_banks) != run.banks.size()) r.fail("bank count does not match shared layer count");
  for (FilterBank& bank : run.banks) {
    const int layer = r.small_int("bank layer");
    if (layer != bank.layer_index()) r.fail("bank layer index " + std::to_string(layer) + " out of order");
    const int n_blocks = r.small_int("block count", 1 << 16);
    for (int b = 0; b < n_blocks; ++b) {
      const int task = r.small_int("block task");
      const std::size_t at = r.offset();
      Tensor t = r.tensor("bank block");
      try {
        bank = bank.expanded(FilterTensor(std::move(t)), task);
      } catch (const std::exception& e) {
        throw FormatError(std::string("invalid bank block: ") + e.what(), at);
      }
    }
  }

  const int n_tasks = r.small_int("task count", 1 << 16);
  for (int i = 0; i < n_tasks; ++i) {
    TaskRecord t;
    t.index = r.small_int("task index");
    if (t.index != i + 1) r.fail("task index " + std::to_string(t.index) + " out of sequence");
    t.mode = r.enumeration<TrainMode>("train mode", 3);
    t.data.kind = r.enumeration<TaskKind>("task kind", 3);
    t.data.seed = r.u64();
    t.data.count = r.small_int("sample count");
    t.data.size = r.small_int("image size");

    TrainConfig& c = t.config;
    c.mode = r.enumeration<TrainMode>("train mode", 3);
    c.epochs = r.small_int("epochs");
    c.lr = r.f64();
    c.beta1 = r.f64();
    c.beta2 = r.f64();
    c.l1_weight = r.f64();
    c.batch_size = r.small_int("batch size");
    c.seed = r.u64();

    const int n_shared = r.small_int("shared layer count", 1024);
    for (int s = 0; s < n_shared; ++s) {
      TaskLayerParams p;
      p.task_index = r.small_int("layer task index");
      p.trained_bank_width = r.small_int("trained bank width");
      if (r.flag("unconstrained present")) {
        const std::size_t at = r.offset();
        Tensor u = r.tensor("unconstrained");
        if (u.rank() != 4) throw FormatError("unconstrained block must be rank 4", at);
        p.unconstrained = FilterTensor(std::move(u));
      }
      if (r.flag("piggyback weight present")) p.piggyback_weight = r.tensor("piggyback weight");
      p.bias = r.tensor("shared bias");
      t.shared.push_back(std::move(p));
    }
    t.task_specific = read_dense(r);
    t.discriminator = read_dense(r);

    const int n_epochs = r.small_int("epoch count");
    for (int e = 0; e < n_epochs; ++e) {
      EpochLog log;
      log.g_loss = r.f64();
      log.d_loss = r.f64();
      log.val_l1 = r.f64();
      t.log.epochs.push_back(log);
    }
    t.log.seed = r.u64();
    run.tasks.push_back(std::move(t));
  }
  if (!r.done()) r.fail("trailing bytes after checkpoint");
  return run;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return data;
}

void save_checkpoint(const RunState& run, const std::filesystem::path& path, const WriteProbe& probe) {
  const Bytes bytes = serialize_run(run);
  std::filesystem::path tmp = path;
  tmp += ".tmp";

  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw IoError("cannot create " + tmp.string() + ": " + std::strerror(errno));
  constexpr std::size_t kChunk = 1 << 16;
  std::size_t written = 0;
  try {
    while (written < bytes.size()) {
      const std::size_t n = std::min(kChunk, bytes.size() - written);
      const ssize_t got = ::write(fd, bytes.data() + written, n);
      if (got < 0) {
        if (errno == EINTR) continue;
        throw IoError("write failed for " + tmp.string() + ": " + std::strerror(errno));
      }
      written += static_cast<std::size_t>(got);
      if (probe) probe(written);
    }
    if (::fsync(fd) != 0) throw IoError("fsync failed for " + tmp.string() + ": " + std::strerror(errno));
  } catch (...) {
    ::close(fd);
    throw;
  }
  if (::close(fd) != 0) throw IoError("close failed for " + tmp.string());
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

RunState load_checkpoint(const std::filesystem::path& path) { return deserialize_run(read_file(path)); }

RunLock::RunLock(const std::filesystem::path& run_dir) {
  const std::filesystem::path path = run_dir / kLockFile;
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError("cannot open lock " + path.string() + ": " + std::strerror(errno));
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    const int err = errno;
    ::close(fd_);
    if (err == EWOULDBLOCK) throw IoError("run directory " + run_dir.string() + " is locked by another writer");
    throw IoError("cannot lock " + path.string() + ": " + std::strerror(err));
  }
}

RunLock::~RunLock() { ::close(fd_); }

}  // namespace pbgan

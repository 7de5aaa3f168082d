#include "crmman/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "crmman/errors.hpp"

namespace crmman {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint layout assumes a little-endian host");

constexpr char kMagic[8] = {'C', 'R', 'M', 'M', 'A', 'N', 'C', 'K'};

class Writer {
 public:
  template <typename T>
  void pod(T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void text(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_ += s;
  }
  void tensor(const std::string& name, const ad::Tensor& t, bool trainable) {
    text(name);
    pod<std::uint8_t>(trainable ? 1 : 0);
    pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t extent : t.shape()) pod<std::uint64_t>(extent);
    for (double v : t.values()) pod(v);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string text() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  ad::Tensor tensor(std::string& name, bool& trainable) {
    name = text();
    trainable = pod<std::uint8_t>() != 0;
    const auto rank = pod<std::uint32_t>();
    ad::Shape shape(rank);
    std::size_t count = rank == 0 ? 0 : 1;
    for (auto& extent : shape) {
      extent = pod<std::uint64_t>();
      count *= extent;
    }
    need(count * sizeof(double));
    std::vector<double> values(count);
    std::memcpy(values.data(), bytes_.data() + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
    return ad::Tensor(std::move(shape), std::move(values));
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  for (char c : kMagic) w.pod(c);
  w.pod(kCheckpointVersion);
  w.text(checkpoint.config_text);
  w.pod<std::uint64_t>(checkpoint.epoch);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(checkpoint.metrics.size()));
  for (const auto& [name, value] : checkpoint.metrics) {
    w.text(name);
    w.pod(value);
  }
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(checkpoint.item_ids.size()));
  for (const auto& id : checkpoint.item_ids) w.text(id);
  const bool has_init = !checkpoint.init_vectors.empty();
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(checkpoint.params.size() + (has_init ? 1 : 0)));
  for (ad::ParamId id = 0; id < checkpoint.params.size(); ++id) {
    w.tensor(checkpoint.params.name(id), checkpoint.params.value(id), checkpoint.params.trainable(id));
  }
  if (has_init) w.tensor(kInitVectorsTensor, checkpoint.init_vectors, false);
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  for (char c : kMagic) {
    if (r.pod<char>() != c) throw IoError("not a crmman checkpoint");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint checkpoint;
  checkpoint.config_text = r.text();
  checkpoint.epoch = r.pod<std::uint64_t>();
  const auto metric_count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < metric_count; ++i) {
    std::string name = r.text();
    checkpoint.metrics.emplace_back(std::move(name), r.pod<double>());
  }
  const auto item_count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < item_count; ++i) checkpoint.item_ids.push_back(r.text());
  const auto tensor_count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    std::string name;
    bool trainable = true;
    ad::Tensor t = r.tensor(name, trainable);
    if (name == kInitVectorsTensor) {
      checkpoint.init_vectors = std::move(t);
    } else {
      checkpoint.params.add(name, std::move(t), trainable);
    }
  }
  if (!r.done()) throw IoError("trailing bytes after checkpoint");
  return checkpoint;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace crmman

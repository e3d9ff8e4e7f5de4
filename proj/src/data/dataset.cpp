#include "data/dataset.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "util/error.hpp"
#include "util/rng.hpp"

namespace sorfgp {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "chunk files are little-endian; big-endian hosts need byte swapping");

namespace {

constexpr char kChunkMagic[4] = {'S', 'G', 'P', 'C'};
constexpr std::uint32_t kChunkVersion = 1;
constexpr std::uint32_t kDtypeFloat32 = 1;

template <typename T>
void put(std::vector<char>& buf, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
void put_array(std::vector<char>& buf, std::span<const T> values) {
  const char* p = reinterpret_cast<const char*>(values.data());
  buf.insert(buf.end(), p, p + values.size_bytes());
}

class Reader {
 public:
  Reader(const std::vector<char>& buf, const fs::path& path) : buf_(buf), path_(path) {}

  template <typename T>
  T get() {
    T v;
    take(&v, sizeof(T));
    return v;
  }

  template <typename T>
  std::vector<T> get_array(std::size_t n) {
    std::vector<T> v(n);
    take(v.data(), n * sizeof(T));
    return v;
  }

  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void take(void* dst, std::size_t bytes) {
    if (pos_ + bytes > buf_.size()) throw IoError("truncated chunk file: " + path_.string());
    std::memcpy(dst, buf_.data() + pos_, bytes);
    pos_ += bytes;
  }

  const std::vector<char>& buf_;
  const fs::path& path_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<char> buf(size);
  if (size > 0 && !in.read(buf.data(), static_cast<std::streamsize>(size))) {
    throw IoError("failed reading " + path.string());
  }
  return buf;
}

void write_file(const fs::path& path, const std::vector<char>& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<char> encode_chunk(const Chunk& chunk) {
  std::vector<char> buf;
  buf.insert(buf.end(), kChunkMagic, kChunkMagic + 4);
  put(buf, kChunkVersion);
  put(buf, kDtypeFloat32);
  put(buf, static_cast<std::uint32_t>(chunk.kind()));
  put(buf, static_cast<std::uint64_t>(chunk.size()));
  put(buf, static_cast<std::uint64_t>(chunk.width()));
  if (chunk.kind() != InputKind::FixedVector) put_array(buf, chunk.lengths());
  put_array(buf, chunk.values());
  put_array(buf, chunk.targets());
  return buf;
}

Chunk decode_chunk(const std::vector<char>& buf, const fs::path& path) {
  Reader r(buf, path);
  char magic[4];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kChunkMagic, 4) != 0) throw IoError("bad chunk magic in " + path.string());
  const auto version = r.get<std::uint32_t>();
  if (version != kChunkVersion) {
    throw IoError("unsupported chunk version " + std::to_string(version) + " in " + path.string());
  }
  if (r.get<std::uint32_t>() != kDtypeFloat32) throw IoError("unsupported dtype in " + path.string());
  const auto kind = static_cast<InputKind>(r.get<std::uint32_t>());
  const auto n = static_cast<std::size_t>(r.get<std::uint64_t>());
  const auto width = static_cast<std::size_t>(r.get<std::uint64_t>());
  std::vector<std::uint32_t> lengths;
  if (kind == InputKind::FixedVector) {
    lengths.assign(n, 1);
  } else {
    lengths = r.get_array<std::uint32_t>(n);
  }
  std::size_t total = 0;
  for (auto l : lengths) total += l;
  auto values = r.get_array<float>(total * width);
  auto targets = r.get_array<double>(n);
  if (!r.at_end()) throw IoError("trailing bytes in " + path.string());
  return Chunk::from_parts(kind, width, std::move(values), std::move(lengths), std::move(targets));
}

}  // namespace

const char* to_string(InputKind kind) {
  switch (kind) {
    case InputKind::FixedVector: return "fixed_vector";
    case InputKind::Sequence: return "sequence";
    case InputKind::Graph: return "graph";
  }
  return "unknown";
}

InputKind parse_input_kind(const std::string& name) {
  if (name == "fixed_vector") return InputKind::FixedVector;
  if (name == "sequence") return InputKind::Sequence;
  if (name == "graph") return InputKind::Graph;
  throw ValidationError("unknown input kind '" + name + "'");
}

// ---------------------------------------------------------------------------

void Chunk::add(std::span<const float> values, std::size_t rows, double target) {
  if (rows == 0) throw ValidationError("record must have at least one element row");
  if (kind_ == InputKind::FixedVector && rows != 1) {
    throw ValidationError("fixed-vector records have exactly one row");
  }
  if (values.size() != rows * width_) {
    throw ValidationError("inconsistent record width: expected " + std::to_string(width_) +
                          " values per row, got " + std::to_string(values.size()) + " for " +
                          std::to_string(rows) + " rows");
  }
  starts_.push_back(total_rows());
  values_.insert(values_.end(), values.begin(), values.end());
  lengths_.push_back(static_cast<std::uint32_t>(rows));
  targets_.push_back(target);
}

void Chunk::add(std::span<const double> values, std::size_t rows, double target) {
  std::vector<float> tmp(values.begin(), values.end());
  add(std::span<const float>(tmp), rows, target);
}

void Chunk::add(const RowMatrix& record, double target) {
  if (static_cast<std::size_t>(record.cols()) != width_) {
    throw ValidationError("inconsistent record width: expected " + std::to_string(width_) +
                          ", got " + std::to_string(record.cols()));
  }
  add(std::span<const double>(record.data(), static_cast<std::size_t>(record.size())),
      static_cast<std::size_t>(record.rows()), target);
}

std::span<const float> Chunk::record_values(std::size_t i) const {
  return {values_.data() + starts_.at(i) * width_, lengths_[i] * width_};
}

RecordView Chunk::record(std::size_t i, std::vector<double>& buffer) const {
  auto src = record_values(i);
  buffer.assign(src.begin(), src.end());
  return {buffer.data(), lengths_[i], width_};
}

Chunk Chunk::from_parts(InputKind kind, std::size_t width, std::vector<float> values,
                        std::vector<std::uint32_t> lengths, std::vector<double> targets) {
  require(lengths.size() == targets.size(), "chunk: lengths/targets size mismatch");
  Chunk c(kind, width);
  c.values_ = std::move(values);
  c.lengths_ = std::move(lengths);
  c.targets_ = std::move(targets);
  c.starts_.reserve(c.lengths_.size());
  std::size_t off = 0;
  for (auto l : c.lengths_) {
    c.starts_.push_back(off);
    off += l;
  }
  require(off * width == c.values_.size(), "chunk: payload size does not match length table");
  return c;
}

// ---------------------------------------------------------------------------

InMemorySource::InMemorySource(std::vector<Chunk> chunks) {
  require(!chunks.empty(), "in-memory source needs at least one chunk");
  kind_ = chunks.front().kind();
  width_ = chunks.front().width();
  for (auto& c : chunks) append(std::move(c));
}

void InMemorySource::append(Chunk chunk) {
  require(chunk.kind() == kind_ && chunk.width() == width_,
          "in-memory source: chunk kind/width mismatch");
  if (chunk.empty()) return;
  records_ += chunk.size();
  chunks_.push_back(std::move(chunk));
}

InMemorySource InMemorySource::from_matrix(const RowMatrix& x, const Vector& y,
                                           std::size_t chunk_rows) {
  require(x.rows() == y.size(), "from_matrix: row/target count mismatch");
  require(chunk_rows > 0, "chunk_rows must be positive");
  const auto width = static_cast<std::size_t>(x.cols());
  InMemorySource src(InputKind::FixedVector, width);
  Chunk current(InputKind::FixedVector, width);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    current.add(std::span<const double>(x.row(r).data(), width), 1, y[r]);
    if (current.size() == chunk_rows) {
      src.append(std::move(current));
      current = Chunk(InputKind::FixedVector, width);
    }
  }
  if (!current.empty()) src.append(std::move(current));
  return src;
}

InMemorySource InMemorySource::subset(const DataSource& src, std::span<const std::size_t> indices,
                                      std::size_t chunk_rows) {
  require(chunk_rows > 0, "chunk_rows must be positive");
  // Locate every requested record, then copy in the requested order.
  std::vector<std::pair<std::size_t, std::size_t>> where(src.num_records());
  std::vector<Chunk> chunks;
  std::size_t global = 0;
  for (std::size_t c = 0; c < src.num_chunks(); ++c) {
    chunks.push_back(src.load_chunk(c));
    for (std::size_t i = 0; i < chunks.back().size(); ++i) where[global++] = {c, i};
  }
  InMemorySource out(src.kind(), src.width());
  Chunk current(src.kind(), src.width());
  for (auto idx : indices) {
    require(idx < where.size(), "subset index out of range");
    const auto [c, i] = where[idx];
    current.add(chunks[c].record_values(i), chunks[c].record_rows(i), chunks[c].targets()[i]);
    if (current.size() == chunk_rows) {
      out.append(std::move(current));
      current = Chunk(src.kind(), src.width());
    }
  }
  if (!current.empty()) out.append(std::move(current));
  return out;
}

// ---------------------------------------------------------------------------

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed manifest line: " + line);
    m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  for (const auto& [k, v] : manifest) out << k << '=' << v << '\n';
  if (!out) throw IoError("failed writing manifest " + path.string());
}

void ContentHash::update(const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    state_ ^= p[i];
    state_ *= 0x100000001b3ull;
  }
}

std::string ContentHash::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, state_);
  return buf;
}

// ---------------------------------------------------------------------------

fs::path ChunkedDataset::chunk_path(const fs::path& dir, std::size_t i) {
  char name[32];
  std::snprintf(name, sizeof name, "chunk_%06zu.bin", i);
  return dir / name;
}

namespace {

std::size_t parse_size(const Manifest& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw IoError("manifest is missing '" + key + "'");
  try {
    return static_cast<std::size_t>(std::stoull(it->second));
  } catch (const std::exception&) {
    throw IoError("manifest field '" + key + "' is not a count: " + it->second);
  }
}

}  // namespace

ChunkedDataset ChunkedDataset::open(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  ChunkedDataset ds;
  ds.dir_ = dir;
  ds.manifest_ = read_manifest(dir / "manifest.txt");
  if (parse_size(ds.manifest_, "schema_version") != kSchemaVersion) {
    throw IoError("unsupported dataset schema version in " + dir.string());
  }
  try {
    ds.kind_ = parse_input_kind(ds.manifest_.at("kind"));
  } catch (const std::out_of_range&) {
    throw IoError("manifest is missing 'kind'");
  }
  ds.width_ = parse_size(ds.manifest_, "width");
  ds.num_records_ = parse_size(ds.manifest_, "num_records");
  const std::size_t chunks = parse_size(ds.manifest_, "num_chunks");
  std::istringstream rows(ds.manifest_.count("chunk_rows") ? ds.manifest_.at("chunk_rows") : "");
  std::string tok;
  std::size_t total = 0;
  while (std::getline(rows, tok, ',')) {
    ds.chunk_rows_.push_back(static_cast<std::size_t>(std::stoull(tok)));
    total += ds.chunk_rows_.back();
  }
  if (ds.chunk_rows_.size() != chunks || total != ds.num_records_) {
    throw IoError("manifest chunk table is inconsistent in " + dir.string());
  }
  if (!ds.manifest_.count("content_hash")) throw IoError("manifest is missing 'content_hash'");
  return ds;
}

Chunk ChunkedDataset::load_chunk(std::size_t i) const {
  if (i >= chunk_rows_.size()) throw ValidationError("chunk index out of range");
  const auto path = chunk_path(dir_, i);
  Chunk c = decode_chunk(read_file(path), path);
  if (c.size() != chunk_rows_[i] || c.kind() != kind_ || c.width() != width_) {
    throw IoError("chunk " + path.string() + " disagrees with the manifest");
  }
  return c;
}

std::string ChunkedDataset::compute_content_hash() const {
  ContentHash h;
  for (std::size_t i = 0; i < chunk_rows_.size(); ++i) {
    const auto buf = read_file(chunk_path(dir_, i));
    h.update(buf.data(), buf.size());
  }
  return h.hex();
}

// ---------------------------------------------------------------------------

ChunkWriter::ChunkWriter(fs::path out_dir, InputKind kind, std::size_t width,
                         std::size_t chunk_rows, Manifest extra)
    : dir_(std::move(out_dir)),
      kind_(kind),
      width_(width),
      chunk_rows_(chunk_rows),
      extra_(std::move(extra)),
      pending_(kind, width) {
  require(chunk_rows_ > 0, "chunk_rows must be positive");
  require(width_ > 0, "feature width must be positive");
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec || !fs::is_directory(dir_)) throw IoError("cannot create directory " + dir_.string());
  // Stale chunks from an earlier, larger dataset would otherwise linger.
  for (const auto& entry : fs::directory_iterator(dir_)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("chunk_", 0) == 0 && entry.path().extension() == ".bin") fs::remove(entry.path());
  }
}

void ChunkWriter::add(std::span<const float> values, std::size_t rows, double target) {
  require(!finished_, "chunk writer already finished");
  pending_.add(values, rows, target);
  if (pending_.size() == chunk_rows_) flush();
}

void ChunkWriter::add(const RowMatrix& record, double target) {
  require(!finished_, "chunk writer already finished");
  pending_.add(record, target);
  if (pending_.size() == chunk_rows_) flush();
}

void ChunkWriter::add_chunk(const Chunk& chunk) {
  require(chunk.kind() == kind_ && chunk.width() == width_, "chunk kind/width mismatch");
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    add(chunk.record_values(i), chunk.record_rows(i), chunk.targets()[i]);
  }
}

void ChunkWriter::flush() {
  if (pending_.empty()) return;
  const auto buf = encode_chunk(pending_);
  hash_.update(buf.data(), buf.size());
  write_file(ChunkedDataset::chunk_path(dir_, written_rows_.size()), buf);
  written_rows_.push_back(pending_.size());
  pending_ = Chunk(kind_, width_);
}

ChunkedDataset ChunkWriter::finish() {
  require(!finished_, "chunk writer already finished");
  flush();
  finished_ = true;
  if (written_rows_.empty()) throw ValidationError("dataset has no records");
  Manifest m = extra_;
  std::size_t total = 0;
  std::string rows;
  for (std::size_t i = 0; i < written_rows_.size(); ++i) {
    total += written_rows_[i];
    if (i) rows += ',';
    rows += std::to_string(written_rows_[i]);
  }
  m["schema_version"] = std::to_string(ChunkedDataset::kSchemaVersion);
  m["dtype"] = "float32";
  m["target_dtype"] = "float64";
  m["kind"] = to_string(kind_);
  m["width"] = std::to_string(width_);
  m["num_records"] = std::to_string(total);
  m["num_chunks"] = std::to_string(written_rows_.size());
  m["chunk_rows"] = rows;
  m["content_hash"] = hash_.hex();
  m["hash_algorithm"] = "fnv1a64";
  m["rng"] = std::string(kRngIdentity);
  write_manifest(dir_ / "manifest.txt", m);
  return ChunkedDataset::open(dir_);
}

ChunkedDataset write_chunks(const DataSource& source, std::size_t chunk_rows,
                            const fs::path& out_dir, Manifest extra) {
  ChunkWriter writer(out_dir, source.kind(), source.width(), chunk_rows, std::move(extra));
  for (std::size_t c = 0; c < source.num_chunks(); ++c) writer.add_chunk(source.load_chunk(c));
  return writer.finish();
}

}  // namespace sorfgp

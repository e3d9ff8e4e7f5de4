#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "util/linalg.hpp"

namespace sorfgp {

enum class InputKind : std::uint32_t { FixedVector = 0, Sequence = 1, Graph = 2 };

const char* to_string(InputKind kind);
InputKind parse_input_kind(const std::string& name);

/// Element rows of one record in double precision: `rows` x `width`, row-major.
struct RecordView {
  const double* data;
  std::size_t rows;
  std::size_t width;
};

/// A batch of records held in memory. Fixed vectors have one element row per
/// record; sequences and graphs have a variable count.
class Chunk {
 public:
  Chunk() = default;
  Chunk(InputKind kind, std::size_t width) : kind_(kind), width_(width) {}

  InputKind kind() const { return kind_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return lengths_.size(); }
  bool empty() const { return lengths_.empty(); }

  void add(std::span<const float> values, std::size_t rows, double target);
  void add(std::span<const double> values, std::size_t rows, double target);
  void add(const RowMatrix& record, double target);

  std::span<const float> values() const { return values_; }
  std::span<const std::uint32_t> lengths() const { return lengths_; }
  std::span<const double> targets() const { return targets_; }
  std::size_t total_rows() const { return values_.size() / (width_ ? width_ : 1); }

  std::span<const float> record_values(std::size_t i) const;
  std::size_t record_rows(std::size_t i) const { return lengths_[i]; }
  /// Copies record i into `buffer` (resized as needed) and returns a view.
  RecordView record(std::size_t i, std::vector<double>& buffer) const;

  // Used by the file reader.
  static Chunk from_parts(InputKind kind, std::size_t width, std::vector<float> values,
                          std::vector<std::uint32_t> lengths, std::vector<double> targets);

 private:
  InputKind kind_ = InputKind::FixedVector;
  std::size_t width_ = 0;
  std::vector<float> values_;
  std::vector<std::uint32_t> lengths_;
  std::vector<std::size_t> starts_;  // element-row offset per record
  std::vector<double> targets_;
};

/// Streaming iteration contract: chunks are visited in index order and only
/// the chunk being processed needs to be resident.
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual std::size_t num_chunks() const = 0;
  virtual Chunk load_chunk(std::size_t i) const = 0;
  virtual std::size_t num_records() const = 0;
  virtual InputKind kind() const = 0;
  virtual std::size_t width() const = 0;
};

class InMemorySource : public DataSource {
 public:
  InMemorySource(InputKind kind, std::size_t width) : kind_(kind), width_(width) {}
  explicit InMemorySource(std::vector<Chunk> chunks);
  /// Fixed-vector rows of x split into chunks of `chunk_rows`.
  static InMemorySource from_matrix(const RowMatrix& x, const Vector& y, std::size_t chunk_rows);
  /// Records of an existing source, selected by global index, re-chunked.
  static InMemorySource subset(const DataSource& src, std::span<const std::size_t> indices,
                               std::size_t chunk_rows);

  void append(Chunk chunk);

  std::size_t num_chunks() const override { return chunks_.size(); }
  Chunk load_chunk(std::size_t i) const override { return chunks_.at(i); }
  std::size_t num_records() const override { return records_; }
  InputKind kind() const override { return kind_; }
  std::size_t width() const override { return width_; }
  const Chunk& chunk(std::size_t i) const { return chunks_.at(i); }

 private:
  InputKind kind_;
  std::size_t width_;
  std::vector<Chunk> chunks_;
  std::size_t records_ = 0;
};

using Manifest = std::map<std::string, std::string>;

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// FNV-1a 64-bit, incremental.
class ContentHash {
 public:
  void update(const void* data, std::size_t bytes);
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ull;
};

/// On-disk dataset: `manifest.txt` plus `chunk_NNNNNN.bin` files.
class ChunkedDataset : public DataSource {
 public:
  static constexpr std::uint32_t kSchemaVersion = 1;

  static ChunkedDataset open(const std::filesystem::path& dir);

  std::size_t num_chunks() const override { return chunk_rows_.size(); }
  Chunk load_chunk(std::size_t i) const override;
  std::size_t num_records() const override { return num_records_; }
  InputKind kind() const override { return kind_; }
  std::size_t width() const override { return width_; }

  const std::filesystem::path& directory() const { return dir_; }
  const Manifest& manifest() const { return manifest_; }
  const std::vector<std::size_t>& chunk_rows() const { return chunk_rows_; }
  std::string content_hash() const { return manifest_.at("content_hash"); }
  /// Re-hashes the chunk files on disk.
  std::string compute_content_hash() const;
  bool verify() const { return compute_content_hash() == content_hash(); }

  static std::filesystem::path chunk_path(const std::filesystem::path& dir, std::size_t i);

 private:
  std::filesystem::path dir_;
  Manifest manifest_;
  InputKind kind_ = InputKind::FixedVector;
  std::size_t width_ = 0;
  std::size_t num_records_ = 0;
  std::vector<std::size_t> chunk_rows_;
};

/// Accepts records one at a time and writes full chunks as they fill up.
class ChunkWriter {
 public:
  ChunkWriter(std::filesystem::path out_dir, InputKind kind, std::size_t width,
              std::size_t chunk_rows, Manifest extra = {});

  void add(std::span<const float> values, std::size_t rows, double target);
  void add(const RowMatrix& record, double target);
  void add_chunk(const Chunk& chunk);
  ChunkedDataset finish();

 private:
  void flush();

  std::filesystem::path dir_;
  InputKind kind_;
  std::size_t width_;
  std::size_t chunk_rows_;
  Manifest extra_;
  Chunk pending_;
  std::vector<std::size_t> written_rows_;
  ContentHash hash_;
  bool finished_ = false;
};

/// Re-chunks any source to disk. Identical input gives identical bytes.
ChunkedDataset write_chunks(const DataSource& source, std::size_t chunk_rows,
                            const std::filesystem::path& out_dir, Manifest extra = {});

}  // namespace sorfgp

#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "data/dataset.hpp"
#include "util/linalg.hpp"

namespace sorfgp {

inline constexpr std::string_view kAminoAlphabet = "ACDEFGHIKLMNPQRSTVWY";

/// One row per character, one 1 per row.
RowMatrix encode_sequence_onehot(std::string_view sequence, std::string_view alphabet);

struct MoleculeRecord {
  std::vector<std::string> elements;
  std::vector<std::array<double, 3>> coordinates;  // Angstrom
  double target = 0.0;
};

/// Row i: one-hot(element_i) followed by max_neighbors blocks of
/// one-hot(element_j) / r_ij^6 for the nearest atoms j, zero-padded.
/// Equidistant neighbors are ordered by element code, then input index.
RowMatrix encode_molecule(const MoleculeRecord& rec, const std::vector<std::string>& element_set,
                          std::size_t max_neighbors = 15);

inline std::size_t molecule_width(std::size_t num_elements, std::size_t max_neighbors) {
  return num_elements * (1 + max_neighbors);
}

/// Numeric CSV to a fixed-vector dataset. A first row that does not parse as
/// numbers is taken as the header. `target_column` is a header name or a
/// zero-based index.
ChunkedDataset ingest_tabular(const std::filesystem::path& csv_path,
                              const std::string& target_column, std::size_t chunk_rows,
                              const std::filesystem::path& out_dir);

/// Lines of "<sequence> <label>" to a one-hot sequence dataset.
ChunkedDataset ingest_sequences(const std::filesystem::path& path, std::string_view alphabet,
                                std::size_t chunk_rows, const std::filesystem::path& out_dir);

/// Concatenated XYZ blocks: atom count, comment line holding the target,
/// then "<element> x y z" per atom.
std::vector<MoleculeRecord> read_xyz(const std::filesystem::path& path);

ChunkedDataset ingest_xyz(const std::filesystem::path& path,
                          const std::vector<std::string>& element_set, std::size_t max_neighbors,
                          std::size_t chunk_rows, const std::filesystem::path& out_dir);

}  // namespace sorfgp

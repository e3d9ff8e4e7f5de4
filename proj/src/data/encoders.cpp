#include "data/encoders.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "util/error.hpp"

namespace sorfgp {

RowMatrix encode_sequence_onehot(std::string_view sequence, std::string_view alphabet) {
  if (sequence.empty()) throw ValidationError("cannot encode an empty sequence");
  require(!alphabet.empty(), "alphabet is empty");
  RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(sequence.size()),
                                  static_cast<Eigen::Index>(alphabet.size()));
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    const auto pos = alphabet.find(sequence[i]);
    if (pos == std::string_view::npos) {
      throw ValidationError("unknown character '" + std::string(1, sequence[i]) +
                            "' at position " + std::to_string(i));
    }
    out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(pos)) = 1.0;
  }
  return out;
}

RowMatrix encode_molecule(const MoleculeRecord& rec, const std::vector<std::string>& element_set,
                          std::size_t max_neighbors) {
  const std::size_t n = rec.elements.size();
  if (n == 0) throw ValidationError("molecule has no atoms");
  require(rec.coordinates.size() == n, "molecule: element/coordinate count mismatch");
  const std::size_t e = element_set.size();
  require(e > 0, "element set is empty");

  std::vector<std::size_t> code(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = std::find(element_set.begin(), element_set.end(), rec.elements[i]);
    if (it == element_set.end()) {
      throw ValidationError("element '" + rec.elements[i] + "' of atom " + std::to_string(i) +
                            " is not in the element set");
    }
    code[i] = static_cast<std::size_t>(it - element_set.begin());
    for (double c : rec.coordinates[i]) {
      if (!std::isfinite(c)) throw ValidationError("non-finite coordinate on atom " + std::to_string(i));
    }
  }

  RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(n),
                                  static_cast<Eigen::Index>(molecule_width(e, max_neighbors)));
  std::vector<std::pair<double, std::size_t>> nbrs;
  for (std::size_t i = 0; i < n; ++i) {
    out(i, code[i]) = 1.0;
    nbrs.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double r2 = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double d = rec.coordinates[i][a] - rec.coordinates[j][a];
        r2 += d * d;
      }
      if (r2 == 0.0) {
        throw ValidationError("atoms " + std::to_string(std::min(i, j)) + " and " +
                              std::to_string(std::max(i, j)) + " are coincident");
      }
      nbrs.emplace_back(std::sqrt(r2), j);
    }
    std::sort(nbrs.begin(), nbrs.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      if (code[a.second] != code[b.second]) return code[a.second] < code[b.second];
      return a.second < b.second;
    });
    const std::size_t take = std::min(max_neighbors, nbrs.size());
    for (std::size_t k = 0; k < take; ++k) {
      const auto [r, j] = nbrs[k];
      out(i, e * (k + 1) + code[j]) = 1.0 / std::pow(r, 6);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && errno != ERANGE;
}

std::ifstream open_text(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("input file not found: " + path.string());
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace

ChunkedDataset ingest_tabular(const std::filesystem::path& csv_path,
                              const std::string& target_column, std::size_t chunk_rows,
                              const std::filesystem::path& out_dir) {
  auto in = open_text(csv_path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> first;
  while (first.empty() && std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string::npos) first = split_csv_line(line);
  }
  if (first.empty()) throw ValidationError("CSV file is empty: " + csv_path.string());

  bool header = false;
  for (const auto& c : first) {
    double v;
    if (!parse_double(c, v) && c != "nan" && c != "NaN") header = true;
  }
  const std::size_t cols = first.size();
  require(cols >= 2, "CSV needs at least one feature column and a target column");

  std::size_t target = cols;
  if (header) {
    auto it = std::find(first.begin(), first.end(), target_column);
    if (it != first.end()) target = static_cast<std::size_t>(it - first.begin());
  }
  if (target == cols) {
    double v;
    if (parse_double(target_column, v) && v >= 0 && v == std::floor(v) && v < cols) {
      target = static_cast<std::size_t>(v);
    } else {
      throw ValidationError("target column '" + target_column + "' not found in " +
                            csv_path.string());
    }
  }

  ChunkWriter writer(out_dir, InputKind::FixedVector, cols - 1, chunk_rows,
                     {{"source", csv_path.filename().string()}, {"target_column", target_column}});
  std::vector<float> row(cols - 1);
  auto consume = [&](const std::vector<std::string>& cells, std::size_t at_line) {
    if (cells.size() != cols) {
      throw ValidationError("row " + std::to_string(at_line) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(cols));
    }
    double y = 0.0;
    std::size_t k = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      double v;
      if (!parse_double(cells[c], v) || !std::isfinite(v)) {
        throw ValidationError("non-numeric or missing value '" + cells[c] + "' at row " +
                              std::to_string(at_line) + ", column " + std::to_string(c + 1));
      }
      if (c == target) {
        y = v;
      } else {
        row[k++] = static_cast<float>(v);
      }
    }
    writer.add(row, 1, y);
  };
  if (!header) consume(first, line_no);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    consume(split_csv_line(line), line_no);
  }
  return writer.finish();
}

ChunkedDataset ingest_sequences(const std::filesystem::path& path, std::string_view alphabet,
                                std::size_t chunk_rows, const std::filesystem::path& out_dir) {
  auto in = open_text(path);
  ChunkWriter writer(out_dir, InputKind::Sequence, alphabet.size(), chunk_rows,
                     {{"source", path.filename().string()}, {"alphabet", std::string(alphabet)}});
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string seq, label;
    if (!(ss >> seq)) continue;
    double y;
    if (!(ss >> label) || !parse_double(label, y) || !std::isfinite(y)) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected '<sequence> <label>'");
    }
    try {
      writer.add(encode_sequence_onehot(seq, alphabet), y);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return writer.finish();
}

std::vector<MoleculeRecord> read_xyz(const std::filesystem::path& path) {
  auto in = open_text(path);
  std::vector<MoleculeRecord> out;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::size_t count = 0;
    {
      std::istringstream ss(line);
      if (!(ss >> count) || count == 0) fail("expected a positive atom count");
    }
    MoleculeRecord rec;
    if (!std::getline(in, line)) fail("missing comment line");
    ++line_no;
    {
      std::istringstream ss(line);
      std::string tok;
      if (!(ss >> tok) || !parse_double(tok, rec.target)) fail("comment line must start with the target");
    }
    for (std::size_t a = 0; a < count; ++a) {
      if (!std::getline(in, line)) fail("truncated atom block");
      ++line_no;
      std::istringstream ss(line);
      std::string el;
      std::array<double, 3> xyz{};
      if (!(ss >> el >> xyz[0] >> xyz[1] >> xyz[2])) fail("expected '<element> x y z'");
      rec.elements.push_back(el);
      rec.coordinates.push_back(xyz);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

ChunkedDataset ingest_xyz(const std::filesystem::path& path,
                          const std::vector<std::string>& element_set, std::size_t max_neighbors,
                          std::size_t chunk_rows, const std::filesystem::path& out_dir) {
  const auto mols = read_xyz(path);
  std::string elements;
  for (const auto& e : element_set) elements += (elements.empty() ? "" : ",") + e;
  ChunkWriter writer(out_dir, InputKind::Graph, molecule_width(element_set.size(), max_neighbors),
                     chunk_rows,
                     {{"source", path.filename().string()},
                      {"elements", elements},
                      {"max_neighbors", std::to_string(max_neighbors)},
                      {"neighbor_ties", "element_code,input_index"}});
  for (std::size_t m = 0; m < mols.size(); ++m) {
    try {
      writer.add(encode_molecule(mols[m], element_set, max_neighbors), mols[m].target);
    } catch (const ValidationError& e) {
      throw ValidationError("molecule " + std::to_string(m) + ": " + e.what());
    }
  }
  return writer.finish();
}

}  // namespace sorfgp

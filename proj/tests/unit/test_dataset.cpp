#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "data/dataset.hpp"
#include "data/encoders.hpp"
#include "tmpdir.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"

using namespace sorfgp;

namespace {

RowMatrix random_rows(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  CounterRng rng(seed, 0);
  RowMatrix x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

}  // namespace

TEST(Dataset, ChunkLayoutTenRecords) {
  TempDir tmp;
  const RowMatrix x = random_rows(10, 3, 1);
  Vector y = Vector::LinSpaced(10, 0.0, 9.0);
  const auto src = InMemorySource::from_matrix(x, y, 10);
  const auto ds = write_chunks(src, 4, tmp / "ds");
  ASSERT_EQ(ds.num_chunks(), 3u);
  EXPECT_EQ(ds.chunk_rows(), (std::vector<std::size_t>{4, 4, 2}));
  EXPECT_EQ(ds.num_records(), 10u);
  EXPECT_TRUE(ds.verify());
}

TEST(Dataset, RoundTripIsBitExact) {
  TempDir tmp;
  const RowMatrix x = random_rows(9, 5, 2);
  const Vector y = random_rows(9, 1, 3).col(0);
  const auto ds = write_chunks(InMemorySource::from_matrix(x, y, 4), 4, tmp / "ds");
  const auto reopened = ChunkedDataset::open(tmp / "ds");
  std::size_t r = 0;
  std::vector<double> buf;
  for (std::size_t c = 0; c < reopened.num_chunks(); ++c) {
    const Chunk ch = reopened.load_chunk(c);
    for (std::size_t i = 0; i < ch.size(); ++i, ++r) {
      const auto view = ch.record(i, buf);
      for (std::size_t j = 0; j < 5; ++j)
        EXPECT_EQ(view.data[j], static_cast<double>(static_cast<float>(x(r, j))));
      EXPECT_EQ(ch.targets()[i], y[static_cast<Eigen::Index>(r)]);
    }
  }
  EXPECT_EQ(r, 9u);
  EXPECT_EQ(reopened.content_hash(), ds.content_hash());
}

TEST(Dataset, RewriteGivesIdenticalHash) {
  TempDir tmp;
  const RowMatrix x = random_rows(20, 2, 4);
  const Vector y = Vector::Ones(20);
  const auto a = write_chunks(InMemorySource::from_matrix(x, y, 5), 6, tmp / "a");
  const auto b = write_chunks(InMemorySource::from_matrix(x, y, 3), 6, tmp / "b");
  EXPECT_EQ(a.content_hash(), b.content_hash());
}

TEST(Dataset, FlippedByteChangesHash) {
  TempDir tmp;
  const auto ds = write_chunks(InMemorySource::from_matrix(random_rows(8, 4, 5), Vector::Zero(8), 8), 8,
                               tmp / "ds");
  const auto path = ChunkedDataset::chunk_path(tmp / "ds", 0);
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(-9, std::ios::end);
  char c;
  f.get(c);
  f.seekp(-9, std::ios::end);
  f.put(static_cast<char>(c ^ 0x10));
  f.close();
  EXPECT_FALSE(ChunkedDataset::open(tmp / "ds").verify());
}

TEST(Dataset, ManifestFields) {
  TempDir tmp;
  const auto ds = write_chunks(InMemorySource::from_matrix(random_rows(3, 2, 6), Vector::Zero(3), 3), 2,
                               tmp / "ds", {{"source", "unit"}});
  const auto& m = ds.manifest();
  EXPECT_EQ(m.at("kind"), "fixed_vector");
  EXPECT_EQ(m.at("width"), "2");
  EXPECT_EQ(m.at("source"), "unit");
  EXPECT_EQ(m.at("rng"), std::string(kRngIdentity));
}

TEST(Dataset, MissingDirectoryIsIoError) {
  EXPECT_THROW(ChunkedDataset::open("/nonexistent/sorfgp/ds"), Error);
}

TEST(Dataset, VariableLengthRecords) {
  TempDir tmp;
  InMemorySource src(InputKind::Sequence, 3);
  Chunk ch(InputKind::Sequence, 3);
  ch.add(random_rows(5, 3, 1), 1.0);
  ch.add(random_rows(2, 3, 2), 2.0);
  ch.add(random_rows(7, 3, 3), 3.0);
  src.append(ch);
  const auto ds = write_chunks(src, 2, tmp / "seq");
  EXPECT_EQ(ds.num_chunks(), 2u);
  const Chunk back = ds.load_chunk(1);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back.record_rows(0), 7u);
  EXPECT_EQ(back.targets()[0], 3.0);
}

TEST(Encoders, OneHotSequence) {
  const RowMatrix e = encode_sequence_onehot("ACD", kAminoAlphabet);
  ASSERT_EQ(e.rows(), 3);
  ASSERT_EQ(e.cols(), 20);
  EXPECT_EQ(e.sum(), 3.0);
  EXPECT_EQ(e(0, 0), 1.0);
  EXPECT_EQ(e(1, 1), 1.0);
  EXPECT_EQ(e(2, 2), 1.0);
}

TEST(Encoders, HammingDistance) {
  const RowMatrix a = encode_sequence_onehot("ACDEFG", kAminoAlphabet);
  const RowMatrix b = encode_sequence_onehot("ACWEFY", kAminoAlphabet);
  EXPECT_EQ((a - b).squaredNorm(), 4.0);
}

TEST(Encoders, SequenceErrors) {
  EXPECT_THROW(encode_sequence_onehot("", kAminoAlphabet), ValidationError);
  try {
    encode_sequence_onehot("ACZ", kAminoAlphabet);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("position 2"), std::string::npos);
  }
}

TEST(Encoders, CarbonMonoxide) {
  MoleculeRecord co{{"C", "O"}, {{{0, 0, 0}}, {{1.2, 0, 0}}}, 0.0};
  const std::vector<std::string> elems{"H", "C", "N", "O"};
  const RowMatrix e = encode_molecule(co, elems, 15);
  ASSERT_EQ(e.cols(), 64);
  const double w = 1.0 / std::pow(1.2, 6);
  EXPECT_NEAR(w, 0.3349, 1e-4);
  EXPECT_EQ(e(0, 1), 1.0);
  EXPECT_NEAR(e(0, 4 + 3), w, 1e-15);
  EXPECT_EQ(e(1, 3), 1.0);
  EXPECT_NEAR(e(1, 4 + 1), w, 1e-15);
  EXPECT_EQ(e.row(0).sum(), 1.0 + w);
}

TEST(Encoders, SingleAtomHasNoNeighbors) {
  MoleculeRecord h{{"H"}, {{{1, 2, 3}}}, 0.0};
  const RowMatrix e = encode_molecule(h, {"H", "C"}, 3);
  EXPECT_EQ(e.rightCols(6).cwiseAbs().sum(), 0.0);
}

TEST(Encoders, CoincidentAtomsRejected) {
  MoleculeRecord m{{"H", "H"}, {{{0, 0, 0}}, {{0, 0, 0}}}, 0.0};
  EXPECT_THROW(encode_molecule(m, {"H"}, 2), ValidationError);
}

TEST(Encoders, EquidistantTieBreak) {
  // O and N at the same distance from C: N (lower element code) comes first.
  MoleculeRecord m{{"C", "O", "N"}, {{{0, 0, 0}}, {{1, 0, 0}}, {{-1, 0, 0}}}, 0.0};
  const RowMatrix e = encode_molecule(m, {"C", "N", "O"}, 2);
  EXPECT_EQ(e(0, 3 + 1), 1.0);
  EXPECT_EQ(e(0, 6 + 2), 1.0);
}

TEST(Encoders, TabularIngest) {
  TempDir tmp;
  {
    std::ofstream f(tmp / "t.csv");
    f << "a,b,y\n1,2,3\n4,5,6\n7,8,9\n";
  }
  const auto ds = ingest_tabular(tmp / "t.csv", "y", 2, tmp / "ds");
  EXPECT_EQ(ds.num_records(), 3u);
  EXPECT_EQ(ds.width(), 2u);
  const Chunk c = ds.load_chunk(1);
  EXPECT_EQ(c.targets()[0], 9.0);
  EXPECT_EQ(c.values()[1], 8.0f);
}

TEST(Encoders, TabularRejectsMissingValue) {
  TempDir tmp;
  {
    std::ofstream f(tmp / "t.csv");
    f << "1,2,3\n4,NaN,6\n";
  }
  try {
    ingest_tabular(tmp / "t.csv", "2", 2, tmp / "ds");
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row"), std::string::npos);
    EXPECT_NE(msg.find("column"), std::string::npos);
  }
}

TEST(Encoders, MissingFileIsValidationError) {
  TempDir tmp;
  EXPECT_THROW(ingest_tabular(tmp / "nope.csv", "y", 2, tmp / "ds"), ValidationError);
}

TEST(Encoders, SequencesAndXyz) {
  TempDir tmp;
  {
    std::ofstream f(tmp / "s.txt");
    f << "ACDE 1.5\nWY 2.0\n";
    std::ofstream g(tmp / "m.xyz");
    g << "2\n-1.25\nC 0 0 0\nO 1.2 0 0\n1\n0.5\nH 0 0 0\n";
  }
  const auto seqs = ingest_sequences(tmp / "s.txt", kAminoAlphabet, 8, tmp / "sd");
  EXPECT_EQ(seqs.kind(), InputKind::Sequence);
  EXPECT_EQ(seqs.load_chunk(0).record_rows(0), 4u);
  const auto mols = read_xyz(tmp / "m.xyz");
  ASSERT_EQ(mols.size(), 2u);
  EXPECT_EQ(mols[0].target, -1.25);
  const auto md = ingest_xyz(tmp / "m.xyz", {"H", "C", "O"}, 4, 8, tmp / "md");
  EXPECT_EQ(md.kind(), InputKind::Graph);
  EXPECT_EQ(md.width(), 15u);
}

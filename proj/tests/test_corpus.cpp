#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "iterlstm/core_math.hpp"
#include "iterlstm/corpus.hpp"

using namespace iterlstm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("iterlstm_corpus_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name, const std::string& body) const {
    fs::path p = path / name;
    std::ofstream out(p, std::ios::binary);
    out << body;
    return p.string();
  }
};

}  // namespace

TEST_CASE("word mode splits on whitespace and appends eos per line") {
  TempDir tmp;
  std::string path = tmp.file("t.txt", "a b\nc\n");
  auto toks = load_corpus(path, TokenMode::kWord);
  REQUIRE(toks.size() == 5);
  CHECK(toks[0] == "a");
  CHECK(toks[1] == "b");
  CHECK(toks[2] == Vocab::kEos);
  CHECK(toks[3] == "c");
  CHECK(toks[4] == Vocab::kEos);
}

TEST_CASE("word mode collapses repeated separators and a missing final newline") {
  TempDir tmp;
  auto toks = load_corpus(tmp.file("t.txt", "  a\t b  \nc"), TokenMode::kWord);
  REQUIRE(toks.size() == 5);
  CHECK(toks[0] == "a");
  CHECK(toks[1] == "b");
  CHECK(toks[2] == Vocab::kEos);
  CHECK(toks[3] == "c");
  CHECK(toks[4] == Vocab::kEos);
}

TEST_CASE("char mode emits one token per character with eos for newline") {
  TempDir tmp;
  auto toks = load_corpus(tmp.file("t.txt", "ab\nz\n"), TokenMode::kChar);
  REQUIRE(toks.size() == 5);
  CHECK(toks[0] == "a");
  CHECK(toks[1] == "b");
  CHECK(toks[2] == Vocab::kEos);
  CHECK(toks[3] == "z");
  CHECK(toks[4] == Vocab::kEos);
}

TEST_CASE("carriage returns are stripped in both modes") {
  TempDir tmp;
  std::string path = tmp.file("t.txt", "a b\r\nc\r\n");
  auto words = load_corpus(path, TokenMode::kWord);
  REQUIRE(words.size() == 5);
  CHECK(words[2] == Vocab::kEos);
  auto chars = load_corpus(path, TokenMode::kChar);
  REQUIRE(chars.size() == 6);
  CHECK(chars[0] == "a");
  CHECK(chars[1] == " ");
  CHECK(chars[2] == "b");
  CHECK(chars[3] == Vocab::kEos);
  CHECK(chars[4] == "c");
  CHECK(chars[5] == Vocab::kEos);
}

TEST_CASE("unreadable and empty corpora are rejected with the path named") {
  TempDir tmp;
  std::string missing = (tmp.path / "absent.txt").string();
  CHECK_THROWS_WITH_AS(load_corpus(missing, TokenMode::kWord),
                       doctest::Contains(missing.c_str()), ConfigError);
  std::string empty = tmp.file("empty.txt", "");
  CHECK_THROWS_WITH_AS(load_corpus(empty, TokenMode::kChar),
                       doctest::Contains(empty.c_str()), ConfigError);
}

TEST_CASE("vocabulary ids are dense, frequency-ordered and include specials") {
  std::vector<std::string> toks = {"b", "a", "b", "c", "a", "b", Vocab::kEos};
  Vocab v = Vocab::build(toks);
  // b three times, a twice, c once, plus the forced specials.
  CHECK(v.size() == 5);
  CHECK(v.lookup("b") == 0);
  CHECK(v.lookup("a") == 1);
  for (std::size_t id = 0; id < v.size(); ++id)
    CHECK(v.lookup(v.id_to_token[id]) == id);
  CHECK(v.token_to_id.count(Vocab::kEos) == 1);
  CHECK(v.token_to_id.count(Vocab::kUnk) == 1);
  CHECK(v.eos_id == v.lookup(Vocab::kEos));
  // Unknown tokens fall back to <unk>.
  CHECK(v.lookup("never-seen") == v.unk_id);
}

TEST_CASE("vocabulary ties break lexicographically") {
  std::vector<std::string> toks = {"z", "m", "a"};
  Vocab v = Vocab::build(toks);
  CHECK(v.lookup("a") < v.lookup("m"));
  CHECK(v.lookup("m") < v.lookup("z"));
}

TEST_CASE("encode maps tokens through the vocabulary") {
  std::vector<std::string> toks = {"a", "b", "a"};
  Vocab v = Vocab::build(toks);
  auto ids = encode(v, {"a", "b", "mystery"});
  REQUIRE(ids.size() == 3);
  CHECK(ids[0] == v.lookup("a"));
  CHECK(ids[1] == v.lookup("b"));
  CHECK(ids[2] == v.unk_id);
}

TEST_CASE("batchify splits the stream into contiguous lanes") {
  std::vector<std::size_t> stream = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  BatchedCorpus b = batchify(stream, 2, 2);
  CHECK(b.batch_size == 2);
  CHECK(b.stream_length == 5);
  // Lane 0 holds 0..4, lane 1 holds 5..9.
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(b.id(0, t) == t);
    CHECK(b.id(1, t) == 5 + t);
  }
  // Windows of unroll 2: x = [[0,1],[5,6]], y = [[1,2],[6,7]].
  REQUIRE(b.window_count(2) == 2);
  CHECK(b.id(0, 0) == 0);
  CHECK(b.id(0, 1) == 1);
  CHECK(b.id(0, 2) == 2);
  CHECK(b.id(1, 0) == 5);
  CHECK(b.id(1, 1) == 6);
  CHECK(b.id(1, 2) == 7);
}

TEST_CASE("batch size one reproduces the stream minus the remainder") {
  std::vector<std::size_t> stream = {4, 2, 7, 1, 9, 3, 8};
  BatchedCorpus b = batchify(stream, 1, 3);
  CHECK(b.stream_length == 7);
  for (std::size_t t = 0; t < 7; ++t) CHECK(b.id(0, t) == stream[t]);
  CHECK(b.window_count(3) == 2);
}

TEST_CASE("every target is the stream successor of its input") {
  Rng rng(307);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t len = 10 + rng.uniform_index(200);
    std::size_t batch = 1 + rng.uniform_index(5);
    std::size_t unroll = 1 + rng.uniform_index(7);
    std::vector<std::size_t> stream(len);
    for (std::size_t k = 0; k < len; ++k) stream[k] = k;
    if (len / batch < unroll + 1) continue;

    BatchedCorpus b = batchify(stream, batch, unroll);
    CHECK(b.stream_length == len / batch);
    // Lanes are contiguous stream segments, so position maps to identity.
    for (std::size_t lane = 0; lane < batch; ++lane)
      for (std::size_t t = 0; t + 1 < b.stream_length; ++t)
        CHECK(b.id(lane, t) + 1 == b.id(lane, t + 1));
    // All full windows fit inside the batched region.
    CHECK(b.window_count(unroll) * unroll <= b.stream_length - 1);
    CHECK(b.stream_length * batch <= len);
  }
}

TEST_CASE("streams too short to window are rejected") {
  std::vector<std::size_t> stream = {1, 2, 3, 4};
  CHECK_THROWS_AS(batchify(stream, 2, 2), ConfigError);
  CHECK_THROWS_AS(batchify(stream, 4, 1), ConfigError);
  CHECK_NOTHROW(batchify(stream, 1, 2));
}

TEST_CASE("corpus sets load all three splits with a shared vocabulary") {
  TempDir tmp;
  tmp.file("train.txt", "a b c\na b\n");
  tmp.file("valid.txt", "b c\n");
  tmp.file("test.txt", "c d\n");
  CorpusSet set = load_corpus_set(tmp.path.string(), TokenMode::kWord);
  CHECK(set.vocab.token_to_id.count("a") == 1);
  CHECK(set.vocab.token_to_id.count("d") == 0);  // test-only token
  REQUIRE(set.test.size() == 3);
  CHECK(set.test[0] == set.vocab.lookup("c"));
  CHECK(set.test[1] == set.vocab.unk_id);
  CHECK(set.test[2] == set.vocab.eos_id);
  CHECK(set.train.size() == 7);
}

TEST_CASE("corpus sets fall back to the ptb naming scheme") {
  TempDir tmp;
  tmp.file("ptb.train.txt", "x y\n");
  tmp.file("ptb.valid.txt", "y\n");
  tmp.file("ptb.test.txt", "x\n");
  CorpusSet set = load_corpus_set(tmp.path.string(), TokenMode::kWord);
  CHECK(set.train.size() == 3);
  CHECK(set.valid.size() == 2);
}

TEST_CASE("missing splits name the offending file") {
  TempDir tmp;
  tmp.file("train.txt", "a\n");
  tmp.file("valid.txt", "a\n");
  CHECK_THROWS_WITH_AS(load_corpus_set(tmp.path.string(), TokenMode::kWord),
                       doctest::Contains("test"), ConfigError);
}

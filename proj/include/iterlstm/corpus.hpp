#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "iterlstm/core_math.hpp"

namespace iterlstm {

enum class TokenMode { kWord, kChar };

// Token ids dense from 0; <eos> and <unk> always present.
struct Vocab {
  static constexpr const char* kEos = "<eos>";
  static constexpr const char* kUnk = "<unk>";

  std::unordered_map<std::string, std::size_t> token_to_id;
  std::vector<std::string> id_to_token;
  std::size_t eos_id = 0;
  std::size_t unk_id = 0;

  std::size_t size() const { return id_to_token.size(); }
  std::size_t lookup(const std::string& tok) const;

  // Ids assigned by descending frequency, ties broken lexicographically.
  static Vocab build(const std::vector<std::string>& tokens);
};

// Word mode splits on whitespace and appends <eos> per line; char mode emits
// one token per character with newline mapped to <eos>.
std::vector<std::string> load_corpus(const std::string& path, TokenMode mode);

std::vector<std::size_t> encode(const Vocab& vocab,
                                const std::vector<std::string>& tokens);

// Token stream cut into batch_size contiguous segments; unroll windows of
// length u yield (x, y) with y the one-step-shifted targets. Remainder
// tokens are dropped.
struct BatchedCorpus {
  std::size_t batch_size = 0;
  std::size_t stream_length = 0;  // per-segment length
  std::vector<std::size_t> ids;   // batch_size x stream_length, row-major

  std::size_t id(std::size_t lane, std::size_t t) const {
    return ids[lane * stream_length + t];
  }
  std::size_t window_count(std::size_t unroll) const {
    return (stream_length - 1) / unroll;
  }
};

BatchedCorpus batchify(const std::vector<std::size_t>& stream,
                       std::size_t batch_size, std::size_t unroll_length);

// train/valid/test splits sharing the training-set vocabulary. Looks for
// {train,valid,test}.txt in dir, falling back to the ptb.*.txt naming.
struct CorpusSet {
  Vocab vocab;
  std::vector<std::size_t> train, valid, test;
};

CorpusSet load_corpus_set(const std::string& dir, TokenMode mode);

}  // namespace iterlstm

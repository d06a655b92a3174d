#include "iterlstm/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace iterlstm {

std::size_t Vocab::lookup(const std::string& tok) const {
  auto it = token_to_id.find(tok);
  return it == token_to_id.end() ? unk_id : it->second;
}

Vocab Vocab::build(const std::vector<std::string>& tokens) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& tok : tokens) ++counts[tok];
  counts.emplace(kEos, 0);
  counts.emplace(kUnk, 0);

  std::vector<std::pair<std::string, std::size_t>> order(counts.begin(),
                                                         counts.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  v.id_to_token.reserve(order.size());
  for (const auto& [tok, count] : order) {
    (void)count;
    v.token_to_id.emplace(tok, v.id_to_token.size());
    v.id_to_token.push_back(tok);
  }
  v.eos_id = v.token_to_id.at(kEos);
  v.unk_id = v.token_to_id.at(kUnk);
  return v;
}

std::vector<std::string> load_corpus(const std::string& path, TokenMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read corpus file: " + path);

  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (mode == TokenMode::kWord) {
      std::istringstream words(line);
      std::string w;
      while (words >> w) tokens.push_back(w);
      tokens.emplace_back(Vocab::kEos);
    } else {
      for (char ch : line) tokens.emplace_back(1, ch);
      tokens.emplace_back(Vocab::kEos);
    }
  }
  if (tokens.empty()) throw ConfigError("empty corpus: " + path);
  return tokens;
}

std::vector<std::size_t> encode(const Vocab& vocab,
                                const std::vector<std::string>& tokens) {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) ids.push_back(vocab.lookup(tok));
  return ids;
}

BatchedCorpus batchify(const std::vector<std::size_t>& stream,
                       std::size_t batch_size, std::size_t unroll_length) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (unroll_length == 0) throw ConfigError("unroll_length must be positive");
  if (stream.size() < batch_size * (unroll_length + 1))
    throw ConfigError("stream too short for batch_size x (unroll_length + 1)");

  BatchedCorpus out;
  out.batch_size = batch_size;
  out.stream_length = stream.size() / batch_size;
  out.ids.resize(batch_size * out.stream_length);
  for (std::size_t b = 0; b < batch_size; ++b)
    for (std::size_t t = 0; t < out.stream_length; ++t)
      out.ids[b * out.stream_length + t] = stream[b * out.stream_length + t];
  return out;
}

namespace {

std::string find_split(const std::string& dir, const std::string& split) {
  namespace fs = std::filesystem;
  const std::string candidates[] = {dir + "/" + split + ".txt",
                                    dir + "/ptb." + split + ".txt"};
  for (const auto& path : candidates)
    if (fs::exists(path)) return path;
  throw ConfigError("missing corpus split '" + split + "' in " + dir);
}

}  // namespace

CorpusSet load_corpus_set(const std::string& dir, TokenMode mode) {
  auto train_tokens = load_corpus(find_split(dir, "train"), mode);
  auto valid_tokens = load_corpus(find_split(dir, "valid"), mode);
  auto test_tokens = load_corpus(find_split(dir, "test"), mode);

  CorpusSet set;
  set.vocab = Vocab::build(train_tokens);
  set.train = encode(set.vocab, train_tokens);
  set.valid = encode(set.vocab, valid_tokens);
  set.test = encode(set.vocab, test_tokens);
  return set;
}

}  // namespace iterlstm

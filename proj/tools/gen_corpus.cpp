// Deterministic pseudo-English corpus generator for desk-scale language
// modeling runs. A seeded word inventory with Zipf-like frequencies is
// sampled through a per-word preferred-successor table, so the character
// stream carries both within-word spelling structure and cross-word
// context that rewards extra per-step computation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "iterlstm/core_math.hpp"

namespace {

using iterlstm::Rng;

const char* kOnsets[] = {"b",  "d",  "f",  "g",  "h",  "k",  "l",  "m",
                         "n",  "p",  "r",  "s",  "t",  "v",  "w",  "z",
                         "br", "ch", "cl", "dr", "fl", "gr", "pl", "pr",
                         "sh", "sl", "sp", "st", "th", "tr"};
const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ea", "ee", "io", "ou"};
const char* kCodas[] = {"",   "",   "",   "b",  "d",  "g",  "k",
                        "l",  "m",  "n",  "p",  "r",  "s",  "t",
                        "ck", "nd", "ng", "nk", "nt", "rd", "st"};

template <std::size_t N>
const char* pick(const char* (&table)[N], Rng& rng) {
  return table[rng.uniform_index(N)];
}

// Word-shape and word-order hardness knobs. Longer words and a sharper
// successor distribution make the next character a deeper function of the
// carried context, which is the regime where per-step refinement pays.
// order = 2 keys the successor choice on the previous word pair; the pair
// table is derived by hashing, so memory stays flat in vocab squared.
struct Hardness {
  std::size_t syllables_min = 1, syllables_max = 3;
  double successor_prob = 0.55;
  std::size_t successors = 8;
  std::size_t order = 1;
};

std::string make_word(const Hardness& hard, Rng& rng) {
  const std::size_t span = hard.syllables_max - hard.syllables_min + 1;
  const std::size_t syllables = hard.syllables_min + rng.uniform_index(span);
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w += pick(kOnsets, rng);
    w += pick(kVowels, rng);
    if (s + 1 == syllables || rng.uniform(0.0, 1.0) < 0.3) w += pick(kCodas, rng);
  }
  return w;
}

struct Language {
  std::vector<std::string> words;
  std::vector<double> unigram_cdf;
  std::vector<std::vector<std::size_t>> successors;  // preferred next words
  std::uint64_t pair_salt = 0;                       // order-2 context hashing
};

Language build_language(std::size_t vocab, const Hardness& hard, Rng& rng) {
  Language lang;
  std::set<std::string> seen;
  while (lang.words.size() < vocab) {
    std::string w = make_word(hard, rng);
    if (seen.insert(w).second) lang.words.push_back(std::move(w));
  }

  double total = 0.0;
  lang.unigram_cdf.reserve(vocab);
  for (std::size_t i = 0; i < vocab; ++i) {
    total += 1.0 / std::pow(double(i + 2), 0.9);
    lang.unigram_cdf.push_back(total);
  }
  for (auto& c : lang.unigram_cdf) c /= total;

  lang.successors.resize(vocab);
  for (std::size_t i = 0; i < vocab; ++i)
    for (std::size_t k = 0; k < hard.successors; ++k)
      lang.successors[i].push_back(rng.uniform_index(vocab));
  return lang;
}

std::size_t draw_unigram(const Language& lang, Rng& rng) {
  const double u = rng.uniform(0.0, 1.0);
  std::size_t lo = 0, hi = lang.unigram_cdf.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (lang.unigram_cdf[mid] < u)
      lo = mid + 1;
    else
      hi = mid;
  }
  return lo;
}

std::size_t draw_next(const Language& lang, const Hardness& hard,
                      std::size_t prev, Rng& rng) {
  if (rng.uniform(0.0, 1.0) < hard.successor_prob)
    return lang.successors[prev][rng.uniform_index(lang.successors[prev].size())];
  return draw_unigram(lang, rng);
}

// The successor set of a word pair is a pure function of (prev2, prev), so
// the full vocab^2 table never materializes. Candidate slot k of a context
// maps to a word through a one-shot derived stream.
std::size_t draw_next_pair(const Language& lang, const Hardness& hard,
                           std::size_t prev2, std::size_t prev, Rng& rng) {
  if (rng.uniform(0.0, 1.0) >= hard.successor_prob)
    return draw_unigram(lang, rng);
  const std::uint64_t context = prev2 * lang.words.size() + prev;
  const std::size_t slot = rng.uniform_index(hard.successors);
  Rng pick_rng(Rng::derive(lang.pair_salt, context * hard.successors + slot));
  return pick_rng.uniform_index(lang.words.size());
}

void write_split(const std::string& path, const Language& lang,
                 const Hardness& hard, std::size_t target_bytes, Rng& rng) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    std::cerr << "cannot write " << path << std::endl;
    std::exit(1);
  }
  std::size_t written = 0;
  while (written < target_bytes) {
    const std::size_t len = 4 + rng.uniform_index(11);
    std::string line;
    std::size_t prev2 = 0;
    std::size_t word = draw_unigram(lang, rng);
    line += lang.words[word];
    for (std::size_t k = 1; k < len; ++k) {
      std::size_t next;
      if (hard.order >= 2 && k >= 2)
        next = draw_next_pair(lang, hard, prev2, word, rng);
      else
        next = draw_next(lang, hard, word, rng);
      prev2 = word;
      word = next;
      line += ' ';
      line += lang.words[word];
    }
    line += '\n';
    out << line;
    written += line.size();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic synthetic corpus generator"};
  std::string out_dir = "corpus";
  std::uint64_t seed = 12345;
  std::size_t vocab = 600;
  std::size_t train_bytes = 1000000, valid_bytes = 50000, test_bytes = 50000;
  Hardness hard;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--vocab", vocab, "word inventory size");
  app.add_option("--train-bytes", train_bytes, "train split size");
  app.add_option("--valid-bytes", valid_bytes, "valid split size");
  app.add_option("--test-bytes", test_bytes, "test split size");
  app.add_option("--syllables-min", hard.syllables_min, "shortest word length");
  app.add_option("--syllables-max", hard.syllables_max, "longest word length");
  app.add_option("--successor-prob", hard.successor_prob,
                 "probability the next word comes from the successor table");
  app.add_option("--successors", hard.successors, "successor candidates per word");
  app.add_option("--order", hard.order, "successor context length (1 or 2)");
  CLI11_PARSE(app, argc, argv);
  if (hard.syllables_min < 1 || hard.syllables_max < hard.syllables_min ||
      hard.successor_prob < 0.0 || hard.successor_prob > 1.0 ||
      hard.successors < 1 || hard.order < 1 || hard.order > 2) {
    std::cerr << "invalid hardness settings" << std::endl;
    return 2;
  }

  std::filesystem::create_directories(out_dir);
  Rng lang_rng(Rng::derive(seed, 0));
  Language lang = build_language(vocab, hard, lang_rng);
  lang.pair_salt = Rng::derive(seed, 4);

  Rng train_rng(Rng::derive(seed, 1));
  Rng valid_rng(Rng::derive(seed, 2));
  Rng test_rng(Rng::derive(seed, 3));
  write_split(out_dir + "/train.txt", lang, hard, train_bytes, train_rng);
  write_split(out_dir + "/valid.txt", lang, hard, valid_bytes, valid_rng);
  write_split(out_dir + "/test.txt", lang, hard, test_bytes, test_rng);
  std::cout << "wrote " << out_dir << "/{train,valid,test}.txt" << std::endl;
  return 0;
}

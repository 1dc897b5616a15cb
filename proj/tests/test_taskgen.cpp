#include <doctest.h>

#include <set>

#include "probelab/io.hpp"
#include "probelab/response_eval.hpp"
#include "probelab/taskgen.hpp"

using namespace probelab;

namespace {
const TaskGenConfig kGen{32};

// Test-local DP edit distance, independent of the library implementation.
size_t dp_distance(const std::string& a, const std::string& b) {
  std::vector<std::vector<size_t>> d(a.size() + 1,
                                     std::vector<size_t>(b.size() + 1, 0));
  for (size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (size_t i = 1; i <= a.size(); ++i)
    for (size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
  return d[a.size()][b.size()];
}
}  // namespace

TEST_CASE("binary datasets are exactly balanced at even n") {
  for (TaskKind k : binary_kinds()) {
    const Dataset ds = generate_dataset(k, 100, 7, kGen);
    int ones = 0;
    for (const auto& s : ds.samples) ones += s.label;
    CHECK(ones == 50);
  }
}

TEST_CASE("odd n keeps the imbalance within one") {
  const Dataset ds = generate_dataset(TaskKind::figure, 101, 9, kGen);
  int ones = 0;
  for (const auto& s : ds.samples) ones += s.label;
  CHECK(std::abs(2 * ones - 101) <= 1);
}

TEST_CASE("n below 2 is rejected") {
  CHECK_THROWS_AS(generate_dataset(TaskKind::visual_attr, 1, 1, kGen), ConfigError);
}

TEST_CASE("same seed regenerates byte-identical datasets") {
  const Dataset a = generate_dataset(TaskKind::structure, 40, 123, kGen);
  const Dataset b = generate_dataset(TaskKind::structure, 40, 123, kGen);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a.samples[i].question == b.samples[i].question);
    CHECK(a.samples[i].label == b.samples[i].label);
    CHECK(a.samples[i].image.px == b.samples[i].image.px);
  }
}

TEST_CASE("doc_qa samples carry gold answers, binary ones labels") {
  const Dataset qa = generate_dataset(TaskKind::doc_qa, 20, 3, kGen);
  for (const auto& s : qa.samples) {
    CHECK(s.label == -1);
    CHECK(!s.gold_answer.empty());
  }
  const Dataset bin = generate_dataset(TaskKind::word_rec, 20, 3, kGen);
  for (const auto& s : bin.samples) {
    CHECK((s.label == 0 || s.label == 1));
    CHECK(s.gold_answer.empty());
  }
}

TEST_CASE("red marker appears exactly on one structure region and nowhere else") {
  const Dataset ds = generate_dataset(TaskKind::structure, 30, 17, kGen);
  for (const auto& s : ds.samples) {
    // Count rows that contain pure red; they must form one contiguous frame.
    int red_px = 0;
    std::set<int> red_rows;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const Rgb c = s.image.get(x, y);
        if (c == Rgb{1.0f, 0.0f, 0.0f}) {
          ++red_px;
          red_rows.insert(y);
        }
      }
    CHECK(red_px > 0);
    // Frame = two full horizontal edges plus vertical sides.
    REQUIRE(!red_rows.empty());
    const int y0 = *red_rows.begin();
    const int y1 = *red_rows.rbegin();
    for (int x = 0; x < 32; ++x) {
      CHECK(s.image.get(x, y0) == Rgb{1.0f, 0.0f, 0.0f});
      CHECK(s.image.get(x, y1) == Rgb{1.0f, 0.0f, 0.0f});
    }
    CHECK(red_px == 2 * 32 + 2 * std::max(0, y1 - y0 - 1));
  }
}

TEST_CASE("figure labels follow bar-height order") {
  const Dataset ds = generate_dataset(TaskKind::figure, 60, 5, kGen);
  for (const auto& s : ds.samples) {
    const bool is_min = s.question.find("minimum") != std::string::npos;
    const bool is_max = s.question.find("maximum") != std::string::npos;
    CHECK(is_min != is_max);
  }
}

TEST_CASE("word_rec: positives show the queried word, negatives are one edit away") {
  const Dataset ds = generate_dataset(TaskKind::word_rec, 200, 31, kGen);
  for (const auto& s : ds.samples) {
    const size_t q0 = s.question.find('\'');
    const size_t q1 = s.question.rfind('\'');
    REQUIRE(q0 != std::string::npos);
    const std::string asked = s.question.substr(q0 + 1, q1 - q0 - 1);
    CHECK(asked.size() >= 2);
  }
}

TEST_CASE("perturb_word always changes the word by one edit operation") {
  Rng rng(77);
  for (int i = 0; i < 10000; ++i) {
    const size_t len = 3 + rng.uniform_int(6);
    std::string w(len, 'a');
    for (char& c : w) c = static_cast<char>('a' + rng.uniform_int(26));
    const std::string out = perturb_word(w, rng.next_u64());
    CHECK(out != w);
    CHECK(out.size() >= 2);
    const size_t dist = dp_distance(w, out);
    CHECK(dist >= 1);
    CHECK(dist <= 2);  // adjacent transposition costs 2 plain edits
  }
}

TEST_CASE("perturb_word can produce the single-substitution class") {
  // 'spencerian' -> 'spencerlan' is one substitution; verify substitutions
  // at distance exactly 1 occur.
  bool saw_distance_one = false;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const std::string out = perturb_word("spencerian", seed);
    if (out.size() == 10 && dp_distance("spencerian", out) == 1)
      saw_distance_one = true;
  }
  CHECK(saw_distance_one);
}

TEST_CASE("perturb_word rejects short words") {
  CHECK_THROWS_AS(perturb_word("ab", 1), ContractError);
}

TEST_CASE("train/test splits are disjoint by hash") {
  const Dataset train = generate_dataset(TaskKind::visual_attr, 300, derive_seed(1, "visual_attr-train"), kGen);
  const Dataset test = generate_dataset(TaskKind::visual_attr, 300, derive_seed(1, "visual_attr-test"), kGen);
  std::set<uint64_t> train_hashes;
  for (const auto& s : train.samples) {
    const auto bytes = s.image.to_bytes();
    train_hashes.insert(fnv1a64(bytes.data(), bytes.size(),
                                fnv1a64(s.question.data(), s.question.size())));
  }
  for (const auto& s : test.samples) {
    const auto bytes = s.image.to_bytes();
    CHECK(train_hashes.count(fnv1a64(bytes.data(), bytes.size(),
                                     fnv1a64(s.question.data(), s.question.size()))) == 0);
  }
}

TEST_CASE("filter_hard keeps misanswered samples and rebalances") {
  const Dataset ds = generate_dataset(TaskKind::visual_attr, 100, 5, kGen);
  SUBCASE("always-correct model leaves nothing") {
    CHECK_THROWS_AS(
        filter_hard(ds, [](const TaskSample& s) { return s.label; }, nullptr),
        FilterError);
  }
  SUBCASE("always answering 1 retains about half, balanced") {
    FilterStats stats;
    const Dataset hard = filter_hard(ds, [](const TaskSample&) { return 1; }, &stats);
    CHECK(stats.incorrect == 50);  // every true-0 sample is wrong
    int ones = 0;
    for (const auto& s : hard.samples) ones += s.label;
    CHECK(std::abs(2 * ones - static_cast<int>(hard.size())) <= 1);
    CHECK(stats.retention_rate == doctest::Approx(0.5));
  }
  SUBCASE("unparseable counts as incorrect") {
    FilterStats stats;
    const Dataset hard = filter_hard(ds, [](const TaskSample&) { return -1; }, &stats);
    CHECK(stats.incorrect == 100);
    CHECK(std::abs(static_cast<int>(hard.size()) - 100) <= 1);
  }
}

TEST_CASE("dataset file round-trip") {
  const Dataset ds = generate_dataset(TaskKind::word_rec, 25, 77, kGen);
  const auto path = std::filesystem::temp_directory_path() / "pl_ds.tsv";
  write_dataset(ds, path.string());
  const Dataset back = read_dataset(path.string());
  REQUIRE(back.size() == ds.size());
  CHECK(back.kind == ds.kind);
  for (size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.samples[i].question == ds.samples[i].question);
    CHECK(back.samples[i].label == ds.samples[i].label);
  }
  // Re-writing the parsed dataset reproduces the file byte-for-byte.
  const auto path2 = std::filesystem::temp_directory_path() / "pl_ds2.tsv";
  write_dataset(back, path2.string());
  CHECK(read_binary_file(path) == read_binary_file(path2));
}

TEST_CASE("glyphs are pairwise distinct") {
  const GlyphFont& font = glyph_font();
  for (char a = 'a'; a <= 'z'; ++a)
    for (char b = static_cast<char>(a + 1); b <= 'z'; ++b)
      CHECK(font.bits(a) != font.bits(b));
}

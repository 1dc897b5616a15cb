#include <doctest.h>

#include <cmath>

#include "probelab/response_eval.hpp"
#include "support/gap_fixture.hpp"

using namespace probelab;
using namespace probelab::testing;

TEST_CASE("prompt template is byte-exact") {
  CHECK(format_prompt("Is the background black?") ==
        "Is the background black? If yes, answer 1; if no, answer 0. Please "
        "answer with numbers only.");
  CHECK_THROWS_AS(format_prompt(""), ContractError);
}

TEST_CASE("prompt suffix is identical across questions") {
  const std::string a = format_prompt("Is x?");
  const std::string b = format_prompt("Is the red boxed region a table?");
  const std::string suffix =
      " If yes, answer 1; if no, answer 0. Please answer with numbers only.";
  CHECK(a.substr(a.size() - suffix.size()) == suffix);
  CHECK(b.substr(b.size() - suffix.size()) == suffix);
}

TEST_CASE("label extraction") {
  CHECK(extract_label("1") == 1);
  CHECK(extract_label("0") == 0);
  CHECK(extract_label("Yes.") == 1);
  CHECK(extract_label("The answer is 0") == 0);
  CHECK(extract_label("no") == 0);
  CHECK(extract_label("NO way") == 0);
  CHECK(extract_label("0 or 1") == -1);
  CHECK(extract_label("") == -1);
  CHECK(extract_label("maybe") == -1);
  CHECK(extract_label("10") == -1);    // token boundary: "10" is neither
  CHECK(extract_label("100") == -1);
  CHECK(extract_label("nope") == -1);  // "no" must stand alone
  CHECK(extract_label("yes yes 1") == 1);
  CHECK(extract_label("  1  ") == 1);  // idempotent under padding
  CHECK(extract_label("\t1\n") == 1);
}

TEST_CASE("gap arithmetic and argmax layer") {
  LayerAccuracyCurve curve;
  curve.n_layers = 3;
  curve.acc = {
      0.5, 0.5, 0.5, 0.60,  // layer 0: image,text,all,last
      0.5, 0.5, 0.5, 0.91,  // layer 1
      0.5, 0.5, 0.5, 0.91,  // layer 2 (tie -> keep layer 1)
  };
  const GapReport r = gap(curve, 0.67, TokenType::last_token);
  CHECK(r.max_lp == doctest::Approx(0.91));
  CHECK(r.argmax_layer == 1);
  CHECK(r.gap == doctest::Approx(0.91 - 0.67));
  CHECK(gap(curve, 0.91).gap == doctest::Approx(0.0));
}

TEST_CASE("published gap table reproduces within 0.01") {
  for (const GapFixtureRow& row : gap_fixture()) {
    const double recomputed = row.lp - row.resp;
    CHECK_MESSAGE(std::abs(recomputed - row.printed_gap) < 0.01 + 1e-9, row.task,
                  "/", row.config);
  }
}

TEST_CASE("normalized Levenshtein") {
  CHECK(normalized_lev("same", "same") == doctest::Approx(1.0));
  CHECK(normalized_lev("", "") == doctest::Approx(1.0));
  CHECK(normalized_lev("spencerlan", "spencerian") == doctest::Approx(0.9));
  CHECK(normalized_lev("abc", "xyz") == doctest::Approx(0.0));
  CHECK(normalized_lev("ab", "") == doctest::Approx(0.0));
  CHECK(edit_distance("kitten", "sitting") == 3);
}

TEST_CASE("anls fixtures") {
  CHECK(anls({"a", "bb"}, {{"a"}, {"bb"}}, 0.5) == doctest::Approx(1.0));
  CHECK(anls({"spencerlan"}, {{"spencerian"}}, 0.5) == doctest::Approx(0.9));
  // Below the threshold the item scores zero.
  CHECK(anls({"abcde"}, {{"vwxyz"}}, 0.5) == doctest::Approx(0.0));
  // Normalization: case and surrounding whitespace are ignored.
  CHECK(anls({"  WoRd "}, {{"word"}}, 0.5) == doctest::Approx(1.0));
  // Multiple golds: best one counts.
  CHECK(anls({"cat"}, {{"dog", "cat"}}, 0.5) == doctest::Approx(1.0));
  CHECK_THROWS_AS(anls({"a"}, {}, 0.5), ContractError);
  CHECK_THROWS_AS(anls({"a"}, {{"a"}}, 1.5), ContractError);
}

TEST_CASE("anls mean over a mixed 10-item set matches the hand-computed value") {
  const std::vector<std::string> preds = {"alpha", "beta",  "gamma", "delt",
                                          "epsilon", "zzzz", "eta",   "thita",
                                          "iota",  "kapa"};
  const std::vector<std::vector<std::string>> golds = {
      {"alpha"}, {"beta"}, {"gamma"}, {"delta"}, {"epsilon"},
      {"zeta"},  {"eta"},  {"theta"}, {"iota"},  {"kappa"}};
  // Per-item NLS from the DP oracle:
  //   exact matches -> 1.0 (alpha, beta, gamma, epsilon, eta, iota)
  //   delt/delta    -> 1 - 1/5 = 0.8
  //   zzzz/zeta     -> 1 - 3/4 = 0.25 -> below tau 0.5 -> 0
  //   thita/theta   -> 1 - 1/5 = 0.8
  //   kapa/kappa    -> 1 - 1/5 = 0.8
  const double expected = (6 * 1.0 + 0.8 + 0.0 + 0.8 + 0.8) / 10.0;
  CHECK(anls(preds, golds, 0.5) == doctest::Approx(expected));
}

TEST_CASE("responses csv shape") {
  std::vector<ResponseRecord> recs(2);
  recs[0] = {"q1?", "p", "1", 1, 1, true};
  recs[1] = {"q2, with comma?", "p", "0 or 1", -1, 0, false};
  const std::string csv = responses_to_csv(recs);
  CHECK(csv.find("index,question,generated,extracted,label,correct\n") == 0);
  CHECK(csv.find("unparseable") != std::string::npos);
  CHECK(csv.find("\"q2, with comma?\"") != std::string::npos);
}

#pragma once

#include "probelab/probing.hpp"

namespace probelab {

// `<question> If yes, answer 1; if no, answer 0. Please answer with numbers
// only.` — byte-exact, single space after the question.
std::string format_prompt(const std::string& question);

// -1 = unparseable. Case-insensitive token-boundary scan: a maximal
// alphanumeric run equal to "1"/"yes" votes 1, "0"/"no" votes 0; exactly one
// polarity present decides, otherwise unparseable ("10" matches neither).
int extract_label(std::string_view response);

struct ResponseRecord {
  std::string question;
  std::string prompt;
  std::string generated;
  int extracted = -1;
  int label = -1;
  bool correct = false;
};

struct ResponseEval {
  std::vector<ResponseRecord> records;
  double a_resp = 0.0;
  double unparseable_rate = 0.0;
};

// Greedy answers over a binary dataset with the fixed prompt template;
// unparseable responses score incorrect.
template <typename T>
ResponseEval evaluate_responses(const Model<T>& model, const Dataset& ds,
                                const Tokenizer& tok, int max_new = 4,
                                int workers = 0);

template <typename T>
double response_accuracy(const Model<T>& model, const Dataset& ds,
                         const Tokenizer& tok, int max_new = 4, int workers = 0);

struct GapReport {
  double a_resp = 0.0;
  double max_lp = 0.0;
  size_t argmax_layer = 0;
  TokenType token_type = TokenType::last_token;
  double gap = 0.0;  // max_lp - a_resp, exactly
};

// Max over layers of the curve at the given token type, minus a_resp.
// Ties pick the smallest layer index.
GapReport gap(const LayerAccuracyCurve& curve, double a_resp,
              TokenType ttype = TokenType::last_token);

// 1 - editDistance(s, t) / max(|s|, |t|); 1.0 when both are empty.
double normalized_lev(const std::string& s, const std::string& t);

size_t edit_distance(const std::string& s, const std::string& t);

// Mean over items of (best normalized similarity against the gold set,
// zeroed below tau). Both sides are lowercased and whitespace-trimmed.
double anls(const std::vector<std::string>& predictions,
            const std::vector<std::vector<std::string>>& golds, double tau = 0.5);

// CSV: index,question,generated,extracted,label,correct
std::string responses_to_csv(const std::vector<ResponseRecord>& records);

extern template ResponseEval evaluate_responses<float>(const Model<float>&,
                                                       const Dataset&, const Tokenizer&,
                                                       int, int);
extern template ResponseEval evaluate_responses<double>(const Model<double>&,
                                                        const Dataset&, const Tokenizer&,
                                                        int, int);

}  // namespace probelab

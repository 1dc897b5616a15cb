#include "probelab/response_eval.hpp"

#include <algorithm>
#include <cctype>

#include "probelab/io.hpp"
#include "probelab/parallel.hpp"

namespace probelab {

std::string format_prompt(const std::string& question) {
  if (question.empty()) throw ContractError("format_prompt needs a non-empty question");
  return question +
         " If yes, answer 1; if no, answer 0. Please answer with numbers only.";
}

int extract_label(std::string_view response) {
  bool saw_one = false, saw_zero = false;
  size_t i = 0;
  const size_t n = response.size();
  auto is_tok = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
  };
  while (i < n) {
    if (!is_tok(response[i])) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < n && is_tok(response[j])) ++j;
    std::string tok(response.substr(i, j - i));
    for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (tok == "1" || tok == "yes") saw_one = true;
    if (tok == "0" || tok == "no") saw_zero = true;
    i = j;
  }
  if (saw_one == saw_zero) return -1;  // both or neither
  return saw_one ? 1 : 0;
}

template <typename T>
ResponseEval evaluate_responses(const Model<T>& model, const Dataset& ds,
                                const Tokenizer& tok, int max_new, int workers) {
  if (!is_binary(ds.kind))
    throw ContractError("evaluate_responses expects a binary task");
  if (ds.samples.empty())
    throw ContractError("evaluate_responses needs a non-empty dataset");
  ResponseEval out;
  out.records.resize(ds.size());
  parallel_for(ds.size(), workers, [&](size_t i) {
    const TaskSample& s = ds.samples[i];
    ResponseRecord r;
    r.question = s.question;
    r.prompt = format_prompt(s.question);
    r.generated = model.generate(tok.encode(r.prompt), s.image, max_new, tok);
    r.extracted = extract_label(r.generated);
    r.label = s.label;
    r.correct = r.extracted >= 0 && r.extracted == s.label;
    out.records[i] = std::move(r);
  });
  size_t correct = 0, unparseable = 0;
  for (const auto& r : out.records) {
    correct += static_cast<size_t>(r.correct);
    unparseable += static_cast<size_t>(r.extracted < 0);
  }
  out.a_resp = static_cast<double>(correct) / static_cast<double>(ds.size());
  out.unparseable_rate =
      static_cast<double>(unparseable) / static_cast<double>(ds.size());
  return out;
}

template <typename T>
double response_accuracy(const Model<T>& model, const Dataset& ds,
                         const Tokenizer& tok, int max_new, int workers) {
  return evaluate_responses(model, ds, tok, max_new, workers).a_resp;
}

GapReport gap(const LayerAccuracyCurve& curve, double a_resp, TokenType ttype) {
  if (curve.n_layers == 0)
    throw ContractError("gap needs a curve with at least one layer");
  GapReport r;
  r.a_resp = a_resp;
  r.token_type = ttype;
  r.max_lp = curve.at(0, ttype);
  r.argmax_layer = 0;
  for (size_t l = 1; l < curve.n_layers; ++l) {
    const double v = curve.at(l, ttype);
    if (v > r.max_lp) {
      r.max_lp = v;
      r.argmax_layer = l;
    }
  }
  r.gap = r.max_lp - a_resp;
  return r;
}

size_t edit_distance(const std::string& s, const std::string& t) {
  const size_t m = s.size(), n = t.size();
  std::vector<size_t> prev(n + 1), cur(n + 1);
  for (size_t j = 0; j <= n; ++j) prev[j] = j;
  for (size_t i = 1; i <= m; ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= n; ++j) {
      const size_t sub = prev[j - 1] + (s[i - 1] == t[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

double normalized_lev(const std::string& s, const std::string& t) {
  if (s.empty() && t.empty()) return 1.0;
  const size_t mx = std::max(s.size(), t.size());
  return 1.0 - static_cast<double>(edit_distance(s, t)) / static_cast<double>(mx);
}

namespace {
std::string normalize_answer(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out = s.substr(b, e - b);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}
}  // namespace

double anls(const std::vector<std::string>& predictions,
            const std::vector<std::vector<std::string>>& golds, double tau) {
  if (predictions.size() != golds.size())
    throw ContractError("anls needs aligned prediction/gold lists");
  if (tau < 0.0 || tau > 1.0) throw ContractError("anls threshold must be in [0, 1]");
  if (predictions.empty()) throw ContractError("anls needs at least one item");
  double total = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const std::string pred = normalize_answer(predictions[i]);
    double best = 0.0;
    for (const std::string& g : golds[i])
      best = std::max(best, normalized_lev(pred, normalize_answer(g)));
    total += best >= tau ? best : 0.0;
  }
  return total / static_cast<double>(predictions.size());
}

std::string responses_to_csv(const std::vector<ResponseRecord>& records) {
  std::string out = "index,question,generated,extracted,label,correct\n";
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += "\"\"";
      else q += c;
    }
    return q + "\"";
  };
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    out += std::to_string(i);
    out += ',';
    out += quote(r.question);
    out += ',';
    out += quote(r.generated);
    out += ',';
    out += r.extracted < 0 ? std::string("unparseable") : std::to_string(r.extracted);
    out += ',';
    out += std::to_string(r.label);
    out += ',';
    out += r.correct ? "1" : "0";
    out += '\n';
  }
  return out;
}

template ResponseEval evaluate_responses<float>(const Model<float>&, const Dataset&,
                                                const Tokenizer&, int, int);
template ResponseEval evaluate_responses<double>(const Model<double>&, const Dataset&,
                                                 const Tokenizer&, int, int);
template double response_accuracy<float>(const Model<float>&, const Dataset&,
                                         const Tokenizer&, int, int);
template double response_accuracy<double>(const Model<double>&, const Dataset&,
                                          const Tokenizer&, int, int);

}  // namespace probelab

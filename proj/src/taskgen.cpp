#include "probelab/taskgen.hpp"

#include <algorithm>
#include <array>
#include <sstream>

#include "probelab/io.hpp"

namespace probelab {

const char* task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::visual_attr: return "visual_attr";
    case TaskKind::word_rec: return "word_rec";
    case TaskKind::structure: return "structure";
    case TaskKind::figure: return "figure";
    case TaskKind::doc_qa: return "doc_qa";
  }
  return "unknown";
}

TaskKind task_kind_from(const std::string& name) {
  for (TaskKind k : {TaskKind::visual_attr, TaskKind::word_rec, TaskKind::structure,
                     TaskKind::figure, TaskKind::doc_qa})
    if (name == task_kind_name(k)) return k;
  throw ConfigError("unknown task kind '" + name + "'");
}

namespace {

constexpr Rgb kRedMarker{1.0f, 0.0f, 0.0f};
constexpr int kCharCell = 8;  // glyph advance at scale 2

const std::array<const char*, 3>& shape_names() {
  static const std::array<const char*, 3> s = {"square", "circle", "triangle"};
  return s;
}

const std::array<const char*, 5>& region_names() {
  static const std::array<const char*, 5> s = {"title", "text", "list", "figure",
                                               "table"};
  return s;
}

std::string random_word(Rng& rng, size_t len) {
  std::string w(len, 'a');
  for (char& c : w) c = static_cast<char>('a' + rng.uniform_int(26));
  return w;
}

void draw_shape(Image& img, const std::string& kind, int cx, int cy, int r, Rgb c) {
  if (kind == "square") {
    img.fill_rect(cx - r, cy - r, 2 * r, 2 * r, c);
  } else if (kind == "circle") {
    for (int y = cy - r; y <= cy + r; ++y)
      for (int x = cx - r; x <= cx + r; ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) img.set(x, y, c);
  } else {  // triangle, apex up
    for (int dy = 0; dy <= 2 * r; ++dy) {
      const int half = (dy * r) / (2 * r);
      for (int x = cx - half; x <= cx + half; ++x) img.set(x, cy - r + dy, c);
    }
  }
}

TaskSample make_visual_attr(Rng& rng, int label, const TaskGenConfig& cfg) {
  const int px = static_cast<int>(cfg.image_px);
  const auto& pal = palette();
  const size_t bg_i = rng.uniform_int(pal.size());
  size_t fg_i = rng.uniform_int(pal.size() - 1);
  if (fg_i >= bg_i) ++fg_i;
  const std::string shape = shape_names()[rng.uniform_int(3)];

  TaskSample s;
  s.kind = TaskKind::visual_attr;
  s.label = label;
  s.image = Image(px, px, pal[bg_i].rgb);
  const int r = 4 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(px / 4 - 3)));
  const int cx = r + 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(px - 2 * r - 1)));
  const int cy = r + 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(px - 2 * r - 1)));
  draw_shape(s.image, shape, cx, cy, r, pal[fg_i].rgb);

  const int form = static_cast<int>(rng.uniform_int(3));
  if (form == 0) {
    std::string asked = pal[bg_i].name;
    if (!label) {
      size_t w = rng.uniform_int(pal.size() - 1);
      if (w >= bg_i) ++w;
      asked = pal[w].name;
    }
    s.question = "Is the background " + asked + "?";
  } else if (form == 1) {
    std::string asked = pal[fg_i].name;
    if (!label) {
      size_t w = rng.uniform_int(pal.size() - 1);
      if (w >= fg_i) ++w;
      asked = pal[w].name;
    }
    s.question = "Is the shape " + asked + "?";
  } else {
    std::string asked = shape;
    if (!label) {
      while (asked == shape) asked = shape_names()[rng.uniform_int(3)];
    }
    s.question = "Is the shape a " + asked + "?";
  }
  return s;
}

TaskSample make_word_rec(Rng& rng, int label, const TaskGenConfig& cfg) {
  const int px = static_cast<int>(cfg.image_px);
  const size_t max_chars = cfg.image_px / kCharCell;
  if (max_chars < 3)
    throw ConfigError("image_px too small for word rendering (need >= 24)");
  const size_t len = 3 + rng.uniform_int(max_chars - 2);
  const std::string word = random_word(rng, len);

  TaskSample s;
  s.kind = TaskKind::word_rec;
  s.label = label;
  s.image = Image(px, px, color_by_name("white"));
  const int x0 = static_cast<int>((cfg.image_px - len * kCharCell) / 2 / 4 * 4);
  const int y0 = static_cast<int>((cfg.image_px - 10) / 2 / 4 * 4);
  draw_word(s.image, x0, y0, word, 2, color_by_name("black"));

  const std::string asked = label ? word : perturb_word(word, rng.next_u64());
  s.question = "Is the text in the image '" + asked + "'?";
  return s;
}

// Splits total into k bands of >= min_h pixels each.
std::vector<int> split_bands(Rng& rng, int total, int k, int min_h) {
  std::vector<int> h(static_cast<size_t>(k), min_h);
  int rest = total - k * min_h;
  while (rest > 0) {
    h[rng.uniform_int(static_cast<uint64_t>(k))] += 1;
    --rest;
  }
  return h;
}

void draw_region_texture(Image& img, const std::string& type, int y0, int h, int w) {
  const Rgb black = color_by_name("black");
  const int x0 = 2, x1 = w - 2;
  if (type == "title") {
    const int bh = std::max(2, h / 2);
    img.fill_rect(x0, y0 + (h - bh) / 2, x1 - x0, bh, black);
  } else if (type == "text") {
    for (int y = y0 + 2; y < y0 + h - 1; y += 2)
      img.fill_rect(x0, y, x1 - x0, 1, black);
  } else if (type == "list") {
    for (int y = y0 + 2; y < y0 + h - 1; y += 3) {
      img.fill_rect(x0, y, 2, 2, black);
      img.fill_rect(x0 + 4, y, x1 - x0 - 4, 1, black);
    }
  } else if (type == "figure") {
    for (int y = y0 + 1; y < y0 + h - 1; ++y)
      for (int x = x0; x < x1; ++x)
        if ((x + y) % 4 == 0) img.set(x, y, black);
  } else {  // table
    for (int y = y0 + 1; y < y0 + h - 1; y += 4)
      img.fill_rect(x0, y, x1 - x0, 1, black);
    for (int x = x0; x < x1; x += 6)
      img.fill_rect(x, y0 + 1, 1, h - 2, black);
  }
}

struct PageLayout {
  std::vector<std::string> types;
  std::vector<int> y0, h;
};

PageLayout make_page(Rng& rng, const TaskGenConfig& cfg, int k, bool first_is_title) {
  const int px = static_cast<int>(cfg.image_px);
  PageLayout page;
  std::vector<std::string> pool(region_names().begin(), region_names().end());
  rng.shuffle(pool);
  if (first_is_title) {
    auto it = std::find(pool.begin(), pool.end(), "title");
    std::iter_swap(pool.begin(), it);
  }
  page.types.assign(pool.begin(), pool.begin() + k);
  std::vector<int> hs;
  if (first_is_title) {
    // The title band needs room for a rendered word.
    std::vector<int> rest = split_bands(rng, px - 14, k - 1, 6);
    hs.push_back(14);
    hs.insert(hs.end(), rest.begin(), rest.end());
  } else {
    hs = split_bands(rng, px, k, 6);
  }
  int y = 0;
  for (int i = 0; i < k; ++i) {
    page.y0.push_back(y);
    page.h.push_back(hs[static_cast<size_t>(i)]);
    y += hs[static_cast<size_t>(i)];
  }
  return page;
}

TaskSample make_structure(Rng& rng, int label, const TaskGenConfig& cfg) {
  const int px = static_cast<int>(cfg.image_px);
  const int k_max = std::min<int>(5, px / 6);
  const int k = 2 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(k_max - 1)));
  PageLayout page = make_page(rng, cfg, k, /*first_is_title=*/false);

  TaskSample s;
  s.kind = TaskKind::structure;
  s.label = label;
  s.image = Image(px, px, color_by_name("white"));
  for (int i = 0; i < k; ++i)
    draw_region_texture(s.image, page.types[static_cast<size_t>(i)],
                        page.y0[static_cast<size_t>(i)], page.h[static_cast<size_t>(i)], px);
  const int boxed = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(k)));
  s.image.outline_rect(0, page.y0[static_cast<size_t>(boxed)], px,
                       page.h[static_cast<size_t>(boxed)], kRedMarker);

  const std::string truth = page.types[static_cast<size_t>(boxed)];
  std::string asked = truth;
  if (!label) {
    while (asked == truth) asked = region_names()[rng.uniform_int(5)];
  }
  s.question = "Is the red boxed region a " + asked + "?";
  return s;
}

TaskSample make_figure(Rng& rng, int label, const TaskGenConfig& cfg) {
  const int px = static_cast<int>(cfg.image_px);
  const int k = 3 + static_cast<int>(rng.uniform_int(4));  // 3..6 bars
  const auto& pal = palette();
  // Distinct bar colors; white stays the background.
  std::vector<size_t> color_ids;
  for (size_t i = 0; i < pal.size(); ++i)
    if (std::string(pal[i].name) != "white") color_ids.push_back(i);
  rng.shuffle(color_ids);
  color_ids.resize(static_cast<size_t>(k));
  // Distinct heights.
  std::vector<int> heights;
  for (int h = 4; h <= px - 6; ++h) heights.push_back(h);
  rng.shuffle(heights);
  heights.resize(static_cast<size_t>(k));

  TaskSample s;
  s.kind = TaskKind::figure;
  s.label = label;
  s.image = Image(px, px, color_by_name("white"));
  const int bw = px / k;
  for (int i = 0; i < k; ++i) {
    const int h = heights[static_cast<size_t>(i)];
    s.image.fill_rect(i * bw + 1, px - h, bw - 2, h,
                      pal[color_ids[static_cast<size_t>(i)]].rgb);
  }

  const bool ask_min = rng.coin();
  int extreme = 0;
  for (int i = 1; i < k; ++i) {
    const bool better =
        ask_min ? heights[static_cast<size_t>(i)] < heights[static_cast<size_t>(extreme)]
                : heights[static_cast<size_t>(i)] > heights[static_cast<size_t>(extreme)];
    if (better) extreme = i;
  }
  int asked = extreme;
  if (!label) {
    // A color that is present but not the extreme; forces a real comparison.
    asked = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(k - 1)));
    if (asked >= extreme) ++asked;
  }
  s.question = std::string("Is ") + pal[color_ids[static_cast<size_t>(asked)]].name +
               (ask_min ? " the minimum?" : " the maximum?");
  return s;
}

TaskSample make_doc_qa(Rng& rng, const TaskGenConfig& cfg) {
  const int px = static_cast<int>(cfg.image_px);
  const size_t max_chars = cfg.image_px / kCharCell;
  if (max_chars < 3)
    throw ConfigError("image_px too small for word rendering (need >= 24)");
  const int k_max = std::min<int>(4, (px - 14) / 6 + 1);
  const int k = 2 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(std::max(1, k_max - 1))));
  PageLayout page = make_page(rng, cfg, k, /*first_is_title=*/true);

  TaskSample s;
  s.kind = TaskKind::doc_qa;
  s.image = Image(px, px, color_by_name("white"));
  const size_t len = 3 + rng.uniform_int(std::min<uint64_t>(2, max_chars - 2));
  const std::string word = random_word(rng, len);
  draw_word(s.image, 0, page.y0[0] + 2, word, 2, color_by_name("black"));
  for (int i = 1; i < k; ++i)
    draw_region_texture(s.image, page.types[static_cast<size_t>(i)],
                        page.y0[static_cast<size_t>(i)], page.h[static_cast<size_t>(i)], px);

  s.gold_answer = word;
  s.question = "What is the title?";
  return s;
}

}  // namespace

std::string perturb_word(const std::string& word, uint64_t seed) {
  if (word.size() < 3)
    throw ContractError("perturb_word needs at least 3 characters");
  for (char c : word)
    if (c < 'a' || c > 'z')
      throw ContractError("perturb_word expects lowercase alphabet words");
  Rng rng(seed);
  for (;;) {
    std::string out = word;
    const int op = static_cast<int>(rng.uniform_int(3));
    if (op == 0) {  // substitute
      const size_t i = rng.uniform_int(out.size());
      char c = static_cast<char>('a' + rng.uniform_int(26));
      while (c == out[i]) c = static_cast<char>('a' + rng.uniform_int(26));
      out[i] = c;
    } else if (op == 1) {  // transpose adjacent
      const size_t i = rng.uniform_int(out.size() - 1);
      std::swap(out[i], out[i + 1]);
    } else {  // delete
      const size_t i = rng.uniform_int(out.size());
      out.erase(i, 1);
    }
    if (out != word && out.size() >= 2) return out;
  }
}

Dataset generate_dataset(TaskKind kind, size_t n, uint64_t seed,
                         const TaskGenConfig& cfg) {
  if (n < 2) throw ConfigError("dataset size must be >= 2 to balance labels");
  Dataset ds;
  ds.kind = kind;
  ds.seed = seed;
  ds.samples.reserve(n);
  Rng rng(derive_seed(seed, task_kind_name(kind)));
  if (kind == TaskKind::doc_qa) {
    for (size_t i = 0; i < n; ++i) ds.samples.push_back(make_doc_qa(rng, cfg));
    return ds;
  }
  std::vector<int> labels(n);
  for (size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2 == 0);
  rng.shuffle(labels);
  for (size_t i = 0; i < n; ++i) {
    switch (kind) {
      case TaskKind::visual_attr:
        ds.samples.push_back(make_visual_attr(rng, labels[i], cfg));
        break;
      case TaskKind::word_rec:
        ds.samples.push_back(make_word_rec(rng, labels[i], cfg));
        break;
      case TaskKind::structure:
        ds.samples.push_back(make_structure(rng, labels[i], cfg));
        break;
      case TaskKind::figure:
        ds.samples.push_back(make_figure(rng, labels[i], cfg));
        break;
      case TaskKind::doc_qa:
        break;
    }
  }
  return ds;
}

Dataset filter_hard(const Dataset& ds,
                    const std::function<int(const TaskSample&)>& predicted_label,
                    FilterStats* stats) {
  if (!is_binary(ds.kind))
    throw ContractError("filter_hard applies to binary tasks only");
  Dataset out;
  out.kind = ds.kind;
  out.split = ds.split;
  out.seed = ds.seed;
  std::vector<const TaskSample*> retained;
  for (const TaskSample& s : ds.samples) {
    const int pred = predicted_label(s);
    if (pred != s.label) retained.push_back(&s);  // unparseable (-1) stays
  }
  size_t kept[2] = {0, 0};
  for (const TaskSample* s : retained) ++kept[static_cast<size_t>(s->label)];
  // Truncate the overrepresented class from the tail back to balance.
  const size_t lo = std::min(kept[0], kept[1]);
  const size_t budget[2] = {std::min(kept[0], lo + 1), std::min(kept[1], lo + 1)};
  size_t used[2] = {0, 0};
  for (const TaskSample* s : retained) {
    const size_t cls = static_cast<size_t>(s->label);
    if (used[cls] < budget[cls]) {
      out.samples.push_back(*s);
      ++used[cls];
    }
  }
  FilterStats st;
  st.input_n = ds.size();
  st.incorrect = retained.size();
  st.final_n = out.size();
  st.retention_rate =
      ds.size() ? static_cast<double>(retained.size()) / static_cast<double>(ds.size())
                : 0.0;
  if (stats) *stats = st;
  if (out.samples.empty())
    throw FilterError("hard-sample filter retained nothing (input " +
                      std::to_string(st.input_n) + ", incorrect " +
                      std::to_string(st.incorrect) + ", retention " +
                      fmt_fixed(st.retention_rate, 4) + ")");
  return out;
}

void write_dataset(const Dataset& ds, const std::string& path) {
  std::string out;
  for (const TaskSample& s : ds.samples) {
    out += base64_encode(s.image.to_bytes());
    out += '\t';
    out += s.question;
    out += '\t';
    out += is_binary(s.kind) ? std::to_string(s.label) : s.gold_answer;
    out += '\t';
    out += task_kind_name(s.kind);
    out += '\n';
  }
  atomic_write_file(path, out);
}

Dataset read_dataset(const std::string& path) {
  const std::string text = read_text_file(path);
  Dataset ds;
  bool first = true;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<std::string, 4> cols;
    size_t start = 0;
    for (int c = 0; c < 4; ++c) {
      const size_t tab = line.find('\t', start);
      if (c < 3 && tab == std::string::npos)
        throw IoError("malformed dataset line in " + path);
      cols[static_cast<size_t>(c)] =
          line.substr(start, tab == std::string::npos ? std::string::npos : tab - start);
      start = tab + 1;
    }
    TaskSample s;
    s.kind = task_kind_from(cols[3]);
    s.image = Image::from_bytes(base64_decode(cols[0]));
    s.question = cols[1];
    if (is_binary(s.kind)) {
      if (cols[2] != "0" && cols[2] != "1")
        throw IoError("bad label '" + cols[2] + "' in " + path);
      s.label = cols[2] == "1" ? 1 : 0;
    } else {
      s.gold_answer = cols[2];
    }
    if (first) {
      ds.kind = s.kind;
      first = false;
    } else if (ds.kind != s.kind) {
      throw IoError("mixed task kinds in " + path);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace probelab

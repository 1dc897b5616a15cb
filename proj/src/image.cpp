#include "probelab/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace probelab {

Image::Image(int w, int h, Rgb fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw ShapeError("image extents must be positive");
  px.resize(static_cast<size_t>(w) * h * 3);
  fill_rect(0, 0, w, h, fill);
}

Rgb Image::get(int x, int y) const {
  const size_t i = (static_cast<size_t>(y) * width + x) * 3;
  return {px[i], px[i + 1], px[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const size_t i = (static_cast<size_t>(y) * width + x) * 3;
  px[i] = c.r;
  px[i + 1] = c.g;
  px[i + 2] = c.b;
}

void Image::fill_rect(int x0, int y0, int w, int h, Rgb c) {
  const int x1 = std::min(x0 + w, width);
  const int y1 = std::min(y0 + h, height);
  for (int y = std::max(y0, 0); y < y1; ++y)
    for (int x = std::max(x0, 0); x < x1; ++x) set(x, y, c);
}

void Image::outline_rect(int x0, int y0, int w, int h, Rgb c) {
  for (int x = x0; x < x0 + w; ++x) {
    set(x, y0, c);
    set(x, y0 + h - 1, c);
  }
  for (int y = y0; y < y0 + h; ++y) {
    set(x0, y, c);
    set(x0 + w - 1, y, c);
  }
}

std::vector<uint8_t> Image::to_bytes() const {
  std::vector<uint8_t> out(4 + px.size());
  out[0] = static_cast<uint8_t>(width & 0xff);
  out[1] = static_cast<uint8_t>((width >> 8) & 0xff);
  out[2] = static_cast<uint8_t>(height & 0xff);
  out[3] = static_cast<uint8_t>((height >> 8) & 0xff);
  for (size_t i = 0; i < px.size(); ++i) {
    const float v = std::clamp(px[i], 0.0f, 1.0f);
    out[4 + i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

Image Image::from_bytes(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 4) throw IoError("image payload too short");
  const int w = bytes[0] | (bytes[1] << 8);
  const int h = bytes[2] | (bytes[3] << 8);
  if (bytes.size() != 4 + static_cast<size_t>(w) * h * 3)
    throw IoError("image payload length does not match header");
  Image img(w, h);
  for (size_t i = 0; i < img.px.size(); ++i)
    img.px[i] = static_cast<float>(bytes[4 + i]) / 255.0f;
  return img;
}

const std::array<NamedColor, 10>& palette() {
  static const std::array<NamedColor, 10> kPalette = {{
      {"black", {0.0f, 0.0f, 0.0f}},
      {"white", {1.0f, 1.0f, 1.0f}},
      {"red", {1.0f, 0.0f, 0.0f}},
      {"green", {0.0f, 0.8f, 0.0f}},
      {"blue", {0.0f, 0.0f, 1.0f}},
      {"yellow", {1.0f, 1.0f, 0.0f}},
      {"orange", {1.0f, 0.6f, 0.0f}},
      {"purple", {0.6f, 0.0f, 0.8f}},
      {"pink", {1.0f, 0.6f, 0.8f}},
      {"gray", {0.5f, 0.5f, 0.5f}},
  }};
  return kPalette;
}

Rgb color_by_name(const std::string& name) {
  for (const auto& c : palette())
    if (name == c.name) return c.rgb;
  throw ConfigError("unknown palette color '" + name + "'");
}

namespace {
// 5 rows x 3 cols per glyph, '#' = on.
constexpr const char* kGlyphRows[26] = {
    ".#."  "#.#"  "###"  "#.#"  "#.#",  // a
    "##."  "#.#"  "##."  "#.#"  "##.",  // b
    ".##"  "#.."  "#.."  "#.."  ".##",  // c
    "##."  "#.#"  "#.#"  "#.#"  "##.",  // d
    "###"  "#.."  "##."  "#.."  "###",  // e
    "###"  "#.."  "##."  "#.."  "#..",  // f
    ".##"  "#.."  "#.#"  "#.#"  ".##",  // g
    "#.#"  "#.#"  "###"  "#.#"  "#.#",  // h
    "###"  ".#."  ".#."  ".#."  "###",  // i
    "..#"  "..#"  "..#"  "#.#"  ".#.",  // j
    "#.#"  "##."  "#.."  "##."  "#.#",  // k
    "#.."  "#.."  "#.."  "#.."  "###",  // l
    "#.#"  "###"  "###"  "#.#"  "#.#",  // m
    "##."  "#.#"  "#.#"  "#.#"  "#.#",  // n
    ".#."  "#.#"  "#.#"  "#.#"  ".#.",  // o
    "##."  "#.#"  "##."  "#.."  "#..",  // p
    ".#."  "#.#"  "#.#"  "###"  ".##",  // q
    "##."  "#.#"  "##."  "##."  "#.#",  // r
    ".##"  "#.."  ".#."  "..#"  "##.",  // s
    "###"  ".#."  ".#."  ".#."  ".#.",  // t
    "#.#"  "#.#"  "#.#"  "#.#"  "###",  // u
    "#.#"  "#.#"  "#.#"  "#.#"  ".#.",  // v
    "#.#"  "#.#"  "###"  "###"  "#.#",  // w
    "#.#"  "#.#"  ".#."  "#.#"  "#.#",  // x
    "#.#"  "#.#"  ".#."  ".#."  ".#.",  // y
    "###"  "..#"  ".#."  "#.."  "###",  // z
};
}  // namespace

GlyphFont::GlyphFont() {
  for (int g = 0; g < 26; ++g) {
    uint16_t bits = 0;
    for (int i = 0; i < 15; ++i)
      if (kGlyphRows[g][i] == '#') bits |= static_cast<uint16_t>(1u << i);
    glyphs_[static_cast<size_t>(g)] = bits;
  }
}

uint16_t GlyphFont::bits(char c) const {
  if (c < 'a' || c > 'z')
    throw ContractError("glyph font covers 'a'..'z' only");
  return glyphs_[static_cast<size_t>(c - 'a')];
}

const GlyphFont& glyph_font() {
  static const GlyphFont font;
  return font;
}

void draw_glyph(Image& img, int x, int y, char c, int scale, Rgb color) {
  const uint16_t bits = glyph_font().bits(c);
  for (int r = 0; r < GlyphFont::kRows; ++r)
    for (int col = 0; col < GlyphFont::kCols; ++col)
      if (bits & (1u << (r * 3 + col)))
        img.fill_rect(x + col * scale, y + r * scale, scale, scale, color);
}

void draw_word(Image& img, int x, int y, const std::string& word, int scale,
               Rgb color) {
  int cx = x;
  for (char c : word) {
    draw_glyph(img, cx, y, c, scale, color);
    cx += (GlyphFont::kCols + 1) * scale;
  }
}

}  // namespace probelab

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "probelab/common.hpp"

namespace probelab {

struct Rgb {
  float r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

// Square RGB raster with float channels in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> px;  // height * width * 3, row-major

  Image() = default;
  Image(int w, int h, Rgb fill = {0, 0, 0});

  Rgb get(int x, int y) const;
  void set(int x, int y, Rgb c);
  void fill_rect(int x0, int y0, int w, int h, Rgb c);
  // 1-px wide rectangle outline (the marker frame).
  void outline_rect(int x0, int y0, int w, int h, Rgb c);

  // Quantized u8 payload with a 4-byte header (width, height as u16 LE).
  std::vector<uint8_t> to_bytes() const;
  static Image from_bytes(const std::vector<uint8_t>& bytes);
};

struct NamedColor {
  const char* name;
  Rgb rgb;
};

// Fixed palette of 10 named colors; questions reference colors by these names.
const std::array<NamedColor, 10>& palette();
Rgb color_by_name(const std::string& name);

// 5x3 binary glyph bitmaps for 'a'..'z'. Row-major, top row first.
class GlyphFont {
 public:
  GlyphFont();
  // Bit r*3+c of the returned mask is row r, column c.
  uint16_t bits(char c) const;
  static constexpr int kRows = 5;
  static constexpr int kCols = 3;

 private:
  std::array<uint16_t, 26> glyphs_{};
};

const GlyphFont& glyph_font();

// Draws c at (x, y) with integer scale; each on-bit becomes a scale x scale block.
void draw_glyph(Image& img, int x, int y, char c, int scale, Rgb color);
// Characters advance by (3*scale + scale) pixels.
void draw_word(Image& img, int x, int y, const std::string& word, int scale, Rgb color);

}  // namespace probelab

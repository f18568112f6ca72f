#pragma once

#include <array>
#include <string>
#include <string_view>

#include "avpred/core/error.hpp"

namespace avpred::data {

inline constexpr std::size_t kGlyphSize = 12;
inline constexpr std::size_t kGlyphCount = 10;

// Hand-drawn 12×12 digits, 2-pixel strokes. '#' = 1, '.' = 0.
inline constexpr std::array<std::array<std::string_view, kGlyphSize>, kGlyphCount> kGlyphArt = {{
    {{"............", "...######...", "..##....##..", "..##....##..", "..##....##..", "..##....##..",
      "..##....##..", "..##....##..", "..##....##..", "..##....##..", "...######...", "............"}},
    {{"............", ".....##.....", "....###.....", "...####.....", ".....##.....", ".....##.....",
      ".....##.....", ".....##.....", ".....##.....", ".....##.....", "...######...", "............"}},
    {{"............", "...######...", "..##....##..", "........##..", "........##..", ".......##...",
      "......##....", ".....##.....", "....##......", "...##.......", "..########..", "............"}},
    {{"............", "..#######...", ".........##.", ".........##.", ".........##.", "...######...",
      ".........##.", ".........##.", ".........##.", ".........##.", "..#######...", "............"}},
    {{"............", "..##....##..", "..##....##..", "..##....##..", "..##....##..", "..########..",
      "........##..", "........##..", "........##..", "........##..", "........##..", "............"}},
    {{"............", "..########..", "..##........", "..##........", "..##........", "..#######...",
      "........##..", "........##..", "........##..", "..##....##..", "...######...", "............"}},
    {{"............", "...######...", "..##........", "..##........", "..##........", "..#######...",
      "..##....##..", "..##....##..", "..##....##..", "..##....##..", "...######...", "............"}},
    {{"............", "..########..", "........##..", ".......##...", ".......##...", "......##....",
      "......##....", ".....##.....", ".....##.....", ".....##.....", ".....##.....", "............"}},
    {{"............", "...######...", "..##....##..", "..##....##..", "..##....##..", "...######...",
      "..##....##..", "..##....##..", "..##....##..", "..##....##..", "...######...", "............"}},
    {{"............", "...######...", "..##....##..", "..##....##..", "..##....##..", "...#######..",
      "........##..", "........##..", "........##..", "........##..", "...######...", "............"}},
}};

/// Intensity of glyph `id` at (row, col), in {0, 1}.
inline double glyph_pixel(std::size_t id, std::size_t row, std::size_t col) {
  if (id >= kGlyphCount) throw ConfigError("unknown glyph id " + std::to_string(id));
  return kGlyphArt[id][row][col] == '#' ? 1.0 : 0.0;
}

}  // namespace avpred::data

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "byte_io.hpp"
#include "dataset.hpp"

namespace seqpix {

/// Binary portable graymap (P5), maxval 255.
inline Bytes encode_pgm(const GrayImage& img) {
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

inline void write_pgm(const std::string& path, const GrayImage& img) { write_file(path, encode_pgm(img)); }

inline GrayImage to_gray(const BinaryImage& img) {
  GrayImage g{{}, img.width, img.height, img.label};
  g.pixels.reserve(img.size());
  for (auto v : img.pixels) g.pixels.push_back(v ? 255 : 0);
  return g;
}

/// Tiles equally sized images row-major into a grid with a one-pixel border
/// of `border` gray. An empty input yields a 0x0 image.
inline GrayImage tile_grid(std::span<const GrayImage> tiles, std::size_t columns, std::uint8_t border = 128) {
  if (tiles.empty() || columns == 0) return GrayImage{};
  const std::size_t w = tiles.front().width, h = tiles.front().height;
  const std::size_t cols = std::min(columns, tiles.size());
  const std::size_t rows = (tiles.size() + cols - 1) / cols;
  GrayImage grid;
  grid.width = cols * (w + 1) + 1;
  grid.height = rows * (h + 1) + 1;
  grid.pixels.assign(grid.width * grid.height, border);
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    const auto& tile = tiles[t];
    if (tile.width != w || tile.height != h) fail(ErrorCode::ShapeMismatch, "grid tiles differ in shape");
    const std::size_t ox = (t % cols) * (w + 1) + 1, oy = (t / cols) * (h + 1) + 1;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) grid.pixels[(oy + y) * grid.width + ox + x] = tile.pixels[y * w + x];
  }
  return grid;
}

}  // namespace seqpix

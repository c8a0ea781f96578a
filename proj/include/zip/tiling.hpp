#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "zip/imaging.hpp"
#include "zip/tensor.hpp"

// Mosaic assembly: pack a batch of same-sized tiles into one large grid
// image (row-major), process it once, then split it back. untile is the
// exact inverse of tile for matching grids.

namespace zip {

struct TileGrid {
    int rows = 0;
    int cols = 0;
    int tile_h = 0;
    int tile_w = 0;

    TileGrid(int rows_, int cols_, int tile_h_, int tile_w_)
        : rows(rows_), cols(cols_), tile_h(tile_h_), tile_w(tile_w_) {
        if (rows < 1 || cols < 1 || tile_h < 1 || tile_w < 1) {
            throw std::invalid_argument("TileGrid: all dimensions must be >= 1");
        }
    }

    int count() const { return rows * cols; }
    int mosaic_h() const { return rows * tile_h; }
    int mosaic_w() const { return cols * tile_w; }
};

inline Tensor tile_tensors(const std::vector<Tensor>& tiles, const TileGrid& grid) {
    if (static_cast<int>(tiles.size()) != grid.count()) {
        throw std::invalid_argument("tile_tensors: tile count does not match grid");
    }
    const int ch = tiles.front().channels;
    for (const Tensor& t : tiles) {
        if (t.height != grid.tile_h || t.width != grid.tile_w || t.channels != ch) {
            throw std::invalid_argument("tile_tensors: tile shape does not match grid");
        }
    }
    Tensor out(grid.mosaic_h(), grid.mosaic_w(), ch);
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            const Tensor& t = tiles[static_cast<std::size_t>(r) * grid.cols + c];
            for (int y = 0; y < grid.tile_h; ++y) {
                for (int x = 0; x < grid.tile_w; ++x) {
                    for (int ci = 0; ci < ch; ++ci) {
                        out.at(r * grid.tile_h + y, c * grid.tile_w + x, ci) = t.at(y, x, ci);
                    }
                }
            }
        }
    }
    return out;
}

inline std::vector<Tensor> untile_tensor(const Tensor& mosaic, const TileGrid& grid) {
    if (mosaic.height != grid.mosaic_h() || mosaic.width != grid.mosaic_w()) {
        throw std::invalid_argument("untile_tensor: mosaic shape does not match grid");
    }
    std::vector<Tensor> tiles;
    tiles.reserve(static_cast<std::size_t>(grid.count()));
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            Tensor t(grid.tile_h, grid.tile_w, mosaic.channels);
            for (int y = 0; y < grid.tile_h; ++y) {
                for (int x = 0; x < grid.tile_w; ++x) {
                    for (int ci = 0; ci < mosaic.channels; ++ci) {
                        t.at(y, x, ci) = mosaic.at(r * grid.tile_h + y, c * grid.tile_w + x, ci);
                    }
                }
            }
            tiles.push_back(std::move(t));
        }
    }
    return tiles;
}

inline Image tile_images(const std::vector<Image>& tiles, const TileGrid& grid) {
    std::vector<Tensor> px;
    px.reserve(tiles.size());
    for (const Image& im : tiles) px.push_back(im.px);
    return Image(tile_tensors(px, grid));
}

inline std::vector<Image> untile_image(const Image& mosaic, const TileGrid& grid) {
    std::vector<Image> out;
    for (Tensor& t : untile_tensor(mosaic.px, grid)) out.push_back(Image(std::move(t)));
    return out;
}

// Box-filter resize with exact fractional coverage: each output pixel is
// the area-weighted mean of the source rectangle it maps onto. Reduces to
// plain block averaging when the scale factor is integral.
inline Tensor area_resize(const Tensor& in, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("area_resize: bad output shape");
    if (out_h == in.height && out_w == in.width) return in;

    const double sy = static_cast<double>(in.height) / out_h;
    const double sx = static_cast<double>(in.width) / out_w;
    Tensor out(out_h, out_w, in.channels);
    for (int oy = 0; oy < out_h; ++oy) {
        const double y0 = oy * sy, y1 = (oy + 1) * sy;
        const int iy0 = static_cast<int>(y0);
        const int iy1 = std::min(in.height - 1, static_cast<int>(std::ceil(y1)) - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            const double x0 = ox * sx, x1 = (ox + 1) * sx;
            const int ix0 = static_cast<int>(x0);
            const int ix1 = std::min(in.width - 1, static_cast<int>(std::ceil(x1)) - 1);
            for (int c = 0; c < in.channels; ++c) {
                double sum = 0.0, area = 0.0;
                for (int iy = iy0; iy <= iy1; ++iy) {
                    const double wy =
                        std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
                    for (int ix = ix0; ix <= ix1; ++ix) {
                        const double wx =
                            std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
                        sum += wy * wx * in.at(iy, ix, c);
                        area += wy * wx;
                    }
                }
                out.at(oy, ox, c) = sum / area;
            }
        }
    }
    return out;
}

inline Image area_resize(const Image& in, int out_h, int out_w) {
    return Image(area_resize(in.px, out_h, out_w));
}

}  // namespace zip

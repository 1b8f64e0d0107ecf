#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include "atlas/geo.hpp"

namespace atlas::geo {

enum class RasterKind { categorical, continuous };

class RasterError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// North-up grid with square cells in degrees. Values are stored row-major
/// with row 0 at the top (northernmost) edge, as in ESRI ASCII grids.
class RasterGrid {
public:
    RasterGrid() = default;
    RasterGrid(int ncols, int nrows, double xll, double yll, double cellsize, double nodata,
               std::vector<double> values, RasterKind kind = RasterKind::continuous);

    int ncols() const { return ncols_; }
    int nrows() const { return nrows_; }
    double xll() const { return xll_; }
    double yll() const { return yll_; }
    double cellsize() const { return cellsize_; }
    double nodata() const { return nodata_; }
    RasterKind kind() const { return kind_; }
    const std::vector<double>& values() const { return values_; }

    double at(int row, int col) const { return values_[static_cast<std::size_t>(row) * ncols_ + col]; }
    BBox extent() const;
    GeoPoint cell_center(int row, int col) const;

    /// Row/column owning p under half-open cells [x, x + cellsize).
    std::optional<std::pair<int, int>> locate(const GeoPoint& p) const;

    /// Nearest-cell value; absent outside the extent or on a nodata cell.
    std::optional<double> sample(const GeoPoint& p) const;

private:
    int ncols_ = 0;
    int nrows_ = 0;
    double xll_ = 0.0;
    double yll_ = 0.0;
    double cellsize_ = 1.0;
    double nodata_ = -9999.0;
    std::vector<double> values_;
    RasterKind kind_ = RasterKind::continuous;
};

inline std::optional<double> raster_sample(const RasterGrid& g, const GeoPoint& p) { return g.sample(p); }

/// ESRI ASCII grid (.asc). XLLCENTER/YLLCENTER headers are accepted and
/// converted to corner form; NODATA_VALUE defaults to -9999.
RasterGrid read_ascii_grid(std::istream& in, RasterKind kind = RasterKind::continuous);
RasterGrid read_ascii_grid(const std::filesystem::path& path, RasterKind kind = RasterKind::continuous);

void write_ascii_grid(std::ostream& out, const RasterGrid& g);
void write_ascii_grid(const std::filesystem::path& path, const RasterGrid& g);

}  // namespace atlas::geo

#include "atlas/raster.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "atlas/format.hpp"

namespace atlas::geo {

RasterGrid::RasterGrid(int ncols, int nrows, double xll, double yll, double cellsize, double nodata,
                       std::vector<double> values, RasterKind kind)
    : ncols_(ncols), nrows_(nrows), xll_(xll), yll_(yll), cellsize_(cellsize), nodata_(nodata),
      values_(std::move(values)), kind_(kind) {
    if (ncols_ <= 0 || nrows_ <= 0) throw RasterError("raster dimensions must be positive");
    if (!(cellsize_ > 0.0)) throw RasterError("cellsize must be positive");
    if (values_.size() != static_cast<std::size_t>(ncols_) * static_cast<std::size_t>(nrows_))
        throw RasterError("value count does not match ncols*nrows");
}

BBox RasterGrid::extent() const {
    return BBox(yll_, xll_, yll_ + nrows_ * cellsize_, xll_ + ncols_ * cellsize_);
}

GeoPoint RasterGrid::cell_center(int row, int col) const {
    return {yll_ + (nrows_ - row - 0.5) * cellsize_, xll_ + (col + 0.5) * cellsize_};
}

std::optional<std::pair<int, int>> RasterGrid::locate(const GeoPoint& p) const {
    const double fx = std::floor((p.lon() - xll_) / cellsize_);
    const double fy = std::floor((p.lat() - yll_) / cellsize_);
    if (fx < 0.0 || fy < 0.0 || fx >= ncols_ || fy >= nrows_) return std::nullopt;
    const int col = static_cast<int>(fx);
    const int row = nrows_ - 1 - static_cast<int>(fy);
    return std::pair{row, col};
}

std::optional<double> RasterGrid::sample(const GeoPoint& p) const {
    auto rc = locate(p);
    if (!rc) return std::nullopt;
    const double v = at(rc->first, rc->second);
    if (v == nodata_ || std::isnan(v)) return std::nullopt;
    return v;
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

double parse_number(const std::string& tok) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (!tok.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw RasterError("invalid number in ascii grid: '" + tok + "'");
    return v;
}

}  // namespace

RasterGrid read_ascii_grid(std::istream& in, RasterKind kind) {
    std::map<std::string, double> header;
    std::string tok;
    std::vector<double> values;
    bool corner_x = true, corner_y = true;
    // Header keys are alphabetic; the first numeric token starts the data block.
    while (in >> tok) {
        if (std::isalpha(static_cast<unsigned char>(tok[0]))) {
            std::string key = lower(tok);
            std::string value;
            if (!(in >> value)) throw RasterError("missing value for header " + tok);
            if (key == "xllcenter") corner_x = false;
            if (key == "yllcenter") corner_y = false;
            header[key] = parse_number(value);
        } else {
            values.push_back(parse_number(tok));
            break;
        }
    }
    while (in >> tok) values.push_back(parse_number(tok));

    auto need = [&](const char* a, const char* b = nullptr) {
        if (auto it = header.find(a); it != header.end()) return it->second;
        if (b)
            if (auto it = header.find(b); it != header.end()) return it->second;
        throw RasterError(std::string("ascii grid header missing ") + a);
    };
    const int ncols = static_cast<int>(need("ncols"));
    const int nrows = static_cast<int>(need("nrows"));
    const double cellsize = need("cellsize");
    double xll = need("xllcorner", "xllcenter");
    double yll = need("yllcorner", "yllcenter");
    if (!corner_x) xll -= cellsize / 2.0;
    if (!corner_y) yll -= cellsize / 2.0;
    const double nodata = header.count("nodata_value") ? header["nodata_value"] : -9999.0;
    return RasterGrid(ncols, nrows, xll, yll, cellsize, nodata, std::move(values), kind);
}

RasterGrid read_ascii_grid(const std::filesystem::path& path, RasterKind kind) {
    std::ifstream in(path);
    if (!in) throw RasterError("cannot open raster " + path.string());
    return read_ascii_grid(in, kind);
}

void write_ascii_grid(std::ostream& out, const RasterGrid& g) {
    out << "ncols " << g.ncols() << "\n"
        << "nrows " << g.nrows() << "\n"
        << "xllcorner " << format_double(g.xll()) << "\n"
        << "yllcorner " << format_double(g.yll()) << "\n"
        << "cellsize " << format_double(g.cellsize()) << "\n"
        << "NODATA_value " << format_double(g.nodata()) << "\n";
    for (int r = 0; r < g.nrows(); ++r) {
        for (int c = 0; c < g.ncols(); ++c) {
            if (c) out << ' ';
            out << format_double(g.at(r, c));
        }
        out << "\n";
    }
}

void write_ascii_grid(const std::filesystem::path& path, const RasterGrid& g) {
    std::ofstream out(path);
    if (!out) throw RasterError("cannot write raster " + path.string());
    write_ascii_grid(out, g);
}

}  // namespace atlas::geo

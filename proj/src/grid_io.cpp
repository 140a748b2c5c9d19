#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "enkflab/errors.hpp"
#include "enkflab/measures.hpp"

namespace enkflab::measures {

namespace {

constexpr char kMagic[4] = {'E', 'K', 'G', 'M'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw UsageError("GridMeasure: truncated binary stream");
  return v;
}

void format_g17(char* buf, std::size_t n, double v) { std::snprintf(buf, n, "%.17g", v); }

}  // namespace

void write_binary(const GridMeasure& mu, std::ostream& os) {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(mu.dim()));
  for (const auto& a : mu.axes()) {
    put<double>(os, a.lo);
    put<double>(os, a.hi);
    put<std::uint64_t>(os, static_cast<std::uint64_t>(a.n));
  }
  os.write(reinterpret_cast<const char*>(mu.density().data()),
           static_cast<std::streamsize>(mu.size() * sizeof(double)));
}

GridMeasure read_binary(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw UsageError("GridMeasure: bad magic in binary stream");
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) throw UsageError("GridMeasure: unsupported version");
  const auto dim = get<std::uint32_t>(is);
  if (dim == 0 || dim > 8) throw UsageError("GridMeasure: implausible dimension");
  std::vector<GridAxis> axes(dim);
  std::int64_t total = 1;
  for (auto& a : axes) {
    a.lo = get<double>(is);
    a.hi = get<double>(is);
    a.n = static_cast<int>(get<std::uint64_t>(is));
    total *= a.n;
  }
  Eigen::ArrayXd density(total);
  is.read(reinterpret_cast<char*>(density.data()),
          static_cast<std::streamsize>(total * sizeof(double)));
  if (!is) throw UsageError("GridMeasure: truncated density payload");
  return GridMeasure(std::move(axes), std::move(density));
}

void write_binary_file(const GridMeasure& mu, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("GridMeasure: cannot open '" + path + "' for writing");
  write_binary(mu, os);
}

GridMeasure read_binary_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("GridMeasure: cannot open '" + path + "'");
  return read_binary(is);
}

void write_csv(const GridMeasure& mu, std::ostream& os) {
  for (int k = 0; k < mu.dim(); ++k) os << "x" << k << ",";
  os << "density\r\n";
  char buf[40];
  for (std::int64_t flat = 0; flat < mu.size(); ++flat) {
    const Eigen::VectorXd x = mu.node(flat);
    for (int k = 0; k < mu.dim(); ++k) {
      format_g17(buf, sizeof(buf), x[k]);
      os << buf << ",";
    }
    format_g17(buf, sizeof(buf), mu.density()[flat]);
    os << buf << "\r\n";
  }
}

}  // namespace enkflab::measures

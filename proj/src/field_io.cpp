#include "maxnl/field_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include <fmt/format.h>

#include "maxnl/errors.hpp"

namespace maxnl {

namespace {

constexpr char kMagic[6] = {'M', 'X', 'F', 'L', 'D', '1'};

// Layout codes in the header.
constexpr std::uint8_t kEdge = 0, kFace = 1, kNode = 2;
constexpr std::uint8_t kScalarNode = 10, kScalarCell = 11, kScalarHalf = 12;
constexpr std::uint8_t kBoundary = 20;

template <class T>
void put_le(std::ostream& os, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                                 std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  U u;
  std::memcpy(&u, &v, sizeof(T));
  for (std::size_t b = 0; b < sizeof(T); ++b) os.put(char((u >> (8 * b)) & 0xff));
}

template <class T>
T get_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                                 std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  U u = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    int c = is.get();
    if (c == EOF) fail(ErrorKind::io, "MXFLD1: truncated file");
    u |= U(std::uint8_t(c)) << (8 * b);
  }
  T v;
  std::memcpy(&v, &u, sizeof(T));
  return v;
}

struct Header {
  std::uint8_t layout = 0;
  Precision prec = Precision::complex128;
  std::uint32_t n = 0;
  double side = 1.0;
  std::uint32_t components = 0;
  std::uint64_t per_component = 0;
  std::string tag;
};

void write_header(std::ostream& os, const Header& h) {
  os.write(kMagic, 6);
  put_le<std::uint8_t>(os, h.layout);
  put_le<std::uint8_t>(os, std::uint8_t(h.prec));
  put_le<std::uint32_t>(os, h.n);
  put_le<double>(os, h.side);
  put_le<std::uint32_t>(os, h.components);
  put_le<std::uint64_t>(os, h.per_component);
  put_le<std::uint16_t>(os, std::uint16_t(h.tag.size()));
  os.write(h.tag.data(), std::streamsize(h.tag.size()));
}

Header read_header(std::istream& is) {
  char magic[6];
  is.read(magic, 6);
  if (!is || std::memcmp(magic, kMagic, 6) != 0) fail(ErrorKind::io, "MXFLD1: bad magic");
  Header h;
  h.layout = get_le<std::uint8_t>(is);
  const auto prec = get_le<std::uint8_t>(is);
  if (prec != 8 && prec != 16) fail(ErrorKind::io, "MXFLD1: unknown precision code");
  h.prec = Precision(prec);
  h.n = get_le<std::uint32_t>(is);
  h.side = get_le<double>(is);
  h.components = get_le<std::uint32_t>(is);
  h.per_component = get_le<std::uint64_t>(is);
  const auto len = get_le<std::uint16_t>(is);
  h.tag.resize(len);
  is.read(h.tag.data(), len);
  if (!is) fail(ErrorKind::io, "MXFLD1: truncated header");
  return h;
}

void write_values(std::ostream& os, std::span<const cplx> v, Precision prec) {
  for (const auto& x : v) {
    if (prec == Precision::complex128) {
      put_le<double>(os, x.real());
      put_le<double>(os, x.imag());
    } else {
      put_le<float>(os, float(x.real()));
      put_le<float>(os, float(x.imag()));
    }
  }
}

void read_values(std::istream& is, std::span<cplx> v, Precision prec) {
  for (auto& x : v) {
    if (prec == Precision::complex128) {
      const double re = get_le<double>(is);
      const double im = get_le<double>(is);
      x = cplx(re, im);
    } else {
      const float re = get_le<float>(is);
      const float im = get_le<float>(is);
      x = cplx(re, im);
    }
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open for reading: " + path);
  return is;
}

std::uint8_t layout_code(Layout l) {
  switch (l) {
    case Layout::edge: return kEdge;
    case Layout::face: return kFace;
    case Layout::node: return kNode;
  }
  return kNode;
}

std::uint8_t location_code(Location l) {
  switch (l) {
    case Location::node: return kScalarNode;
    case Location::cell: return kScalarCell;
    case Location::half: return kScalarHalf;
  }
  return kScalarNode;
}

}  // namespace

void write_field(const std::string& path, const VectorField3C& f, Precision prec, const std::string& tag) {
  auto os = open_out(path);
  Header h{layout_code(f.layout()), prec, std::uint32_t(f.grid().n()), f.grid().side(), 3, 0, tag};
  write_header(os, h);
  for (int c = 0; c < 3; ++c) {
    put_le<std::uint64_t>(os, f.comp(c).size());
    write_values(os, f.comp(c), prec);
  }
  if (!os) fail(ErrorKind::io, "write failed: " + path);
}

void write_field(const std::string& path, const ScalarFieldC& f, Precision prec, const std::string& tag) {
  auto os = open_out(path);
  Header h{location_code(f.location()), prec, std::uint32_t(f.grid().n()), f.grid().side(), 1, f.size(), tag};
  write_header(os, h);
  write_values(os, f.values(), prec);
  if (!os) fail(ErrorKind::io, "write failed: " + path);
}

void write_field(const std::string& path, const TangentialBoundaryField& f, Precision prec, const std::string& tag) {
  auto os = open_out(path);
  Header h{kBoundary, prec, std::uint32_t(f.grid().n()), f.grid().side(), 1, f.size(), tag};
  write_header(os, h);
  write_values(os, f.values(), prec);
  if (!os) fail(ErrorKind::io, "write failed: " + path);
}

VectorField3C read_vector_field(const std::string& path) {
  auto is = open_in(path);
  Header h = read_header(is);
  if (h.layout > kNode || h.components != 3) fail(ErrorKind::io, "MXFLD1: not a vector field: " + path);
  VectorField3C f(Grid(int(h.n), h.side), Layout(h.layout));
  for (int c = 0; c < 3; ++c) {
    const auto count = get_le<std::uint64_t>(is);
    if (count != f.comp(c).size()) fail(ErrorKind::io, "MXFLD1: component size mismatch");
    read_values(is, f.comp(c), h.prec);
  }
  return f;
}

ScalarFieldC read_scalar_field(const std::string& path) {
  auto is = open_in(path);
  Header h = read_header(is);
  Location loc;
  switch (h.layout) {
    case kScalarNode: loc = Location::node; break;
    case kScalarCell: loc = Location::cell; break;
    case kScalarHalf: loc = Location::half; break;
    default: fail(ErrorKind::io, "MXFLD1: not a scalar field: " + path);
  }
  ScalarFieldC f(Grid(int(h.n), h.side), loc);
  if (h.per_component != f.size()) fail(ErrorKind::io, "MXFLD1: scalar size mismatch");
  read_values(is, f.values(), h.prec);
  return f;
}

TangentialBoundaryField read_boundary_field(const std::string& path) {
  auto is = open_in(path);
  Header h = read_header(is);
  if (h.layout != kBoundary) fail(ErrorKind::io, "MXFLD1: not a boundary field: " + path);
  TangentialBoundaryField f(Grid(int(h.n), h.side));
  if (h.per_component != f.size()) fail(ErrorKind::io, "MXFLD1: boundary size mismatch");
  read_values(is, f.values(), h.prec);
  return f;
}

std::string read_field_tag(const std::string& path) {
  auto is = open_in(path);
  return read_header(is).tag;
}

namespace {

int nearest(double x, double h, double offset, int count) {
  int i = int(std::lround((x - offset) / h));
  return std::clamp(i, 0, count - 1);
}

}  // namespace

void write_csv_slice(const std::string& path, const VectorField3C& f, int axis, const Vec3& through,
                     const std::string& tag) {
  if (axis < 0 || axis > 2) fail(ErrorKind::invalid_argument, "slice axis must be 0, 1 or 2");
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io, "cannot open for writing: " + path);
  if (!tag.empty()) os << "# " << tag << "\n";
  os << "component,coord,re,im\n";
  const double h = f.grid().h();
  for (int c = 0; c < 3; ++c) {
    const auto& d = f.shape(c).dims;
    std::array<int, 3> idx{};
    for (int a = 0; a < 3; ++a) {
      const double off = 0.5 * h * (doubled_position(f.layout(), c, 0, 0, 0)[a]);
      idx[a] = nearest(through[a], h, off, d[a]);
    }
    for (int m = 0; m < d[axis]; ++m) {
      idx[axis] = m;
      const cplx v = f.at(c, idx[0], idx[1], idx[2]);
      os << c << ',' << fmt::format("{:.17g},{:.17g},{:.17g}", f.position(c, idx[0], idx[1], idx[2])[axis], v.real(),
                                    v.imag())
         << "\n";
    }
  }
}

void write_csv_slice(const std::string& path, const ScalarFieldC& f, int axis, const Vec3& through,
                     const std::string& tag) {
  if (axis < 0 || axis > 2) fail(ErrorKind::invalid_argument, "slice axis must be 0, 1 or 2");
  std::ofstream os(path);
  if (!os) fail(ErrorKind::io, "cannot open for writing: " + path);
  if (!tag.empty()) os << "# " << tag << "\n";
  os << "coord,re,im\n";
  const auto& d = f.shape().dims;
  const Vec3 p0 = f.position(0, 0, 0);
  const Vec3 p1 = f.position(1, 1, 1);
  const double step = p1[0] - p0[0];
  std::array<int, 3> idx{};
  for (int a = 0; a < 3; ++a) idx[a] = nearest(through[a], step, p0[a], d[a]);
  for (int m = 0; m < d[axis]; ++m) {
    idx[axis] = m;
    const cplx v = f.at(idx[0], idx[1], idx[2]);
    os << fmt::format("{:.17g},{:.17g},{:.17g}", f.position(idx[0], idx[1], idx[2])[axis], v.real(), v.imag()) << "\n";
  }
}

}  // namespace maxnl

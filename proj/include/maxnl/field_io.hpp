#pragma once

#include <string>

#include "maxnl/grid.hpp"

namespace maxnl {

enum class Precision : std::uint8_t { complex64 = 8, complex128 = 16 };

// MXFLD1 binary field files: magic "MXFLD1", layout code, precision, grid
// size, side, component count, values per component, provenance tag, then a
// little-endian complex payload component by component.
void write_field(const std::string& path, const VectorField3C& f, Precision prec = Precision::complex128,
                 const std::string& tag = "");
void write_field(const std::string& path, const ScalarFieldC& f, Precision prec = Precision::complex128,
                 const std::string& tag = "");
void write_field(const std::string& path, const TangentialBoundaryField& f,
                 Precision prec = Precision::complex128, const std::string& tag = "");

VectorField3C read_vector_field(const std::string& path);
ScalarFieldC read_scalar_field(const std::string& path);
TangentialBoundaryField read_boundary_field(const std::string& path);
// Provenance tag stored in the header.
std::string read_field_tag(const std::string& path);

// 1-D slice along `axis` through the sample nearest to `through`: one row per
// sample with the coordinate and re/im of each component.
void write_csv_slice(const std::string& path, const VectorField3C& f, int axis, const Vec3& through,
                     const std::string& tag = "");
void write_csv_slice(const std::string& path, const ScalarFieldC& f, int axis, const Vec3& through,
                     const std::string& tag = "");

}  // namespace maxnl

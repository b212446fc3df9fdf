#pragma once

// Flat binary field format (little-endian host order):
//   char[4]  magic "KMKV"
//   u32      version (=1)
//   u32      ndim
//   u64      shape[ndim]
//   f64      spacing[ndim]
//   f64      origin[ndim]
//   f64      values[prod(shape)]   row-major, last axis fastest

#include <filesystem>
#include <iosfwd>

#include "kmv/tensor_norms.hpp"

namespace kmv {

inline constexpr std::uint32_t kFieldFormatVersion = 1;

void write_field(std::ostream& os, const SampledField& f);
SampledField read_field(std::istream& is);
void write_field(const std::filesystem::path& path, const SampledField& f);
SampledField read_field(const std::filesystem::path& path);

/// CSV export of 1d or 2d fields: one row per cell, midpoint coordinates then value.
void write_field_csv(std::ostream& os, const SampledField& f);

}  // namespace kmv

#include "kmv/field_io.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "kmv/errors.hpp"

namespace kmv {

namespace {

constexpr std::array<char, 4> kMagic{'K', 'M', 'K', 'V'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ContractViolation("field file truncated");
  return v;
}

}  // namespace

void write_field(std::ostream& os, const SampledField& f) {
  os.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(os, kFieldFormatVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(f.ndim()));
  for (auto n : f.shape()) put<std::uint64_t>(os, n);
  for (double h : f.spacing()) put<double>(os, h);
  for (double o : f.origin()) put<double>(os, o);
  os.write(reinterpret_cast<const char*>(f.values().data()),
           static_cast<std::streamsize>(f.values().size() * sizeof(double)));
  if (!os) throw NumericalError("failed writing field");
}

SampledField read_field(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw ContractViolation("not a KMKV field file");
  const auto version = get<std::uint32_t>(is);
  if (version != kFieldFormatVersion) throw ContractViolation("unsupported field format version");
  const auto nd = get<std::uint32_t>(is);
  if (nd == 0 || nd > 16) throw ContractViolation("implausible field rank");
  std::vector<std::size_t> shape(nd);
  std::vector<double> spacing(nd), origin(nd);
  std::size_t count = 1;
  for (auto& n : shape) {
    n = static_cast<std::size_t>(get<std::uint64_t>(is));
    count *= n;
  }
  for (auto& h : spacing) h = get<double>(is);
  for (auto& o : origin) o = get<double>(is);
  std::vector<double> values(count);
  is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!is) throw ContractViolation("field payload truncated");
  return SampledField(std::move(shape), std::move(spacing), std::move(origin), std::move(values));
}

void write_field(const std::filesystem::path& path, const SampledField& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw NumericalError("cannot open " + path.string());
  write_field(os, f);
}

SampledField read_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractViolation("cannot open " + path.string());
  return read_field(is);
}

void write_field_csv(std::ostream& os, const SampledField& f) {
  if (f.ndim() > 2) throw ContractViolation("CSV export supports 1d and 2d fields only");
  os << std::setprecision(17);
  if (f.ndim() == 1) {
    os << "z0,value\n";
    for (std::size_t i = 0; i < f.shape()[0]; ++i) os << f.coordinate(0, i) << ',' << f[i] << '\n';
    return;
  }
  os << "z0,z1,value\n";
  const std::size_t n1 = f.shape()[1];
  for (std::size_t i = 0; i < f.shape()[0]; ++i)
    for (std::size_t j = 0; j < n1; ++j)
      os << f.coordinate(0, i) << ',' << f.coordinate(1, j) << ',' << f[i * n1 + j] << '\n';
}

}  // namespace kmv

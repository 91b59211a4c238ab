#include <array>
#include <bit>
#include <cstring>
#include <stdexcept>
#include <string>
#include <fstream>
#include <istream>
#include <ostream>

#include "marl/neural.hpp"

namespace marl::nn {
namespace {

constexpr std::array<char, 4> kMagic = {'M', 'L', 'C', 'K'};

template <typename UInt>
void put_le(std::ostream& out, UInt value) {
  std::array<char, sizeof(UInt)> bytes{};
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename UInt>
UInt get_le(std::istream& in) {
  std::array<unsigned char, sizeof(UInt)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  UInt value = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) value |= static_cast<UInt>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParamSet& params) {
  const MlpSpec& spec = params.spec();
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(spec.layer_sizes.size()));
  for (int s : spec.layer_sizes) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s));
  put_le<std::uint64_t>(out, params.size());
  for (double v : params.flat()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

ParamSet read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("checkpoint: bad magic");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto n_sizes = get_le<std::uint32_t>(in);
  if (n_sizes < 2 || n_sizes > 64) throw std::runtime_error("checkpoint: implausible layer count");
  MlpSpec spec;
  for (std::uint32_t i = 0; i < n_sizes; ++i) {
    spec.layer_sizes.push_back(static_cast<int>(get_le<std::uint32_t>(in)));
  }
  spec.validate();
  const auto count = get_le<std::uint64_t>(in);
  if (count != spec.parameter_count()) {
    throw std::runtime_error("checkpoint: parameter count does not match layer sizes");
  }
  std::vector<double> values(count);
  for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
  return ParamSet::from_flat(std::move(spec), values);
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(out, params);
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace marl::nn

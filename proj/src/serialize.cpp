#include "noble/serialize.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace noble {

namespace {

constexpr std::array<char, 8> kMagic{'N', 'O', 'B', 'L', 'E', 'C', 'K', 'P'};

template <typename T>
void write_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), sizeof(T))) throw std::runtime_error("unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

void write_section(std::ostream& out, const Shape& shape, std::span<const float> values) {
  write_le<std::uint64_t>(out, shape.size());
  for (auto e : shape) write_le<std::uint64_t>(out, e);
  for (float v : values) write_le<float>(out, v);
}

template <typename Real>
void write_values(std::ostream& out, const Shape& shape, std::span<const Real> values) {
  std::vector<float> f(values.begin(), values.end());
  write_section(out, shape, f);
}

std::vector<float> read_section(std::istream& in, const Shape& expected, const std::string& name) {
  const auto rank = read_le<std::uint64_t>(in);
  Shape shape(rank);
  for (auto& e : shape) e = read_le<std::uint64_t>(in);
  if (shape != expected) {
    throw std::runtime_error("shape mismatch for " + name + ": file has " + shape_to_string(shape) + ", model has " +
                             shape_to_string(expected));
  }
  std::vector<float> values(shape_numel(shape));
  for (auto& v : values) v = read_le<float>(in);
  return values;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::filesystem::path manifest_path(const std::filesystem::path& blob) {
  return blob.string() + ".manifest";
}

std::string extents_string(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

}  // namespace

template <typename Real>
void save_parameters(const std::filesystem::path& blob, const ParameterList<Real>& params) {
  auto out = open_out(blob);
  auto manifest = open_out(manifest_path(blob));
  for (const auto& p : params) {
    write_values<Real>(out, p.tensor.shape(), p.tensor.data());
    manifest << p.name << ' ' << to_string(p.tag) << ' ' << extents_string(p.tensor.shape()) << '\n';
  }
  if (!out || !manifest) throw std::runtime_error("write failed for " + blob.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest) {
  auto in = open_in(manifest);
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name, role, extents;
    if (!(fields >> name >> role >> extents)) throw std::runtime_error("malformed manifest line: " + line);
    ManifestEntry e{name, parse_role(role), {}};
    std::istringstream ext(extents);
    std::string part;
    while (std::getline(ext, part, 'x')) e.shape.push_back(std::stoull(part));
    entries.push_back(std::move(e));
  }
  return entries;
}

template <typename Real>
void load_parameters(const std::filesystem::path& blob, ParameterList<Real>& params) {
  const auto entries = read_manifest(manifest_path(blob));
  if (entries.size() != params.size()) {
    throw std::runtime_error("manifest lists " + std::to_string(entries.size()) + " parameters, model has " +
                             std::to_string(params.size()));
  }
  auto in = open_in(blob);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (entries[i].name != p.name || entries[i].role != p.tag) {
      throw std::runtime_error("manifest entry " + std::to_string(i) + " is " + entries[i].name + ", expected " +
                               p.name);
    }
    const auto values = read_section(in, p.tensor.shape(), p.name);
    std::copy(values.begin(), values.end(), p.tensor.data().begin());
  }
}

template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const AdamW<Real>& optimizer) {
  auto out = open_out(path);
  out.write(kMagic.data(), kMagic.size());
  write_le<std::uint32_t>(out, kCheckpointVersion);
  write_le<std::uint64_t>(out, optimizer.step_count());
  const auto& params = optimizer.parameters();
  write_le<std::uint64_t>(out, params.size());
  for (const auto& p : params) write_values<Real>(out, p.tensor.shape(), p.tensor.data());
  for (std::size_t i = 0; i < params.size(); ++i) {
    write_values<Real>(out, params[i].tensor.shape(), std::span<const Real>(optimizer.first_moments()[i]));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    write_values<Real>(out, params[i].tensor.shape(), std::span<const Real>(optimizer.second_moments()[i]));
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

template <typename Real>
void load_checkpoint(const std::filesystem::path& path, AdamW<Real>& optimizer) {
  auto in = open_in(path);
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  const auto version = read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto step = read_le<std::uint64_t>(in);
  auto params = optimizer.parameters();
  const auto count = read_le<std::uint64_t>(in);
  if (count != params.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(count) + " parameters, optimizer has " +
                             std::to_string(params.size()));
  }
  std::vector<std::vector<float>> values, m, v;
  for (auto& p : params) values.push_back(read_section(in, p.tensor.shape(), p.name));
  for (auto& p : params) m.push_back(read_section(in, p.tensor.shape(), p.name));
  for (auto& p : params) v.push_back(read_section(in, p.tensor.shape(), p.name));
  std::vector<std::vector<Real>> mr, vr;
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(values[i].begin(), values[i].end(), params[i].tensor.data().begin());
    mr.emplace_back(m[i].begin(), m[i].end());
    vr.emplace_back(v[i].begin(), v[i].end());
  }
  optimizer.restore_state(step, std::move(mr), std::move(vr));
}

template void save_parameters(const std::filesystem::path&, const ParameterList<float>&);
template void save_parameters(const std::filesystem::path&, const ParameterList<double>&);
template void load_parameters(const std::filesystem::path&, ParameterList<float>&);
template void load_parameters(const std::filesystem::path&, ParameterList<double>&);
template void save_checkpoint(const std::filesystem::path&, const AdamW<float>&);
template void save_checkpoint(const std::filesystem::path&, const AdamW<double>&);
template void load_checkpoint(const std::filesystem::path&, AdamW<float>&);
template void load_checkpoint(const std::filesystem::path&, AdamW<double>&);

}  // namespace noble

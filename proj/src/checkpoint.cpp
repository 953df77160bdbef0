// SPDX-License-Identifier: Apache-2.0

#include "spiel/checkpoint.hpp"

#include <fstream>
#include <string>

#include "spiel/binary_io.hpp"
#include "spiel/error.hpp"

namespace spiel {
namespace {

constexpr char kMagic[6] = {'S', 'P', 'I', 'E', 'L', '\0'};
constexpr uint32_t kVersion = 1;

}  // namespace

void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  try {
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot open " + tmp.string() + " for writing");
      writer(out);
      out.flush();
      if (!out) throw Error("write to " + tmp.string() + " failed");
    }
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

template <typename T>
void write_checkpoint(std::ostream& out, const DeltaModel<T>& model) {
  out.write(kMagic, sizeof(kMagic));
  io::write_le<uint32_t>(out, kVersion);
  io::write_le<uint32_t>(out, static_cast<uint32_t>(model.size()));
  for (const auto& e : model.entries()) {
    io::write_le<uint32_t>(out, static_cast<uint32_t>(e.name.size()));
    io::write_bytes(out, e.name);
    io::write_le<uint64_t>(out, e.d_theta);
    io::write_le<uint64_t>(out, e.slice.size());
    for (uint64_t idx : e.slice.indices) io::write_le<uint64_t>(out, idx);
    for (T v : e.slice.values) io::write_f32(out, static_cast<float>(v));
  }
}

template <typename T>
DeltaModel<T> read_checkpoint(std::istream& in) {
  const std::string magic = io::read_bytes(in, sizeof(kMagic), "magic");
  if (magic != std::string(kMagic, sizeof(kMagic))) {
    throw FormatError("not a delta checkpoint (bad magic)");
  }
  const auto version = io::read_le<uint32_t>(in, "version");
  if (version != kVersion) {
    throw FormatError("unsupported delta checkpoint version " + std::to_string(version));
  }
  const auto count = io::read_le<uint32_t>(in, "subvector count");
  DeltaModel<T> model;
  for (uint32_t s = 0; s < count; ++s) {
    const auto name_len = io::read_le<uint32_t>(in, "name length");
    std::string name = io::read_bytes(in, name_len, "name");
    const auto d_theta = io::read_le<uint64_t>(in, "d_theta");
    const auto d_phi = io::read_le<uint64_t>(in, "d_phi");
    if (d_phi > d_theta) {
      throw FormatError("subvector '" + name + "' claims more deltas than parameters");
    }
    std::vector<uint64_t> indices(d_phi);
    for (auto& idx : indices) idx = io::read_le<uint64_t>(in, "indices");
    std::vector<T> values(d_phi);
    for (auto& v : values) v = static_cast<T>(io::read_f32(in, "values"));
    try {
      model.add(std::move(name), d_theta, make_slice<T>(std::move(indices), std::move(values), d_theta));
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw FormatError(std::string("corrupt delta checkpoint: ") + e.what());
    }
  }
  return model;
}

template <typename T>
void save_checkpoint(const DeltaModel<T>& model, const std::filesystem::path& path) {
  atomic_write(path, [&](std::ostream& out) { write_checkpoint(out, model); });
}

template <typename T>
DeltaModel<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return read_checkpoint<T>(in);
}

#define SPIEL_INSTANTIATE(T)                                                            \
  template void write_checkpoint<T>(std::ostream&, const DeltaModel<T>&);               \
  template DeltaModel<T> read_checkpoint<T>(std::istream&);                             \
  template void save_checkpoint<T>(const DeltaModel<T>&, const std::filesystem::path&); \
  template DeltaModel<T> load_checkpoint<T>(const std::filesystem::path&);

SPIEL_INSTANTIATE(float)
SPIEL_INSTANTIATE(double)
#undef SPIEL_INSTANTIATE

}  // namespace spiel

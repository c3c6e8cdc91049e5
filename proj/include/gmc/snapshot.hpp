#pragma once

// Binary field snapshots.  Layout (all little-endian):
//
//   "GMCF" | u32 version | u32 d | u32 N | f64 L | f64 t | u64 seed | u32 replica
//   | N^d f64 values | N^d f64 running_sup

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gmc/error.hpp"
#include "gmc/field_synthesis.hpp"

namespace gmc {

inline constexpr std::uint32_t kSnapshotVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes a little-endian host");

template <class T>
void put(std::ostream& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.write(bytes, sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& path) {
  char bytes[sizeof(T)];
  if (!in.read(bytes, sizeof(T))) throw FormatError(path + ": truncated snapshot");
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace detail

inline void write_snapshot(const FieldState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write("GMCF", 4);
  detail::put<std::uint32_t>(out, kSnapshotVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(state.lattice.dimension));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(state.lattice.points_per_side));
  detail::put<double>(out, state.lattice.side);
  detail::put<double>(out, state.t);
  detail::put<std::uint64_t>(out, state.lineage.master_seed);
  detail::put<std::uint32_t>(out, state.lineage.replica);
  out.write(reinterpret_cast<const char*>(state.values.data()),
            static_cast<std::streamsize>(state.values.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(state.running_sup.data()),
            static_cast<std::streamsize>(state.running_sup.size() * sizeof(double)));
  if (!out) throw Error("failed writing " + path);
}

inline FieldState read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open snapshot " + path);
  char magic[4];
  if (!in.read(magic, 4)) throw FormatError(path + ": truncated snapshot");
  if (std::memcmp(magic, "GMCF", 4) != 0) throw FormatError(path + ": bad magic");
  const auto version = detail::get<std::uint32_t>(in, path);
  if (version != kSnapshotVersion) throw FormatError(path + ": unsupported version " + std::to_string(version));
  FieldState state;
  state.lattice.dimension = static_cast<int>(detail::get<std::uint32_t>(in, path));
  state.lattice.points_per_side = detail::get<std::uint32_t>(in, path);
  state.lattice.side = detail::get<double>(in, path);
  try {
    state.lattice.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(path + ": " + e.what());
  }
  state.t = detail::get<double>(in, path);
  state.lineage.master_seed = detail::get<std::uint64_t>(in, path);
  state.lineage.replica = detail::get<std::uint32_t>(in, path);
  const std::size_t cells = state.lattice.cells();
  for (auto* array : {&state.values, &state.running_sup}) {
    array->resize(cells);
    if (!in.read(reinterpret_cast<char*>(array->data()), static_cast<std::streamsize>(cells * sizeof(double)))) {
      throw FormatError(path + ": truncated snapshot");
    }
  }
  return state;
}

inline FieldState snapshot_roundtrip(const FieldState& state, const std::string& path) {
  write_snapshot(state, path);
  return read_snapshot(path);
}

}  // namespace gmc

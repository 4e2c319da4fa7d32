#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "clickcast/model.hpp"

namespace clickcast {

static_assert(std::endian::native == std::endian::little,
              "frozen model files are little-endian; big-endian hosts need byte swaps");

// Frozen model layout (all integers and doubles little-endian):
//   magic "CCFM", u32 format version
//   family_id, version_id, model config JSON, encoder config JSON,
//   training stats JSON                                  (u32 length + bytes each)
//   u8 has_calibration, then W row-major (4 doubles) + b (2 doubles)
//   u32 parameter count, then per parameter:
//     name, u32 rows, u32 cols, rows*cols doubles column-major
//   u64 FNV-1a checksum of every preceding byte
inline constexpr char kFrozenMagic[4] = {'C', 'C', 'F', 'M'};
inline constexpr uint32_t kFrozenVersion = 1;

namespace detail {

struct ByteWriter {
  std::vector<uint8_t> bytes;

  void raw(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  void u8(uint8_t v) { raw(&v, 1); }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void matrix(const MatrixXd& m) {
    u32(static_cast<uint32_t>(m.rows()));
    u32(static_cast<uint32_t>(m.cols()));
    raw(m.data(), sizeof(double) * static_cast<size_t>(m.size()));
  }
};

struct ByteReader {
  const uint8_t* data;
  size_t size;
  size_t pos = 0;

  void raw(void* out, size_t n) {
    if (pos + n > size) throw LoadError("frozen model truncated");
    std::memcpy(out, data + pos, n);
    pos += n;
  }
  uint8_t u8() {
    uint8_t v;
    raw(&v, 1);
    return v;
  }
  uint32_t u32() {
    uint32_t v;
    raw(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    raw(&v, 8);
    return v;
  }
  std::string str() {
    uint32_t n = u32();
    if (pos + n > size) throw LoadError("frozen model truncated");
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }
  MatrixXd matrix() {
    uint32_t rows = u32();
    uint32_t cols = u32();
    if (rows == 0 || cols == 0 || static_cast<uint64_t>(rows) * cols > (1u << 28))
      throw LoadError("implausible matrix shape in frozen model");
    MatrixXd m(rows, cols);
    raw(m.data(), sizeof(double) * static_cast<size_t>(m.size()));
    return m;
  }
};

}  // namespace detail

inline std::vector<uint8_t> serialize_model(const TrainedModel& model) {
  detail::ByteWriter w;
  w.raw(kFrozenMagic, 4);
  w.u32(kFrozenVersion);
  w.str(model.family_id);
  w.str(model.version_id);
  w.str(model_config_to_json(model.config).dump());
  w.str(encoder_config_to_json(model.encoder).dump());
  w.str(training_stats_to_json(model.stats).dump());
  w.u8(model.calibration ? 1 : 0);
  if (model.calibration) {
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) {
        double v = model.calibration->w[static_cast<size_t>(r)][static_cast<size_t>(c)];
        w.raw(&v, 8);
      }
    for (int r = 0; r < 2; ++r) {
      double v = model.calibration->b[static_cast<size_t>(r)];
      w.raw(&v, 8);
    }
  }
  auto entries = model.params.entries();
  w.u32(static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.str(e.name);
    w.matrix(*e.matrix);
  }
  w.u64(fnv1a64(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

inline TrainedModel deserialize_model(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 4 + 4 + 8) throw LoadError("frozen model too short");
  uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (stored != fnv1a64(bytes.data(), bytes.size() - 8))
    throw LoadError("frozen model checksum mismatch");

  detail::ByteReader r{bytes.data(), bytes.size() - 8};
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kFrozenMagic, 4) != 0) throw LoadError("bad frozen model magic");
  uint32_t version = r.u32();
  if (version != kFrozenVersion)
    throw LoadError("unsupported frozen model format version " + std::to_string(version));

  TrainedModel model;
  try {
    model.family_id = r.str();
    model.version_id = r.str();
    model.config = model_config_from_json(json::parse(r.str()));
    model.encoder = encoder_config_from_json(json::parse(r.str()));
    model.stats = training_stats_from_json(json::parse(r.str()));
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw LoadError(std::string("bad frozen model header: ") + e.what());
  }

  if (r.u8() == 1) {
    MatrixScaling ms;
    for (int row = 0; row < 2; ++row)
      for (int col = 0; col < 2; ++col)
        r.raw(&ms.w[static_cast<size_t>(row)][static_cast<size_t>(col)], 8);
    for (int row = 0; row < 2; ++row) r.raw(&ms.b[static_cast<size_t>(row)], 8);
    model.calibration = ms;
  }

  uint32_t count = r.u32();
  // Names drive placement so field order changes stay loadable.
  std::vector<std::pair<std::string, MatrixXd>> loaded;
  loaded.reserve(count);
  int mlp_layers = 0;
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    if (name.rfind("mlp", 0) == 0) ++mlp_layers;
    loaded.emplace_back(std::move(name), r.matrix());
  }
  if (r.pos != r.size) throw LoadError("trailing bytes in frozen model");

  model.params.mlp_w.resize(static_cast<size_t>(mlp_layers / 2));
  model.params.mlp_b.resize(static_cast<size_t>(mlp_layers / 2));
  auto entries = model.params.entries();
  for (auto& [name, matrix] : loaded) {
    bool placed = false;
    for (auto& e : entries) {
      if (e.name == name) {
        *e.matrix = std::move(matrix);
        placed = true;
        break;
      }
    }
    if (!placed) throw LoadError("unknown parameter in frozen model: " + name);
  }
  for (const auto& e : model.params.entries()) {
    if (e.matrix->size() == 0) throw LoadError("missing parameter in frozen model: " + e.name);
  }
  if (!model.params.all_finite()) throw LoadError("non-finite parameter in frozen model");
  return model;
}

inline void write_model_file(const std::string& path, const TrainedModel& model) {
  auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open model file for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to model file: " + path);
}

inline std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open file: " + path);
  auto size = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw IoError("short read from file: " + path);
  return bytes;
}

inline TrainedModel read_model_file(const std::string& path) {
  return deserialize_model(read_file_bytes(path));
}

}  // namespace clickcast

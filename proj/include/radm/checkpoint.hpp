#pragma once

// Single-file checkpoint container:
//
//   "RADMCKPT" | u32 format version | u64 manifest length | manifest JSON
//   | per tensor: u32 ndim, u64 dim..., float32 values (column-major)
//   | u64 FNV-1a checksum of every preceding byte
//
// All integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "radm/config_io.hpp"
#include "radm/model.hpp"
#include "radm/serialization.hpp"

#ifndef RADM_GIT_DESCRIBE
#define RADM_GIT_DESCRIBE "unknown"
#endif

namespace radm {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'R', 'A', 'D', 'M', 'C', 'K', 'P', 'T'};

struct CheckpointError : std::runtime_error {
  enum class Kind { Io, Format, Checksum, Version, Incompatible };
  Kind kind;
  CheckpointError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

struct CheckpointMeta {
  ModelConfig model;
  TrainConfig train;
  std::uint64_t seed = 0;
  long long step = 0;
  std::string git_describe = RADM_GIT_DESCRIBE;
};

template <class S>
struct Checkpoint {
  CheckpointMeta meta;
  Model<S> model;
};

namespace detail {

inline void putU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void putU64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}
  std::uint64_t u(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw CheckpointError(CheckpointError::Kind::Format, "checkpoint truncated");
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

inline std::uint64_t checksum(const std::string& buf, std::size_t len) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(buf[i]);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

template <class S>
std::string serializeCheckpoint(Model<S>& model, const CheckpointMeta& meta) {
  nlohmann::json manifest = {{"format_version", kCheckpointVersion},
                             {"git_describe", meta.git_describe},
                             {"seed", meta.seed},
                             {"step", meta.step},
                             {"model_config", toJson(model.config())},
                             {"ablation", toJson(model.flags())},
                             {"train_config", toJson(meta.train)}};
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto* p : model.parameters())
    tensors.push_back({{"name", p->name}, {"group", p->group}, {"shape", {p->value.rows(), p->value.cols()}}});
  manifest["tensors"] = tensors;
  const std::string mtext = manifest.dump();

  std::string out(kCheckpointMagic, 8);
  detail::putU32(out, kCheckpointVersion);
  detail::putU64(out, mtext.size());
  out += mtext;
  for (const auto* p : model.parameters()) {
    detail::putU32(out, 2);
    detail::putU64(out, static_cast<std::uint64_t>(p->value.rows()));
    detail::putU64(out, static_cast<std::uint64_t>(p->value.cols()));
    for (Eigen::Index k = 0; k < p->value.size(); ++k)
      detail::putU32(out, std::bit_cast<std::uint32_t>(static_cast<float>(p->value.data()[k])));
  }
  detail::putU64(out, detail::checksum(out, out.size()));
  return out;
}

template <class S>
void saveCheckpoint(Model<S>& model, const CheckpointMeta& meta, const std::filesystem::path& path) {
  writeTextFile(path, serializeCheckpoint(model, meta));
}

/// Expectations a caller may impose on a checkpoint before accepting it.
struct CheckpointExpectations {
  std::optional<ModelConfig> model;
  std::optional<AblationFlags> flags;
};

template <class S>
Checkpoint<S> deserializeCheckpoint(const std::string& buf, const CheckpointExpectations& expect = {}) {
  using Kind = CheckpointError::Kind;
  if (buf.size() < 8 + 4 + 8 + 8 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
    throw CheckpointError(Kind::Format, "not a checkpoint file (bad magic)");
  const std::size_t body = buf.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[body + i])) << (8 * i);
  if (stored != detail::checksum(buf, body))
    throw CheckpointError(Kind::Checksum, "checkpoint checksum mismatch (file corrupted)");

  detail::Reader rd(buf, body);
  (void)rd.bytes(8);
  const auto version = static_cast<std::uint32_t>(rd.u(4));
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::Version, "checkpoint format version " + std::to_string(version) +
                                             " is incompatible with reader version " +
                                             std::to_string(kCheckpointVersion));
  const auto mlen = rd.u(8);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(rd.bytes(static_cast<std::size_t>(mlen)));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::Format, std::string("bad checkpoint manifest: ") + e.what());
  }

  Checkpoint<S> ck;
  ck.meta.model = modelConfigFromJson(manifest.at("model_config"));
  ck.meta.train = trainConfigFromJson(manifest.at("train_config"));
  ck.meta.seed = manifest.value("seed", std::uint64_t{0});
  ck.meta.step = manifest.value("step", 0LL);
  ck.meta.git_describe = manifest.value("git_describe", std::string("unknown"));
  const AblationFlags flags = flagsFromJson(manifest.at("ablation"));

  if (expect.flags && !(*expect.flags == flags))
    throw CheckpointError(Kind::Incompatible, "checkpoint was trained as '" + variantName(flags) +
                                                  "' but '" + variantName(*expect.flags) + "' was requested");
  if (expect.model && !(*expect.model == ck.meta.model))
    throw CheckpointError(Kind::Incompatible, "checkpoint model config " + toJson(ck.meta.model).dump() +
                                                  " differs from requested " + toJson(*expect.model).dump());

  ck.model = Model<S>(ck.meta.model, flags, 0);
  auto params = ck.model.parameters();
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params.size())
    throw CheckpointError(Kind::Format, "checkpoint holds " + std::to_string(tensors.size()) + " tensors, model has " +
                                            std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<S>& p = *params[i];
    if (tensors[i].at("name").get<std::string>() != p.name)
      throw CheckpointError(Kind::Format, "tensor " + std::to_string(i) + " is '" +
                                              tensors[i].at("name").get<std::string>() + "', expected '" + p.name + "'");
    const auto ndim = rd.u(4);
    if (ndim != 2) throw CheckpointError(Kind::Format, "tensor '" + p.name + "' is not 2-D");
    const auto rows = rd.u(8), cols = rd.u(8);
    if (rows != static_cast<std::uint64_t>(p.value.rows()) || cols != static_cast<std::uint64_t>(p.value.cols()))
      throw CheckpointError(Kind::Format, "tensor '" + p.name + "' has wrong shape");
    for (Eigen::Index k = 0; k < p.value.size(); ++k)
      p.value.data()[k] = static_cast<S>(std::bit_cast<float>(static_cast<std::uint32_t>(rd.u(4))));
  }
  if (rd.pos() != body) throw CheckpointError(Kind::Format, "trailing bytes in checkpoint");
  return ck;
}

template <class S = float>
Checkpoint<S> loadCheckpoint(const std::filesystem::path& path, const CheckpointExpectations& expect = {}) {
  std::string buf;
  try {
    buf = readTextFile(path);
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointError::Kind::Io, e.what());
  }
  return deserializeCheckpoint<S>(buf, expect);
}

}  // namespace radm

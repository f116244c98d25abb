#ifndef HEDN_CHECKPOINT_HPP
#define HEDN_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>

#include "hedn/nets.hpp"
#include "hedn/prototypes.hpp"

namespace hedn {

// Little-endian binary layout:
//   "HEDN" | version u32 | D_in u32 | C u32
//   every learnable tensor of HednModel::parameters() as f64
//   BN running mean, BN running var as f64
//   bank count u32, then per bank (sources in order, target last):
//     domain id i32 | cluster count u32 |
//     per prototype: cluster id u32 | label i32 (-1 none) | 64 x f64

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  static_assert(sizeof(T) == sizeof(U));
  U bits;
  std::memcpy(&bits, &value, sizeof bits);
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof buf);
}

template <typename T>
T get_le(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof buf)) throw DataError("checkpoint: truncated file");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(buf[i]) << (8 * i);
  T value;
  std::memcpy(&value, &bits, sizeof value);
  return value;
}

inline void put_bank(std::ostream& out, const PrototypeBank& bank) {
  put_le<std::int32_t>(out, bank.domain_id);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(bank.size()));
  for (const auto& [id, p] : bank.prototypes) {
    if (p.vector.size() != kEmbeddingWidth) throw ShapeError("checkpoint: prototype width must be 64");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(id));
    put_le<std::int32_t>(out, p.class_label.value_or(-1));
    for (double v : p.vector) put_le<double>(out, v);
  }
}

inline PrototypeBank get_bank(std::istream& in) {
  PrototypeBank bank;
  bank.domain_id = get_le<std::int32_t>(in);
  const auto count = get_le<std::uint32_t>(in);
  for (std::uint32_t k = 0; k < count; ++k) {
    Prototype p;
    p.cluster_id = static_cast<int>(get_le<std::uint32_t>(in));
    const auto label = get_le<std::int32_t>(in);
    if (label >= 0) p.class_label = label;
    p.vector.resize(kEmbeddingWidth);
    for (double& v : p.vector) v = get_le<double>(in);
    bank.prototypes.emplace(p.cluster_id, std::move(p));
  }
  return bank;
}

}  // namespace detail

struct Checkpoint {
  HednModel model;
  MemoryBanks banks;
};

inline void write_checkpoint(std::ostream& out, const HednModel& model, const MemoryBanks& banks) {
  out.write("HEDN", 4);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.input_dim));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.classes));
  for (const Matrix* p : model.parameters())
    for (double v : p->data()) detail::put_le<double>(out, v);
  for (double v : model.g.bn.running_mean.data()) detail::put_le<double>(out, v);
  for (double v : model.g.bn.running_var.data()) detail::put_le<double>(out, v);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(banks.bank_count()));
  for (const auto& b : banks.sources) detail::put_bank(out, b);
  detail::put_bank(out, banks.target);
}

inline Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "HEDN", 4) != 0) throw DataError("checkpoint: bad magic");
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto dim = detail::get_le<std::uint32_t>(in);
  const auto classes = detail::get_le<std::uint32_t>(in);
  Checkpoint ck;
  ck.model = init_model(dim, classes, 0);
  for (Matrix* p : ck.model.parameters())
    for (double& v : p->data()) v = detail::get_le<double>(in);
  for (double& v : ck.model.g.bn.running_mean.data()) v = detail::get_le<double>(in);
  for (double& v : ck.model.g.bn.running_var.data()) v = detail::get_le<double>(in);
  const auto bank_count = detail::get_le<std::uint32_t>(in);
  if (bank_count < 2) throw DataError("checkpoint: need at least one source bank and a target bank");
  for (std::uint32_t b = 0; b + 1 < bank_count; ++b) ck.banks.sources.push_back(detail::get_bank(in));
  ck.banks.target = detail::get_bank(in);
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const HednModel& model, const MemoryBanks& banks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_checkpoint(out, model, banks);
  if (!out) throw DataError("write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace hedn

#endif  // HEDN_CHECKPOINT_HPP

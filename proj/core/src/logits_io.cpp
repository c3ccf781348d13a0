#include "cascal/logits_io.hpp"

#include <cstring>

#include "cascal/error.hpp"
#include "cascal/io_util.hpp"

namespace cascal {
namespace {

constexpr char kMagic[4] = {'L', 'G', 'T', 'S'};
constexpr std::size_t kHeaderBytes = 13;

}  // namespace

std::vector<std::uint8_t> encode_lgts(const LogitsTable& table) {
  if (!table.has_labels()) {
    raise(Errc::invalid_input, "LGTS files always carry labels; table '" + table.name() +
                                   "' has none");
  }
  ByteWriter w;
  for (char ch : kMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u8(kLgtsVersion);
  w.u32(static_cast<std::uint32_t>(table.n_instances()));
  w.u32(static_cast<std::uint32_t>(table.n_classes()));
  for (double v : table.logits().data()) w.f32(static_cast<float>(v));
  for (Label y : table.labels()) w.u32(y);
  return w.take();
}

LogitsTable decode_lgts(std::span<const std::uint8_t> bytes, std::string name) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    raise(Errc::bad_magic, "'" + name + "' does not start with \"LGTS\"");
  }
  if (bytes.size() < kHeaderBytes) raise(Errc::truncated_payload, "'" + name + "' header cut short");
  ByteReader r(bytes.subspan(4));
  const auto version = r.u8();
  if (version != kLgtsVersion) {
    raise(Errc::version_mismatch, "'" + name + "' has version " + std::to_string(version) +
                                      ", expected " + std::to_string(kLgtsVersion));
  }
  const std::uint64_t n = r.u32();
  const std::uint64_t c = r.u32();
  if (c < 2) {
    raise(Errc::invalid_input, "'" + name + "' declares C=" + std::to_string(c) +
                                   "; calibration needs at least 2 classes");
  }
  const std::uint64_t expected = kHeaderBytes + n * c * 4 + n * 4;
  if (bytes.size() < expected) {
    raise(Errc::truncated_payload, "'" + name + "' holds " + std::to_string(bytes.size()) +
                                       " bytes, header implies " + std::to_string(expected));
  }
  if (bytes.size() > expected) {
    raise(Errc::invalid_input, "'" + name + "' has " + std::to_string(bytes.size() - expected) +
                                   " trailing bytes");
  }
  std::vector<double> logits(n * c);
  for (auto& v : logits) v = static_cast<double>(r.f32());
  std::vector<Label> labels(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    labels[i] = r.u32();
    if (labels[i] >= c) {
      raise(Errc::label_out_of_range, "'" + name + "' row " + std::to_string(i) + " has label " +
                                          std::to_string(labels[i]) + " >= C=" +
                                          std::to_string(c));
    }
  }
  return LogitsTable(std::move(name), Matrix(n, c, std::move(logits)), std::move(labels));
}

LogitsTable read_logits_file(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return decode_lgts(bytes, path.stem().string());
}

void write_logits_file(const LogitsTable& table, const std::filesystem::path& path) {
  write_file_atomic(path, encode_lgts(table));
}

LogitsTable round_to_f32(const LogitsTable& table) {
  std::vector<double> data(table.logits().data().begin(), table.logits().data().end());
  for (auto& v : data) v = static_cast<double>(static_cast<float>(v));
  Matrix m(table.n_instances(), table.n_classes(), std::move(data));
  if (!table.has_labels()) return LogitsTable::unlabeled(table.name(), std::move(m));
  return LogitsTable(table.name(), std::move(m),
                     std::vector<Label>(table.labels().begin(), table.labels().end()));
}

}  // namespace cascal

#include "afa/checkpoint.hpp"

#include <string>

#include "afa/errors.hpp"
#include "binary.hpp"

namespace afa {
namespace {
constexpr std::string_view kMagic = "AFAC";
}

std::vector<std::uint8_t> encode_checkpoint(const Parameters<float>& params) {
  detail::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  const std::string cfg = params.config().to_text();
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg);
  w.u32(static_cast<std::uint32_t>(params.tensor_count()));
  params.for_each([&](const std::string& name, const Tensor& t) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape().extents()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.f32(v);
  });
  return w.take();
}

Parameters<float> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(4, "magic") != kMagic) throw FormatError("not an AFAC checkpoint (bad magic)", 0);
  const std::uint64_t version_at = r.offset();
  if (const auto v = r.u32("version"); v != kCheckpointVersion) {
    throw FormatError("unsupported AFAC version " + std::to_string(v), version_at);
  }
  const std::uint32_t cfg_len = r.u32("config length");
  const std::uint64_t cfg_at = r.offset();
  const std::string cfg_text = r.bytes(cfg_len, "config");
  NetworkConfig cfg;
  try {
    cfg = NetworkConfig::from_text(cfg_text);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid embedded config: ") + e.what(), cfg_at);
  }
  Parameters<float> params = Parameters<float>::zeros(cfg);

  const std::uint64_t count_at = r.offset();
  const std::uint32_t count = r.u32("tensor count");
  if (count != params.tensor_count()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                      std::to_string(params.tensor_count()),
                      count_at);
  }
  std::vector<std::pair<std::string, Tensor*>> slots;
  params.for_each([&](const std::string& n, Tensor& t) { slots.emplace_back(n, &t); });
  for (auto& [expected_name, slot] : slots) {
    const std::uint64_t at = r.offset();
    const std::uint16_t name_len = r.u16("tensor name length");
    const std::string name = r.bytes(name_len, "tensor name");
    if (name != expected_name) {
      throw FormatError("expected tensor '" + expected_name + "', found '" + name + "'", at);
    }
    const std::uint64_t shape_at = r.offset();
    const std::uint8_t rank = r.u8("tensor rank");
    if (rank > Shape::kMaxRank) {
      throw FormatError("tensor '" + name + "' has rank " + std::to_string(rank), shape_at);
    }
    std::vector<std::size_t> dims;
    for (std::uint8_t i = 0; i < rank; ++i) dims.push_back(r.u32("tensor dim"));
    if (!(Shape(std::span<const std::size_t>(dims)) == slot->shape())) {
      throw FormatError("tensor '" + name + "' shape disagrees with embedded config", shape_at);
    }
    r.need(slot->size() * 4, "tensor data");
    for (auto& v : slot->data()) v = r.f32("tensor data");
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after AFAC payload", r.offset());
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const Parameters<float>& params) {
  detail::write_file(path, encode_checkpoint(params));
}

Parameters<float> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path));
}

Parameters<float> load_checkpoint(const std::filesystem::path& path, const NetworkConfig& expected) {
  Parameters<float> p = load_checkpoint(path);
  if (!(p.config() == expected)) {
    throw ConfigError("checkpoint config does not match the evaluator:\n-- checkpoint --\n" +
                      p.config().to_text() + "-- expected --\n" + expected.to_text());
  }
  return p;
}

}  // namespace afa

#include "pdn/checkpoint.h"

#include <fstream>

#include "binary_io.h"

namespace pdn {

namespace {

constexpr std::string_view kMagic{"PDNCKPT\0", 8};

struct Group {
  std::string name;
  std::uint64_t rows;
  std::uint64_t cols;
  std::size_t offset;  // byte offset of the first value
};

std::vector<Group> parse_groups(std::span<const std::byte> bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  r.verify_seal();
  r.expect_magic(kMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw IntegrityError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint64_t>();
  std::vector<Group> groups;
  for (std::uint64_t g = 0; g < count; ++g) {
    Group grp;
    grp.name = r.str();
    grp.rows = r.get<std::uint64_t>();
    grp.cols = r.get<std::uint64_t>();
    grp.offset = r.position();
    const std::uint64_t n = grp.rows * grp.cols;
    r.need(n * sizeof(double));
    for (std::uint64_t k = 0; k < n; ++k) r.get<double>();
    groups.push_back(std::move(grp));
  }
  if (r.remaining() != 8) throw IntegrityError("checkpoint: trailing bytes");
  return groups;
}

void read_values(std::span<const std::byte> bytes, const Group& g, std::vector<double>& out) {
  detail::ByteReader r(bytes.subspan(g.offset), "checkpoint");
  out.resize(g.rows * g.cols);
  for (auto& v : out) v = r.get<double>();
}

}  // namespace

std::vector<std::byte> encode_checkpoint(const ParamStore& params) {
  detail::ByteWriter w;
  w.raw(kMagic.data(), kMagic.size());
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(params.size());
  for (const auto& p : params) {
    w.str(p.name);
    w.put<std::uint64_t>(p.rows);
    w.put<std::uint64_t>(p.cols);
    for (double v : p.value) w.put<double>(v);
  }
  w.seal();
  return std::move(w.bytes());
}

void decode_checkpoint(std::span<const std::byte> bytes, ParamStore& params) {
  const auto groups = parse_groups(bytes);
  if (groups.size() != params.size()) {
    throw IntegrityError("checkpoint holds " + std::to_string(groups.size()) + " groups, model expects " +
                         std::to_string(params.size()));
  }
  for (const auto& g : groups) {
    if (!params.contains(g.name)) throw IntegrityError("checkpoint group '" + g.name + "' unknown to the model");
    auto& p = params.at(params.id_of(g.name));
    if (p.rows != g.rows || p.cols != g.cols) {
      throw IntegrityError("checkpoint group '" + g.name + "' has shape " + std::to_string(g.rows) + "x" +
                           std::to_string(g.cols) + ", model expects " + std::to_string(p.rows) + "x" +
                           std::to_string(p.cols));
    }
  }
  for (const auto& g : groups) read_values(bytes, g, params.at(params.id_of(g.name)).value);
  params.touch();
}

ParamStore decode_checkpoint(std::span<const std::byte> bytes) {
  ParamStore store;
  for (const auto& g : parse_groups(bytes)) {
    const ParamId id = store.add(g.name, g.rows, g.cols);
    read_values(bytes, g, store.at(id).value);
  }
  return store;
}

std::uint64_t checkpoint_id(const ParamStore& params) {
  const auto bytes = encode_checkpoint(params);
  Fnv1a h;
  h.update(bytes);
  return h.digest();
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw DataError("failed reading '" + path.string() + "'");
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(params));
}

void load_checkpoint(const std::filesystem::path& path, ParamStore& params) {
  decode_checkpoint(read_file_bytes(path), params);
}

}  // namespace pdn

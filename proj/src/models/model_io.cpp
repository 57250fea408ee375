#include "ctsel/models/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>
#include <zlib.h>

#include "ctsel/common/error.hpp"

namespace ctsel::models {

namespace {

static_assert(std::endian::native == std::endian::little, "model files are written in native little-endian order");

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

std::uint32_t crc(const std::string& bytes, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

}  // namespace

std::string serialize_model(const SurrogateModel& model) {
  const Architecture& a = model.arch();
  nlohmann::json header = {
      {"schema_version", kModelSchemaVersion},
      {"flavor", to_string(a.flavor)},
      {"hidden", a.hidden},
      {"dropout", a.dropout},
      {"revin", a.revin},
      {"d_y", a.d_y},
      {"d_x", a.d_x},
      {"d_a", a.d_a},
      {"horizon", a.horizon},
  };
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& w : model.weights()) blocks.push_back({{"name", w.name}, {"shape", {w.value.rows(), w.value.cols()}}});
  header["weights"] = blocks;
  const std::string h = header.dump();

  std::string out(kModelMagic);
  put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  for (const auto& w : model.weights()) {
    const std::size_t n = w.value.size() * sizeof(double);
    const std::size_t pos = out.size();
    out.resize(pos + n);
    std::memcpy(out.data() + pos, w.value.data(), n);
  }
  put_u32(out, crc(out, out.size()));
  return out;
}

SurrogateModel deserialize_model(const std::string& bytes, std::optional<Flavor> expected_flavor) {
  const std::size_t magic = kModelMagic.size();
  if (bytes.size() < magic + 8 || bytes.compare(0, magic, kModelMagic) != 0)
    throw FormatError("not a model file (bad magic)");
  const std::size_t body = bytes.size() - 4;
  if (get_u32(bytes, body) != crc(bytes, body)) throw ChecksumError("model file checksum mismatch");

  const std::uint32_t hlen = get_u32(bytes, magic);
  if (magic + 4 + hlen > body) throw FormatError("model header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(magic + 4, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model header is not valid JSON: ") + e.what());
  }
  try {
    const std::string version = header.at("schema_version").get<std::string>();
    if (version != kModelSchemaVersion)
      throw FormatError("unsupported model schema version '" + version + "' (expected " +
                        std::string(kModelSchemaVersion) + ")");
    Architecture a;
    a.flavor = flavor_from_string(header.at("flavor").get<std::string>());
    if (expected_flavor && *expected_flavor != a.flavor)
      throw FormatError("model flavor is " + std::string(to_string(a.flavor)) + ", expected " +
                        std::string(to_string(*expected_flavor)));
    a.hidden = header.at("hidden").get<std::size_t>();
    a.dropout = header.at("dropout").get<double>();
    a.revin = header.at("revin").get<bool>();
    a.d_y = header.at("d_y").get<std::size_t>();
    a.d_x = header.at("d_x").get<std::size_t>();
    a.d_a = header.at("d_a").get<std::size_t>();
    a.horizon = header.at("horizon").get<std::size_t>();

    std::vector<NamedTensor> weights;
    std::size_t pos = magic + 4 + hlen;
    for (const auto& b : header.at("weights")) {
      const auto shape = b.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw FormatError("weight block shape must have two dimensions");
      ad::Tensor t = ad::Tensor::matrix(shape[0], shape[1]);
      const std::size_t n = t.size() * sizeof(double);
      if (pos + n > body) throw FormatError("weight block '" + b.at("name").get<std::string>() + "' truncated");
      std::memcpy(t.data(), bytes.data() + pos, n);
      pos += n;
      weights.push_back({b.at("name").get<std::string>(), std::move(t)});
    }
    if (pos != body) throw FormatError("trailing bytes after weight blocks");
    return SurrogateModel(a, std::move(weights));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model header: ") + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(std::string("invalid model architecture: ") + e.what());
  }
}

void save_model(const SurrogateModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file " + path.string());
  const std::string bytes = serialize_model(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing model file " + path.string());
}

SurrogateModel load_model(const std::filesystem::path& path, std::optional<Flavor> expected_flavor) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes, expected_flavor);
}

}  // namespace ctsel::models

#include <bit>
#include <cstring>
#include <fstream>

#include "slmm/encoder.hpp"
#include "slmm/error.hpp"

namespace slmm {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoints store raw little-endian doubles");

constexpr char kMagic[8] = {'S', 'L', 'M', 'M', 'C', 'K', 'P', '1'};

}  // namespace

void save_checkpoint(const Encoder& model, const std::filesystem::path& path,
                     const nlohmann::json& extra) {
  nlohmann::json manifest;
  manifest["config"] = model.config().to_json();
  manifest["extra"] = extra;
  auto& entries = manifest["parameters"] = nlohmann::json::array();
  for (const Parameter* p : model.parameters()) {
    entries.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  const std::string header = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t header_size = header.size();
  out.write(reinterpret_cast<const char*>(&header_size), sizeof(header_size));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const Parameter* p : model.parameters()) {
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + " is not a checkpoint file");
  }
  std::uint64_t header_size = 0;
  in.read(reinterpret_cast<char*>(&header_size), sizeof(header_size));
  if (!in || header_size > (1ULL << 30)) throw DataError("corrupt checkpoint header");
  std::string header(header_size, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw DataError("truncated checkpoint header");
  const auto manifest = nlohmann::json::parse(header);

  Encoder model(EncoderConfig::from_json(manifest.at("config")));
  const auto& entries = manifest.at("parameters");
  auto params = model.parameters();
  if (entries.size() != params.size()) throw DataError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    const auto& e = entries[i];
    if (e.at("name").get<std::string>() != p.name || e.at("rows").get<Eigen::Index>() != p.value.rows() ||
        e.at("cols").get<Eigen::Index>() != p.value.cols()) {
      throw DataError("checkpoint entry " + std::to_string(i) + " does not match parameter " + p.name);
    }
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    if (!in) throw DataError("truncated checkpoint data at " + p.name);
  }
  return Checkpoint{std::move(model), manifest.value("extra", nlohmann::json::object())};
}

}  // namespace slmm

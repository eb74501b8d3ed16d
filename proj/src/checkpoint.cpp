#include "ireg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ireg/persistence.hpp"

namespace ireg {

namespace {

constexpr const char* kMagic = "IREGCKPT";

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

Json shapes_of(const nn::ParameterSet& params) {
  Json out = Json::array();
  for (const auto& p : params) out.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const Json& header, const nn::ParameterSet& params) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out << kMagic << ' ' << kCheckpointFormatVersion << '\n' << header.dump() << '\n';
  for (const auto& p : params)
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  if (!out) throw CheckpointError("checkpoint write failed: " + path.string());
}

struct RawCheckpoint {
  Json header;
  std::string payload;
};

RawCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string magic_line, header_line;
  std::getline(in, magic_line);
  std::istringstream ml(magic_line);
  std::string magic;
  int version = -1;
  ml >> magic >> version;
  if (magic != kMagic) throw CheckpointError(path.string() + " is not a checkpoint");
  if (version != kCheckpointFormatVersion)
    throw CheckpointError(path.string() + ": unsupported checkpoint format " + std::to_string(version));
  std::getline(in, header_line);
  RawCheckpoint raw;
  try {
    raw.header = Json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  }
  std::ostringstream rest;
  rest << in.rdbuf();
  raw.payload = rest.str();
  return raw;
}

void fill_parameters(nn::ParameterSet& params, const RawCheckpoint& raw, const std::string& where) {
  const Json& shapes = raw.header.at("parameters");
  if (shapes.size() != params.size()) throw CheckpointError(where + ": parameter count mismatch");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Parameter& p = params[i];
    const Json& s = shapes[i];
    if (s.at("name").get<std::string>() != p.name || s.at("rows").get<long>() != p.value.rows() ||
        s.at("cols").get<long>() != p.value.cols())
      throw CheckpointError(where + ": parameter layout mismatch at " + p.name);
    const std::size_t bytes = static_cast<std::size_t>(p.value.size()) * sizeof(double);
    if (offset + bytes > raw.payload.size()) throw CheckpointError(where + ": truncated payload");
    std::memcpy(p.value.data(), raw.payload.data() + offset, bytes);
    offset += bytes;
  }
  if (offset != raw.payload.size()) throw CheckpointError(where + ": trailing bytes in payload");
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

void save_speaker(const Speaker& speaker, const std::filesystem::path& path) {
  const Json header{{"kind", "speaker"},
                    {"stage", to_string(speaker.stage())},
                    {"config", speaker.config()},
                    {"vocab", speaker.vocab().tokens()},
                    {"vocab_hash", hash_hex(speaker.vocab().hash())},
                    {"parameters", shapes_of(speaker.parameters())}};
  write_checkpoint(path, header, speaker.parameters());
}

Speaker load_speaker(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_checkpoint(path);
  if (raw.header.value("kind", "") != "speaker") throw CheckpointError(path.string() + " is not a speaker checkpoint");
  const SpeakerConfig config = raw.header.at("config").get<SpeakerConfig>();
  Vocabulary vocab = Vocabulary::from_tokens(raw.header.at("vocab").get<std::vector<std::string>>(), config.n_regions);
  if (hash_hex(vocab.hash()) != raw.header.at("vocab_hash").get<std::string>())
    throw CheckpointError(path.string() + ": stored vocabulary does not match its hash");
  Speaker speaker(config, std::move(vocab));
  fill_parameters(speaker.parameters(), raw, path.string());
  speaker.set_stage(stage_from_string(raw.header.at("stage").get<std::string>()));
  return speaker;
}

Speaker load_speaker(const std::filesystem::path& path, const Vocabulary& expected) {
  Speaker speaker = load_speaker(path);
  if (speaker.vocab().hash() != expected.hash())
    throw CheckpointError(path.string() + ": vocabulary hash " + hash_hex(speaker.vocab().hash()) +
                          " does not match expected " + hash_hex(expected.hash()));
  return speaker;
}

void save_listener(const LearnedListener& listener, const std::filesystem::path& path) {
  const Json header{{"kind", "listener"},
                    {"schema", listener.schema()},
                    {"config", listener.config()},
                    {"immutable", true},
                    {"parameters", shapes_of(listener.parameters())}};
  write_checkpoint(path, header, listener.parameters());
}

LearnedListener load_listener(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_checkpoint(path);
  if (raw.header.value("kind", "") != "listener")
    throw CheckpointError(path.string() + " is not a listener checkpoint");
  LearnedListener listener(raw.header.at("schema").get<AttributeSchema>(),
                           raw.header.at("config").get<LearnedListenerConfig>());
  fill_parameters(listener.parameters(), raw, path.string());
  listener.freeze();
  return listener;
}

std::string checkpoint_kind(const std::filesystem::path& path) {
  return read_checkpoint(path).header.value("kind", "");
}

}  // namespace ireg

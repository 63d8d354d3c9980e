#include "coldgen/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <nlohmann/json.hpp>

#include "coldgen/markov.hpp"
#include "coldgen/recurrent.hpp"

namespace coldgen {

namespace {

std::string pack_le(const std::vector<double>& values) {
  std::string out(values.size() * 8, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) out[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  return out;
}

std::vector<double> unpack_le(const std::string& bytes) {
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  return stem.parent_path() / (stem.filename().string() + ext);
}

}  // namespace

std::string checkpoint_digest(const SequenceModel& model) {
  if (const auto* rnn = dynamic_cast<const RecurrentModel*>(&model)) {
    return sha256_hex(pack_le(rnn->params().flatten()));
  }
  if (const auto* mk = dynamic_cast<const MarkovModel*>(&model)) return sha256_hex(mk->to_json().dump());
  throw UnsupportedError("no checkpoint format for " + model.descriptor());
}

void save_checkpoint(const SequenceModel& model, const std::filesystem::path& stem) {
  nlohmann::json header;
  if (const auto* rnn = dynamic_cast<const RecurrentModel*>(&model)) {
    const auto& p = rnn->params();
    std::string blob = pack_le(p.flatten());
    nlohmann::json groups = nlohmann::json::array();
    std::size_t offset = 0;
    p.for_each([&](const std::string& name, Eigen::Map<const Eigen::VectorXd> block) {
      groups.push_back({{"name", name}, {"offset", offset}, {"size", block.size()}});
      offset += static_cast<std::size_t>(block.size());
    });
    header = {{"format_version", 1},
              {"kind", "recurrent"},
              {"vocab", p.vocab},
              {"hidden", p.hidden},
              {"dtype", "float64-le"},
              {"groups", groups},
              {"blob", with_ext(stem, ".bin").filename().string()},
              {"digest", sha256_hex(blob)}};
    write_file(with_ext(stem, ".bin"), blob);
  } else if (const auto* mk = dynamic_cast<const MarkovModel*>(&model)) {
    header = mk->to_json();
    header["digest"] = checkpoint_digest(*mk);
  } else {
    throw UnsupportedError("no checkpoint format for " + model.descriptor());
  }
  write_file(with_ext(stem, ".json"), header.dump(1) + "\n");
}

std::unique_ptr<SequenceModel> load_checkpoint(const std::filesystem::path& stem) {
  const auto header_path = with_ext(stem, ".json");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(read_file(header_path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(header_path.string(), 0, e.what());
  }
  try {
    const auto kind = header.at("kind").get<std::string>();
    const auto digest = header.at("digest").get<std::string>();
    if (kind == "markov") {
      auto m = std::make_unique<MarkovModel>(MarkovModel::from_json(header));
      if (checkpoint_digest(*m) != digest) throw ParseError(header_path.string(), 0, "digest mismatch");
      return m;
    }
    if (kind != "recurrent") throw ParseError(header_path.string(), 0, "unknown model kind '" + kind + "'");
    auto blob_path = stem.parent_path() / header.at("blob").get<std::string>();
    std::string blob = read_file(blob_path);
    if (sha256_hex(blob) != digest) throw ParseError(blob_path.string(), 0, "digest mismatch");
    GruParams p = GruParams::zeros(header.at("vocab").get<int>(), header.at("hidden").get<int>());
    auto values = unpack_le(blob);
    if (blob.size() % 8 != 0 || values.size() != p.num_params()) {
      throw ParseError(blob_path.string(), 0, "parameter count does not match the header");
    }
    p.assign(values);
    return std::make_unique<RecurrentModel>(std::move(p));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(header_path.string(), 0, e.what());
  }
}

}  // namespace coldgen

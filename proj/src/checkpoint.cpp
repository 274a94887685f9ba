#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "geometre/embedding_store.hpp"
#include "geometre/errors.hpp"

namespace geometre {

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'E', 'O', 'M', 'C', 'K', 'P',
                                        'T'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  std::uint64_t u64() { return read_uint<std::uint64_t>(8); }
  std::uint32_t u32() { return read_uint<std::uint32_t>(4); }

  std::string take(std::size_t n) {
    need(n);
    std::string out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  void doubles(Vector& into) {
    for (double& x : into) x = std::bit_cast<double>(u64());
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  template <typename T>
  T read_uint(int width) {
    need(static_cast<std::size_t>(width));
    T v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(path_.string() + ": truncated checkpoint");
    }
  }

  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const EmbeddingStore& store,
                     const std::filesystem::path& path,
                     const nlohmann::json& annotations) {
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["num_entities"] = store.num_entities();
  header["num_relations"] = store.num_relations();
  header["dim"] = store.dim();
  header["projection_mode"] = std::string(to_string(store.projection_mode()));
  header["answer_mode"] = std::string(to_string(store.answer_mode()));
  header["seed"] = store.seed();
  header["init_gamma"] = store.init_gamma();
  nlohmann::json relations = nlohmann::json::array();
  for (const RelationInfo& info : store.relation_info()) {
    relations.push_back(
        {{"transitive", info.transitive},
         {"inverse_of", info.inverse_of ? static_cast<std::int64_t>(*info.inverse_of)
                                        : std::int64_t{-1}}});
  }
  header["relations"] = relations;
  nlohmann::json dims = nlohmann::json::object();
  for (const auto& [r, d] : store.transitive_dims()) {
    dims[std::to_string(r)] = d;
  }
  header["transitive_dims"] = dims;
  header["annotations"] = annotations;

  const std::string header_text = header.dump();
  std::string out(kMagic.begin(), kMagic.end());
  put_u32(out, kFormatVersion);
  put_u64(out, header_text.size());
  out += header_text;
  store.params().for_each_block([&](std::string_view, const Vector& block) {
    for (double x : block) put_u64(out, std::bit_cast<std::uint64_t>(x));
  });

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

EmbeddingStore load_checkpoint(const std::filesystem::path& path,
                               std::optional<AnswerMode> expected_answers,
                               nlohmann::json* annotations) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());
  Reader in(bytes, path);

  const std::string magic = in.take(kMagic.size());
  if (!std::equal(kMagic.begin(), kMagic.end(), magic.begin())) {
    throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
  }
  const std::uint32_t version = in.u32();
  if (version != kFormatVersion) {
    throw CheckpointError(path.string() + ": unsupported format version " +
                          std::to_string(version));
  }
  const std::uint64_t header_size = in.u64();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.take(header_size));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  }

  EmbeddingStore s;
  try {
    s.num_entities_ = header.at("num_entities").get<std::size_t>();
    s.num_relations_ = header.at("num_relations").get<std::size_t>();
    s.dim_ = header.at("dim").get<std::size_t>();
    s.projection_mode_ = projection_mode_from_string(
        header.at("projection_mode").get<std::string>());
    s.answer_mode_ =
        answer_mode_from_string(header.at("answer_mode").get<std::string>());
    s.seed_ = header.at("seed").get<std::uint64_t>();
    s.init_gamma_ = header.at("init_gamma").get<double>();
    for (const auto& rel : header.at("relations")) {
      RelationInfo info;
      info.transitive = rel.at("transitive").get<bool>();
      const auto inv = rel.at("inverse_of").get<std::int64_t>();
      if (inv >= 0) info.inverse_of = static_cast<RelationId>(inv);
      s.relations_.push_back(info);
    }
    for (const auto& [key, value] : header.at("transitive_dims").items()) {
      s.transitive_dims_[static_cast<RelationId>(std::stoul(key))] =
          value.get<std::size_t>();
    }
    if (annotations) *annotations = header.value("annotations", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  } catch (const InvalidArgument& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  }
  if (s.relations_.size() != s.num_relations_) {
    throw CheckpointError(path.string() + ": relation table size mismatch");
  }
  if (expected_answers && *expected_answers != s.answer_mode_) {
    throw CheckpointError(
        path.string() + ": checkpoint has " +
        std::string(to_string(s.answer_mode_)) + " answers but config asks for " +
        std::string(to_string(*expected_answers)));
  }

  const std::size_t block = s.num_entities_ * s.dim_;
  s.params_.entity_centers.resize(block);
  s.params_.entity_offsets_raw.resize(block);
  if (s.answer_mode_ == AnswerMode::free) s.params_.answer_centers.resize(block);
  s.params_.relation_params.resize(s.num_relations_ * EmbeddingStore::kSlots *
                                   s.dim_);
  s.params_.for_each_block(
      [&](std::string_view, Vector& values) { in.doubles(values); });
  if (!in.at_end()) {
    throw CheckpointError(path.string() + ": trailing bytes after payload");
  }
  return s;
}

}  // namespace geometre
